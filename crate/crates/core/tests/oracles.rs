//! Library results checked against brute force and against nalgebra.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segfit::estimators::{fit_exact_dp, fit_restricted_dp};
use segfit::linalg::{build_error_table, least_squares, GramState, SegmentStats};
use segfit::merging::{postprocess, select_top_errors, CandidatePair};
use segfit::synth::{generate, vandermonde_embed, ScenarioKind, ScenarioSpec};
use segfit::{DataSet, Partition};

fn ridged_gram(ds: &DataSet, r: std::ops::Range<usize>) -> DMatrix<f64> {
    let (x, _) = design(ds, r);
    let mut g = x.transpose() * &x;
    for (j, l) in ds.ridge().iter().enumerate() {
        g[(j, j)] += l;
    }
    g
}

#[test]
fn dp_equals_exhaustive_search() {
    for seed in 0..30 {
        let n = 6 + (seed as usize % 8);
        let d = 1 + (seed as usize % 2);
        let ds = small_dataset(seed, n, d);
        for k in 1..=3 {
            let got = fit_exact_dp(&ds, k).unwrap().sse;
            let want = best_partition_sse(&ds, k);
            assert!(
                (got - want).abs() <= 1e-8 * want.max(1e-12) + 1e-12,
                "seed {seed} n {n} d {d} k {k}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn direct_solve_matches_nalgebra() {
    let ds = gaussian_dataset(11, 20, 3);
    let fit = least_squares(&ds, 0..20).unwrap();
    let (x, y) = design(&ds, 0..20);
    let theta = (x.transpose() * &x)
        .lu()
        .solve(&(x.transpose() * &y))
        .unwrap();
    for j in 0..3 {
        assert!(
            rel_close(fit.theta[j], theta[j], 1e-8),
            "{:?} vs {theta}",
            fit.theta
        );
    }
    assert!(rel_close(fit.sse, segment_sse(&ds, 0..20), 1e-10));
}

#[test]
fn seeded_chain_tracks_direct_inverse() {
    let ds = gaussian_dataset(5, 120, 5);
    let mut s = GramState::from_stats(ds.ridge(), &SegmentStats::from_range(&ds, 0..5)).unwrap();
    for end in 5..120 {
        s.absorb(ds.row(end), ds.y()[end]).unwrap();
        let inv = ridged_gram(&ds, 0..end + 1).try_inverse().unwrap();
        let scale = inv.abs().max();
        for a in 0..5 {
            for b in 0..5 {
                assert!((s.gram_inv()[a * 5 + b] - inv[(a, b)]).abs() <= 1e-9 * scale);
            }
        }
        assert!(rel_close(s.error(), segment_sse(&ds, 0..end + 1), 1e-9));
    }
}

#[test]
fn table_matches_per_interval_svd() {
    let ds = small_dataset(4, 12, 2);
    let table = build_error_table(&ds).unwrap();
    for a in 0..12 {
        for b in a + 1..=12 {
            let want = segment_sse(&ds, a..b);
            let got = table.get(a, b);
            assert!(
                (got - want).abs() <= 1e-8 * want + 1e-9,
                "[{a},{b}): {got} vs {want}"
            );
        }
    }
}

#[test]
fn postprocess_equals_exhaustive_subset_search() {
    for seed in 0..5 {
        let ds = small_dataset(100 + seed, 60, 2);
        let coarse = Partition::new((0..=12).map(|i| i * 5).collect()).unwrap();
        let report = postprocess(&ds, &coarse, 2).unwrap();
        assert_eq!(report.model.piece_count(), 5);
        let want = best_restricted_sse(&ds, coarse.interior_cuts(), 5);
        assert!(
            (report.sse - want).abs() <= 1e-8 * want.max(1.0),
            "{} vs {want}",
            report.sse
        );
        assert!(report
            .model
            .partition()
            .interior_cuts()
            .iter()
            .all(|c| c % 5 == 0));
    }
}

#[test]
fn restricted_dp_with_every_cut_equals_exhaustive() {
    let ds = small_dataset(9, 11, 1);
    let all: Vec<usize> = (1..11).collect();
    let got = fit_restricted_dp(&ds, &all, 3).unwrap().sse;
    let want = best_partition_sse(&ds, 3);
    assert!((got - want).abs() <= 1e-8 * want.max(1.0));
}

#[test]
fn vandermonde_has_full_column_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (ds, _) = vandermonde_embed(&x, vec![0.0; 10], 3).unwrap();
    let (m, _) = design(&ds, 0..10);
    assert_eq!(m.rank(1e-10), 4);
    let (m, _) = design(
        &vandermonde_embed(&[0.5; 6], vec![0.0; 6], 3).unwrap().0,
        0..6,
    );
    assert_eq!(m.rank(1e-10), 1);
}

#[test]
fn top_selection_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cands: Vec<CandidatePair> = (0..100)
        .map(|u| CandidatePair {
            left: 2 * u,
            right: 2 * u + 1,
            merged_interval: 4 * u..4 * u + 4,
            error: rng.random_range(-5.0..5.0),
        })
        .collect();
    let sel = select_top_errors(&cands, 17);
    let mut order: Vec<usize> = (0..100).collect();
    order.sort_by(|&a, &b| cands[b].error.total_cmp(&cands[a].error).then(a.cmp(&b)));
    let mut top = order[..17].to_vec();
    top.sort_unstable();
    assert_eq!(sel.kept, top);
    assert_eq!(sel.merged.len(), 83);
}

#[test]
fn noise_has_requested_moments() {
    let n = 100_000;
    let sigma = 1.5;
    let spec = ScenarioSpec::new(ScenarioKind::PiecewiseConstant, 1, n, 1, sigma, 21);
    let inst = generate(&spec).unwrap();
    let eps: Vec<f64> = inst
        .dataset
        .y()
        .iter()
        .zip(&inst.truth_values)
        .map(|(y, f)| y - f)
        .collect();
    let mean = eps.iter().sum::<f64>() / n as f64;
    let var = eps.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n as f64;
    assert!(mean.abs() <= 4.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    assert!((var / (sigma * sigma) - 1.0).abs() <= 0.1, "var {var}");
}

#[test]
fn misspecified_truth_is_within_budget_of_k_pieces() {
    for budget in [0.01, 0.1, 1.0] {
        let spec = ScenarioSpec {
            misspec_budget: budget,
            ..ScenarioSpec::new(ScenarioKind::Misspecified, 3, 150, 2, 0.0, 2)
        };
        let inst = generate(&spec).unwrap();
        assert!(rel_close(inst.opt_k, budget, 1e-9));
        let noiseless = inst
            .dataset
            .with_responses(inst.truth_values.clone())
            .unwrap();
        let best = fit_exact_dp(&noiseless, 3).unwrap().sse / 150.0;
        assert!(best <= inst.opt_k + 1e-9, "{best} > {}", inst.opt_k);
        let offsets = DVector::from_iterator(
            150,
            inst.truth_values
                .iter()
                .zip(inst.truth_model.predict(&noiseless).unwrap())
                .map(|(t, p)| t - p),
        );
        assert!(rel_close(offsets.norm_squared() / 150.0, budget, 1e-9));
    }
}
