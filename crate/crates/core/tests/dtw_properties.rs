//! Property tests of the DTW kernels against independent oracles.

mod common;

use common::{enumerate_dtw, min_over_starts};
use proptest::prelude::*;
use pulsedtw::dtw::{dtw_full, traceback, Band, SpringState};

fn series(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_dtw_matches_path_enumeration(x in series(8), y in series(8)) {
        let got = dtw_full(&x, &y, Band::Unconstrained).unwrap().final_cost();
        let expected = enumerate_dtw(&x, &y);
        prop_assert!((got - expected).abs() < 1e-9, "got {got}, enumeration {expected}");
    }

    #[test]
    fn widening_the_band_never_raises_the_cost(x in series(10), y in series(10)) {
        let gap = x.len().abs_diff(y.len());
        let mut last = f64::INFINITY;
        for w in [gap, gap + 1, gap + 3, gap + 10] {
            let cost = dtw_full(&x, &y, Band::SakoeChiba(w)).unwrap().final_cost();
            prop_assert!(cost <= last + 1e-12, "cost rose from {last} to {cost} at width {w}");
            last = cost;
        }
        let unconstrained = dtw_full(&x, &y, Band::Unconstrained).unwrap().final_cost();
        prop_assert!(unconstrained <= last + 1e-12);
    }

    #[test]
    fn traceback_cost_equals_endpoint_cell(x in series(12), y in series(12)) {
        let matrix = dtw_full(&x, &y, Band::Unconstrained).unwrap();
        let path = traceback(&matrix, x.len() - 1).unwrap();
        prop_assert_eq!(path.cost, matrix.final_cost());

        // Re-summing the pairwise terms along the path reproduces the cost.
        let resummed: f64 = path.pairs.iter().map(|&(t, i)| (x[t] - y[i]).abs()).sum();
        prop_assert!((resummed - path.cost).abs() < 1e-9);

        // Structural invariants: endpoints and step shape.
        prop_assert_eq!(path.pairs[0], (0, 0));
        prop_assert_eq!(path.end(), (x.len() - 1, y.len() - 1));
        for w in path.pairs.windows(2) {
            let (dt, di) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            prop_assert!(dt <= 1 && di <= 1 && dt + di >= 1);
        }
    }

    #[test]
    fn accumulated_cells_are_non_negative(x in series(10), y in series(10)) {
        let matrix = dtw_full(&x, &y, Band::Unconstrained).unwrap();
        for t in 0..x.len() {
            for i in 0..y.len() {
                prop_assert!(matrix.get(t, i) >= 0.0);
            }
        }
    }

    #[test]
    fn zero_cost_paths_are_pointwise_identical(x in series(10)) {
        let matrix = dtw_full(&x, &x, Band::Unconstrained).unwrap();
        let path = traceback(&matrix, x.len() - 1).unwrap();
        prop_assert_eq!(path.cost, 0.0);
        for &(t, i) in &path.pairs {
            prop_assert_eq!(x[t], x[i]);
        }
    }

    #[test]
    fn spring_matches_min_over_starts(
        stream in series(40),
        template in prop::collection::vec(-1.0f64..1.0, 1..=10),
    ) {
        let oracle = min_over_starts(&stream, &template);
        let mut spring = SpringState::new(template.len());
        for (t, &v) in stream.iter().enumerate() {
            spring.update(v, &template);
            prop_assert!(
                (spring.best_cost() - oracle[t]).abs() < 1e-9,
                "t={t}: streaming {} vs oracle {}",
                spring.best_cost(),
                oracle[t]
            );
        }
    }
}

#[test]
fn spring_start_indices_point_at_optimal_windows() {
    // The reported start must reproduce the reported cost when the window
    // is re-aligned in full.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let n = rng.random_range(10..60);
        let m = rng.random_range(2..8);
        let stream: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let template: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut spring = SpringState::new(m);
        for (t, &v) in stream.iter().enumerate() {
            spring.update(v, &template);
            let s = spring.best_start();
            assert!(s <= t);
            let direct = dtw_full(&stream[s..=t], &template, Band::Unconstrained)
                .unwrap()
                .final_cost();
            assert!(
                (direct - spring.best_cost()).abs() < 1e-9,
                "window [{s}, {t}] cost {direct} vs streaming {}",
                spring.best_cost()
            );
        }
    }
}
