use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use zifqr_core::basis::{BasisKind, BasisSystem};
use zifqr_core::grid::{Segmentation, TimeGrid};
use zifqr_core::mixedmodels::fit_random_intercept;
use zifqr_core::simlab::{compute_beta_metrics, compute_x_mise};
use zifqr_core::zicorrect::{estimate_pi_segment, segment_loglik};

fn kind() -> impl Strategy<Value = BasisKind> {
    prop_oneof![Just(BasisKind::BsplineCubic), Just(BasisKind::Cosine)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_linear(
        kind in kind(),
        k in 4usize..9,
        a in -3.0f64..3.0,
        u in prop::collection::vec(-5.0f64..5.0, 60),
        v in prop::collection::vec(-5.0f64..5.0, 60),
    ) {
        let grid = TimeGrid::equispaced(60).unwrap();
        let basis = BasisSystem::new(kind, k, &grid).unwrap();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
        let lhs = basis.project_full(&mix);
        let rhs = basis.project_full(&u) * a + basis.project_full(&v);
        prop_assert!((lhs - rhs).amax() < 1e-9);
    }

    #[test]
    fn in_span_curves_round_trip(kind in kind(), coeffs in prop::collection::vec(-4.0f64..4.0, 5)) {
        let grid = TimeGrid::equispaced(100).unwrap();
        let basis = BasisSystem::new(kind, 5, &grid).unwrap();
        let curve = basis.reconstruct(&DVector::from_vec(coeffs));
        let back = basis.reconstruct(&basis.project_full(&curve));
        for (a, b) in curve.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn segmentation_partitions_the_grid(mut cuts in prop::collection::vec(0.01f64..0.99, 0..6), len in 2usize..80) {
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let mut bounds = vec![0.0];
        bounds.extend(cuts);
        bounds.push(1.0);
        let seg = Segmentation::new(bounds.clone()).unwrap();
        let total: f64 = seg.lengths().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let grid = TimeGrid::equispaced(len).unwrap();
        for (&t, s) in grid.points().iter().zip(seg.assign(&grid)) {
            prop_assert!(s < seg.num_segments());
            prop_assert!(bounds[s] <= t && t <= bounds[s + 1]);
        }
    }

    #[test]
    fn blups_shrink_toward_the_overall_level(
        groups in prop::collection::vec(prop::collection::vec(0.0f64..20.0, 2..6), 3..12),
    ) {
        let fit = match fit_random_intercept(&groups) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        prop_assert!(fit.sigma_a2 >= 0.0 && fit.sigma_e2 >= 0.0);
        for (i, g) in groups.iter().enumerate() {
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            let (lo, hi) = if mean < fit.alpha0 { (mean, fit.alpha0) } else { (fit.alpha0, mean) };
            let blup = fit.alpha0 + fit.blups[i];
            prop_assert!(blup >= lo - 1e-9 && blup <= hi + 1e-9);
            prop_assert!((0.0..=1.0).contains(&fit.shrinkage[i]));
        }
    }

    #[test]
    fn zip_loglik_is_concave_in_pi(
        counts in prop::collection::vec(0u32..12, 2..30),
        x in 0.5f64..12.0,
        p in 0.02f64..0.96,
    ) {
        let w: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
        let xs = vec![x; w.len()];
        let h = 0.01;
        let d2 = segment_loglik(&w, &xs, p + h) - 2.0 * segment_loglik(&w, &xs, p) + segment_loglik(&w, &xs, p - h);
        prop_assert!(d2 <= 1e-9);
    }

    #[test]
    fn zip_mle_stays_in_range_and_maximises(
        counts in prop::collection::vec(0u32..12, 1..30),
        x in 0.5f64..12.0,
    ) {
        let w: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
        let xs = vec![x; w.len()];
        let p = estimate_pi_segment(&w, &xs, 0.99).unwrap();
        prop_assert!((0.0..=0.99).contains(&p));
        let best = segment_loglik(&w, &xs, p);
        for q in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            prop_assert!(best >= segment_loglik(&w, &xs, q) - 1e-9);
        }
    }

    #[test]
    fn mise_decomposes_exactly(values in prop::collection::vec(-2.0f64..2.0, 4 * 7)) {
        let est = DMatrix::from_row_slice(4, 7, &values);
        let truth: Vec<f64> = (0..7).map(|l| l as f64 * 0.1).collect();
        let m = compute_beta_metrics(&est, &truth).unwrap();
        prop_assert!(m.abias2 >= 0.0 && m.avar >= 0.0);
        prop_assert!((m.mise - (m.abias2 + m.avar)).abs() <= 1e-15 * m.mise.max(1.0));
    }

    #[test]
    fn x_mise_of_constant_offset(c in -3.0f64..3.0) {
        let x = DMatrix::from_fn(3, 5, |i, l| (i + l) as f64);
        let shifted = x.add_scalar(c);
        prop_assert!((compute_x_mise(&shifted, &x).unwrap() - c * c).abs() < 1e-12);
    }
}
