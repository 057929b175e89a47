//! Randomized invariants across modules.

use proptest::prelude::*;

use crate::continuation::{Branch, BranchOrigin, Termination};
use crate::diagram::{self, CsvSource};
use crate::discretize::{DenseSymmetric, Scheme, Tridiagonal};
use crate::eigen::{dense, tridiagonal};
use crate::eigencurve::CurveModel;
use crate::nonlinear::{SolutionRecord, StateVector};
use crate::weights::WeightFunction;

fn tridiagonal_strategy() -> impl Strategy<Value = Tridiagonal> {
    (3usize..24).prop_flat_map(|n| {
        (prop::collection::vec(-50.0f64..50.0, n), prop::collection::vec(-10.0f64..10.0, n - 1))
            .prop_map(|(d, e)| Tridiagonal::new(d, e))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn even_sine_weights_are_odd_about_the_midpoint(k in 1u32..8, x in 0.0f64..=1.0) {
        let m = WeightFunction::sine(2 * k);
        prop_assert!((m.at(x) + m.at(1.0 - x)).abs() < 1e-12);
        prop_assert!(m.is_odd_about_half(1e-12));
    }

    #[test]
    fn sturm_count_brackets_each_bisected_eigenvalue(t in tridiagonal_strategy()) {
        let values = tridiagonal::lowest(&t, t.dim(), 1e-12).unwrap();
        for (i, &v) in values.iter().enumerate() {
            let scale = 1e-8 * (1.0 + v.abs());
            prop_assert!(tridiagonal::sturm_count(&t, v - scale) <= i);
            prop_assert!(tridiagonal::sturm_count(&t, v + scale) > i);
        }
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        let trace: f64 = t.diag.iter().sum();
        prop_assert!((values.iter().sum::<f64>() - trace).abs() < 1e-8 * (1.0 + trace.abs() + t.norm_inf() * t.dim() as f64));
    }

    #[test]
    fn householder_preserves_the_spectrum(t in tridiagonal_strategy()) {
        let n = t.dim();
        let mut a = DenseSymmetric::zeros(n);
        for i in 0..n {
            a.set(i, i, t.diag[i]);
            if i + 1 < n {
                a.set(i, i + 1, t.off[i]);
                a.set(i + 1, i, t.off[i]);
            }
        }
        let back = dense::householder_tridiagonal(&a);
        let x = tridiagonal::lowest(&t, n, 1e-12).unwrap();
        let y = tridiagonal::lowest(&back, n, 1e-12).unwrap();
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-9 * (1.0 + t.norm_inf()));
        }
    }

    #[test]
    fn eigencurves_are_ordered_and_even(lambda in -150.0f64..150.0) {
        let model = CurveModel::new(WeightFunction::sine(2), Scheme::Spectral { n_modes: 32 }).unwrap();
        let plus = model.sigmas(4, lambda).unwrap();
        let minus = model.sigmas(4, -lambda).unwrap();
        prop_assert!(plus.windows(2).all(|w| w[0] < w[1]));
        for (p, q) in plus.iter().zip(&minus) {
            prop_assert!((p - q).abs() <= 1e-8 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn reflection_is_an_involution(u in prop::collection::vec(-5.0f64..5.0, 1..40), lambda in -100.0f64..100.0) {
        let s = StateVector { u, lambda, mu: 3.0 };
        prop_assert_eq!(s.reflected().reflected(), s);
    }

    #[test]
    fn branch_csv_round_trips(points in prop::collection::vec((-1e3f64..1e3, 0.0f64..1e3, 0usize..4, 0.0f64..1e-9), 1..30), mu in -200.0f64..200.0) {
        let branch = Branch {
            id: "prop".into(),
            mu,
            origin: BranchOrigin::Manual,
            points: points
                .iter()
                .map(|&(lambda, l2, nodes, residual)| SolutionRecord {
                    state: StateVector { u: vec![0.0], lambda, mu },
                    l2,
                    node_count: nodes,
                    residual,
                    scaled_residual: residual,
                    stability_hint: nodes,
                    iterations: 1,
                })
                .collect(),
            termination: Termination::MaxPoints,
            backward_termination: None,
            notes: Vec::new(),
        };
        let rows = diagram::parse_branch_csv(&diagram::to_csv(CsvSource::Branch(&branch)).unwrap()).unwrap();
        for (r, &(lambda, l2, nodes, residual)) in rows.iter().zip(&points) {
            for (a, b) in [(r.lambda, lambda), (r.l2, l2), (r.residual, residual), (r.mu, mu)] {
                prop_assert!((a - b).abs() <= 5e-12 * b.abs());
            }
            prop_assert_eq!(r.nodes, nodes);
        }
    }

    #[test]
    fn ticks_lie_in_the_range(lo in -1e4f64..1e4, width in 1e-3f64..1e4) {
        let hi = lo + width;
        let ticks = diagram::nice_ticks(lo, hi, 6);
        prop_assert!(!ticks.is_empty() || width < 1e-2);
        prop_assert!(ticks.iter().all(|&t| t >= lo - 1e-9 * width && t <= hi + 1e-9 * width));
        prop_assert!(ticks.windows(2).all(|w| w[0] < w[1]));
    }
}
