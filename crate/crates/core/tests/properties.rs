//! Randomized invariants of the numerical building blocks.

use itogen::estimators::{estimate_instant, psd_sqrt, truncate};
use itogen::losses::{build_targets, loss_psi, Scheme};
use itogen::path_sim::{observe_with, simulate, split_indices, ObservationScheme, SdeSpec};
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncated_coefficients_stay_in_bounds(mu in prop::collection::vec(-50.0f64..50.0, 2), g in prop::collection::vec(-6.0f64..6.0, 4), k in 0.5f64..20.0) {
        let est = truncate(estimate_instant(&mu, &g, 1e9).unwrap(), k).unwrap();
        prop_assert!(est.mu_hat.iter().chain(&est.sigma_hat).all(|v| v.abs() <= k));
        let r = &est.sqrt_sigma;
        // the applied square root reproduces the PSD part of the applied matrix
        let (root, _) = psd_sqrt(&est.sigma_hat, 2).unwrap();
        if est.truncated_sigma {
            prop_assert_eq!(r, &root);
        }
    }

    #[test]
    fn split_is_a_partition(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let (a, b) = split_indices(n, frac, seed).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(!a.is_empty() && !b.is_empty());
    }

    #[test]
    fn observations_are_on_the_grid_and_start_at_zero(p in 0.0f64..1.0, coord_p in prop::option::of(0.1f64..1.0), seed in 0u64..1000) {
        let spec = SdeSpec { dim: 2, x0: vec![1.0, 2.0], ..SdeSpec::ou(1.0, 0.0, 0.5, 1.0) };
        let ds = simulate(&spec, 1.0, 0.05, 5, seed).unwrap();
        for (i, o) in observe_with(&ds, ObservationScheme { p, coord_p }, seed).unwrap().iter().enumerate() {
            prop_assert_eq!(o.indices[0], 0);
            prop_assert!(o.indices.windows(2).all(|w| w[0] < w[1]));
            for k in 0..o.len() {
                prop_assert!(o.mask(k).iter().any(|&m| m));
                for c in 0..2 {
                    if o.mask(k)[c] {
                        prop_assert_eq!(o.value(k)[c], ds.value(i, o.indices[k])[c]);
                    }
                }
            }
        }
    }

    #[test]
    fn psi_is_non_negative_and_vanishes_on_targets(vals in prop::collection::vec(-5.0f64..5.0, 24)) {
        let m = |o: usize| Array2::from_shape_vec((3, 2), vals[o..o + 6].to_vec()).unwrap();
        let mask = Array2::ones((3, 2));
        let w = [0.5, 0.25, 0.25];
        prop_assert!(loss_psi(&m(0), &m(6), &m(12), &m(18), &mask, &w).unwrap() >= 0.0);
        prop_assert_eq!(loss_psi(&m(0), &m(6), &m(0), &m(6), &mask, &w).unwrap(), 0.0);
    }

    #[test]
    fn event_weights_average_over_paths(seed in 0u64..500) {
        let ds = simulate(&SdeSpec::gbm(1.0, 0.2, 1.0), 1.0, 0.05, 12, seed).unwrap();
        let obs = observe_with(&ds, ObservationScheme::joint(0.3), seed).unwrap();
        let refs: Vec<_> = obs.iter().collect();
        let t = build_targets(&refs, Scheme::JointInstant).unwrap();
        if !t.is_empty() {
            let total: f64 = t.weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
