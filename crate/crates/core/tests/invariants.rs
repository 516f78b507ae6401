use dcspde::fourier::{fourier_gamma, BoundConstants, Frequency};
use dcspde::noise::{draw_coefficients, GridSpec, NoiseModes};
use dcspde::solver::{cell_integral, l2_increment, FieldPoint, Increment};
use dcspde::spectral::{sc_integral, SpectralMeasureSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Γ ≥ 0 and ∫Γ(τ, ·) dy = τ, so |FΓ| ≤ τ
    #[test]
    fn transform_modulus_at_most_tau(tau in 0.01f64..2.0, x1 in -2.0f64..2.0, x2 in -1.0f64..1.0,
                                     r in 0.0f64..200.0, a in 0.0f64..std::f64::consts::TAU) {
        let v = fourier_gamma(tau, x1, x2, Frequency::new(r * a.cos(), r * a.sin()), 1e-10).unwrap();
        prop_assert!(v.norm() <= tau * (1.0 + 1e-9));
    }

    #[test]
    fn squared_envelope_dominates(tau in 0.05f64..2.0, x1 in -2.0f64..2.0,
                                  lr in -1.0f64..3.0, a in 0.0f64..std::f64::consts::TAU) {
        let c = BoundConstants::shipped().unwrap();
        let r = 10f64.powf(lr);
        let m = fourier_gamma(tau, x1, 0.0, Frequency::new(r * a.cos(), r * a.sin()), 1e-10).unwrap().norm();
        prop_assert!((1.0 + r.powf(2.0 / 3.0)) * m * m <= c.kappa_tilde(tau, x1));
    }

    #[test]
    fn cells_partition_the_kernel_mass(tau in 0.05f64..1.0, x1 in -1.0f64..1.0, x2 in -0.5f64..0.5,
                                       cut1 in 0.0f64..1.0, cut2 in -0.5f64..0.5) {
        let split = x1 + 2.0 * tau * cut1;
        let (lo, hi) = (-10.0, 10.0);
        let parts = [
            ((lo, split), (lo, cut2)),
            ((lo, split), (cut2, hi)),
            ((split, hi), (lo, cut2)),
            ((split, hi), (cut2, hi)),
        ];
        let total: f64 = parts.iter().map(|&(a, b)| cell_integral(tau, x1, x2, a, b, 1e-12).unwrap()).sum();
        prop_assert!((total - tau).abs() < 1e-9);
    }

    #[test]
    fn riesz_threshold(beta in 0.01f64..1.99) {
        let v = sc_integral(&SpectralMeasureSpec::RieszPower { beta }).unwrap();
        prop_assert_eq!(v.is_finite(), beta < 2.0 / 3.0);
    }

    #[test]
    fn lattice_covariance_is_even_and_peaked(h1 in -3.0f64..3.0, h2 in -3.0f64..3.0, beta in 0.2f64..0.6) {
        let g = GridSpec { dt: 0.1, t_steps: 1, x_extent: 4.0, n_modes: 16, seed: 1, n_cells: 8 };
        for mu in [SpectralMeasureSpec::RieszPower { beta }, SpectralMeasureSpec::GaussianDensity { ell: beta }] {
            let m = NoiseModes::new(&g, &mu).unwrap();
            let c = m.covariance((h1, h2));
            prop_assert!((c - m.covariance((-h1, -h2))).abs() <= 1e-12 * m.total_weight());
            prop_assert!(c.abs() <= m.covariance((0.0, 0.0)) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn draws_depend_only_on_their_key(seed in 0u64..1000, r in 0u64..10_000, k in 0u64..1000) {
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        draw_coefficients(seed, r, k, 5, &mut a);
        draw_coefficients(seed, r, k, 5, &mut b);
        draw_coefficients(seed, r, k + 1, 5, &mut c);
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a, &c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // the noise is homogeneous in x₂ and Γ depends on x₂ − y₂ only
    #[test]
    fn x2_increments_are_translation_invariant(shift in -1.0f64..1.0, d in 0.05f64..0.3) {
        let mu = SpectralMeasureSpec::GaussianDensity { ell: 1.0 };
        let a = FieldPoint::new(0.5, 0.3, 0.0);
        let b = FieldPoint::new(0.5, 0.3, shift);
        let va = l2_increment(Increment::X2(a.x2 + d), a, &mu, 1e-4).unwrap();
        let vb = l2_increment(Increment::X2(b.x2 + d), b, &mu, 1e-4).unwrap();
        prop_assert!((va - vb).abs() <= 2e-4 + 1e-3 * va, "{va} vs {vb}");
    }
}
