//! Property tests for the low-level machinery: factorizations, grid
//! arithmetic, and serialization.

use latticewave::bdf::{bdf_scheme, derivative_profile};
use latticewave::grid::{Extension, PeriodicField, ProfileFile, RationalCoupling, WaveProfile};
use latticewave::linalg::BandMatrix;
use latticewave::rational::{gcd, Ratio};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn band_lu_matches_dense(
        n in 4usize..40,
        kl in 0usize..4,
        ku in 0usize..4,
        seed in 0u64..1000,
    ) {
        use rand::Rng;
        let mut rng = latticewave::random::rng_from_seed(seed);
        let mut a = BandMatrix::zeros(n, kl, ku);
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n - 1);
            for i in lo..=hi {
                let mut v = rng.gen_range(-1.0..1.0);
                if i == j {
                    v += 3.0;
                }
                a.set(i, j, v);
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = a.factor().unwrap();
        let mut x = b.clone();
        lu.solve(&mut x);
        let dense: DMatrix<f64> = a.to_dense();
        let x_ref = dense.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            prop_assert!((x[i] - x_ref[i]).abs() < 1e-9);
        }
        let mut xt = b.clone();
        lu.solve_transpose(&mut xt);
        let xt_ref = dense.transpose().lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            prop_assert!((xt[i] - xt_ref[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_number_invariants(p in 1u32..600, q in 1u32..600) {
        prop_assume!(p >= q && gcd(p as u64, q as u64) == 1);
        let c = RationalCoupling::new(p, q).unwrap();
        // 1 = (n + theta) / M exactly
        let lhs = (Ratio::from_int(c.n() as i64) + c.theta()) * c.m_ratio().recip();
        prop_assert_eq!(lhs, Ratio::ONE);
        let theta = c.theta().to_f64();
        prop_assert!(theta > 0.0 && theta <= 1.0);
        // the fiber orbit visits every residue exactly once
        prop_assert_eq!(gcd(c.theta_num() as u64, q as u64), 1);
    }

    #[test]
    fn embedding_preserves_norms_and_seam(
        p in 2u32..12,
        q_index in 0usize..3,
        seed in 0u64..500,
    ) {
        use rand::Rng;
        let q = [1u32, 3, 5][q_index];
        prop_assume!(p >= q && gcd(p as u64, q as u64) == 1);
        let coupling = RationalCoupling::new(p, q).unwrap();
        let n = q as i64 * 10;
        let mut rng = latticewave::random::rng_from_seed(seed);
        let mut profile = WaveProfile::zeros(p, 1, n, Extension::ConstantLimits);
        for j in -n..=n {
            profile.set(j, 0, rng.gen_range(-1.0..1.0));
        }
        let field = PeriodicField::embed(profile.clone(), coupling).unwrap();
        prop_assert!((field.norm() - profile.norm_scaled()).abs() < 1e-13);
        for t in -field.t_half()..field.t_half() {
            prop_assert_eq!(field.value(q as i64, t, 0), field.value(0, t + 1, 0));
        }
    }

    #[test]
    fn profile_files_round_trip_bitwise(
        p in 1u32..10,
        n in 1i64..30,
        seed in 0u64..500,
    ) {
        use rand::Rng;
        let mut rng = latticewave::random::rng_from_seed(seed);
        let mut profile = WaveProfile::zeros(p, 2, n, Extension::Neumann)
            .with_limits(vec![rng.gen(), rng.gen()], vec![rng.gen(), rng.gen()]);
        for v in profile.values_mut() {
            *v = f64::from_bits(rng.gen::<u64>() & 0x7fefffffffffffff); // finite
        }
        let text = serde_json::to_string(&ProfileFile::from_profile(&profile, 1)).unwrap();
        let back: ProfileFile = serde_json::from_str(&text).unwrap();
        let restored = back.into_profile().unwrap();
        prop_assert_eq!(profile.values(), restored.values());
    }

    #[test]
    fn discrete_derivative_commutes_with_grid_shifts(
        k in 1usize..7,
        shift in -4i64..5,
        seed in 0u64..200,
    ) {
        use rand::Rng;
        let scheme = bdf_scheme(k).unwrap();
        let coupling = RationalCoupling::new(8, 5).unwrap();
        let n = 100i64;
        let mut rng = latticewave::random::rng_from_seed(seed);
        let mut profile = WaveProfile::zeros(8, 1, n, Extension::ConstantLimits);
        for j in -50..=50 {
            profile.set(j, 0, rng.gen_range(-1.0..1.0));
        }
        let d_then_shift = derivative_profile(&scheme, &coupling, &profile)
            .unwrap()
            .shifted(shift);
        let shift_then_d =
            derivative_profile(&scheme, &coupling, &profile.shifted(shift)).unwrap();
        for j in -40..=40 {
            prop_assert!(
                (d_then_shift.value(j, 0) - shift_then_d.value(j, 0)).abs() < 1e-12
            );
        }
    }
}
