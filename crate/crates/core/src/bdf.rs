//! Backward differentiation formulas of orders 1 through 6 and the discrete
//! derivative operators they induce on rational lattices.
//!
//! Coefficients are kept as exact rationals and only converted to floating
//! point at application time, so the defining identities `sum mu = 0` and
//! `beta = sum n mu_n` can be checked without rounding.

use crate::error::{Error, Result};
use crate::grid::{RationalCoupling, WaveProfile};
use crate::rational::Ratio;

/// One implicit multistep scheme: order `k`, weights `mu_0..mu_k`, and the
/// normalizer `beta`.
#[derive(Clone, Debug)]
pub struct BdfScheme {
    k: usize,
    mu: Vec<Ratio>,
    beta: Ratio,
    mu_f: Vec<f64>,
    beta_f: f64,
}

/// Exact coefficient table for the six schemes: weights as
/// (numerator, denominator) pairs plus the normalizer.
type SchemeRow = (&'static [(i64, i64)], (i64, i64));
const TABLE: [SchemeRow; 6] = [
    (&[(-1, 1), (1, 1)], (1, 1)),
    (&[(1, 3), (-4, 3), (1, 1)], (2, 3)),
    (&[(-2, 11), (9, 11), (-18, 11), (1, 1)], (6, 11)),
    (&[(3, 25), (-16, 25), (36, 25), (-48, 25), (1, 1)], (12, 25)),
    (
        &[
            (-12, 137),
            (75, 137),
            (-200, 137),
            (300, 137),
            (-300, 137),
            (1, 1),
        ],
        (60, 137),
    ),
    (
        &[
            (10, 147),
            (-72, 147),
            (225, 147),
            (-400, 147),
            (450, 147),
            (-360, 147),
            (1, 1),
        ],
        (60, 147),
    ),
];

pub fn bdf_scheme(k: usize) -> Result<BdfScheme> {
    if !(1..=6).contains(&k) {
        return Err(Error::InvalidParameter(format!(
            "scheme order {k} outside 1..=6"
        )));
    }
    let (mu_raw, beta_raw) = TABLE[k - 1];
    let mu: Vec<Ratio> = mu_raw.iter().map(|&(n, d)| Ratio::new(n, d)).collect();
    let beta = Ratio::new(beta_raw.0, beta_raw.1);
    let mu_f = mu.iter().map(Ratio::to_f64).collect();
    Ok(BdfScheme {
        k,
        beta_f: beta.to_f64(),
        mu,
        beta,
        mu_f,
    })
}

impl BdfScheme {
    pub fn order(&self) -> usize {
        self.k
    }

    pub fn mu(&self) -> &[Ratio] {
        &self.mu
    }

    pub fn beta(&self) -> Ratio {
        self.beta
    }

    pub fn mu_f64(&self) -> &[f64] {
        &self.mu_f
    }

    pub fn beta_f64(&self) -> f64 {
        self.beta_f
    }

    /// Weight of the sample `Phi(xi - (k - n') / M)` in `D_{k,M}`, without
    /// the `M / beta` prefactor.
    pub fn weight(&self, n_prime: usize) -> f64 {
        self.mu_f[n_prime]
    }
}

fn step_for(profile: &WaveProfile, coupling: &RationalCoupling) -> Result<i64> {
    if !profile.p().is_multiple_of(coupling.p()) {
        return Err(Error::GridMismatch(format!(
            "grid density {} does not resolve M^-1 = {}/{}",
            profile.p(),
            coupling.q(),
            coupling.p()
        )));
    }
    Ok((coupling.q() * (profile.p() / coupling.p())) as i64)
}

/// `[D_{k,M} Phi](xi) = beta^{-1} M sum_{n'} mu_{n'} Phi(xi - (k - n')/M)`
/// evaluated at grid index `at`.
pub fn discrete_derivative(
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    profile: &WaveProfile,
    at: i64,
) -> Result<Vec<f64>> {
    let step = step_for(profile, coupling)?;
    let scale = coupling.m() / scheme.beta_f64();
    let k = scheme.order();
    let mut out = vec![0.0; profile.d()];
    for (n_prime, &mu) in scheme.mu_f64().iter().enumerate() {
        let j = at - (k - n_prime) as i64 * step;
        for (c, o) in out.iter_mut().enumerate() {
            *o += mu * profile.value(j, c);
        }
    }
    for o in out.iter_mut() {
        *o *= scale;
    }
    Ok(out)
}

/// Forward-shift mirror `[D*_{k,M} Phi](xi) = beta^{-1} M sum_{n'} mu_{n'}
/// Phi(xi + (k - n')/M)`.
pub fn adjoint_discrete_derivative(
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    profile: &WaveProfile,
    at: i64,
) -> Result<Vec<f64>> {
    let step = step_for(profile, coupling)?;
    let scale = coupling.m() / scheme.beta_f64();
    let k = scheme.order();
    let mut out = vec![0.0; profile.d()];
    for (n_prime, &mu) in scheme.mu_f64().iter().enumerate() {
        let j = at + (k - n_prime) as i64 * step;
        for (c, o) in out.iter_mut().enumerate() {
            *o += mu * profile.value(j, c);
        }
    }
    for o in out.iter_mut() {
        *o *= scale;
    }
    Ok(out)
}

/// Apply the discrete derivative at every window point.
pub fn derivative_profile(
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    profile: &WaveProfile,
) -> Result<WaveProfile> {
    let mut out = profile.clone().with_limits(
        vec![0.0; profile.d()],
        vec![0.0; profile.d()],
    );
    for j in -profile.n_half()..=profile.n_half() {
        let v = discrete_derivative(scheme, coupling, profile, j)?;
        for (c, val) in v.into_iter().enumerate() {
            out.set(j, c, val);
        }
    }
    Ok(out)
}

/// Adjoint analogue of [`derivative_profile`].
pub fn adjoint_derivative_profile(
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    profile: &WaveProfile,
) -> Result<WaveProfile> {
    let mut out = profile.clone().with_limits(
        vec![0.0; profile.d()],
        vec![0.0; profile.d()],
    );
    for j in -profile.n_half()..=profile.n_half() {
        let v = adjoint_discrete_derivative(scheme, coupling, profile, j)?;
        for (c, val) in v.into_iter().enumerate() {
            out.set(j, c, val);
        }
    }
    Ok(out)
}

/// Sup error of the discrete derivative against the analytic derivative of a
/// scalar test function, per value of `M`. The slope of `log(err)` against
/// `log(M)` estimates the convergence order.
pub fn convergence_order_probe<F, G>(
    scheme: &BdfScheme,
    f: F,
    f_prime: G,
    m_list: &[f64],
    window: f64,
    samples: usize,
) -> Vec<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let k = scheme.order();
    let scale_base = 1.0 / scheme.beta_f64();
    m_list
        .iter()
        .map(|&m| {
            let mut sup = 0.0f64;
            for s in 0..samples {
                let xi = -window + 2.0 * window * s as f64 / (samples - 1) as f64;
                let mut acc = 0.0;
                for (n_prime, &mu) in scheme.mu_f64().iter().enumerate() {
                    acc += mu * f(xi - (k - n_prime) as f64 / m);
                }
                let approx = scale_base * m * acc;
                sup = sup.max((approx - f_prime(xi)).abs());
            }
            sup
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn fit_linear_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.max(1e-300).ln()).collect();
    fit_linear_slope(&lx, &ly)
}

/// Scaled distance `p^{-1} sum [|a-b|^2 + |D a - D b|^2]` used as the
/// uniqueness metric for computed waves.
pub fn scaled_metric(
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    a: &WaveProfile,
    b: &WaveProfile,
) -> Result<f64> {
    let diff = a.difference(b)?;
    let ddiff = derivative_profile(scheme, coupling, &diff)?;
    let p = a.p() as f64;
    Ok(diff.inner_scaled(&diff, p)? + ddiff.inner_scaled(&ddiff, p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Extension;

    #[test]
    fn table_identities_hold_exactly() {
        for k in 1..=6 {
            let scheme = bdf_scheme(k).unwrap();
            let sum = scheme
                .mu()
                .iter()
                .fold(Ratio::ZERO, |acc, &m| acc + m);
            assert_eq!(sum, Ratio::ZERO, "sum mu != 0 for k = {k}");
            let beta = scheme
                .mu()
                .iter()
                .enumerate()
                .fold(Ratio::ZERO, |acc, (n, &m)| {
                    acc + m * Ratio::from_int(n as i64)
                });
            assert_eq!(beta, scheme.beta(), "beta identity fails for k = {k}");
        }
        assert!(bdf_scheme(0).is_err());
        assert!(bdf_scheme(7).is_err());
    }

    #[test]
    fn table_spot_values() {
        let s1 = bdf_scheme(1).unwrap();
        assert_eq!(s1.mu(), &[Ratio::new(-1, 1), Ratio::ONE]);
        assert_eq!(s1.beta(), Ratio::ONE);

        let s2 = bdf_scheme(2).unwrap();
        assert_eq!(
            s2.mu(),
            &[Ratio::new(1, 3), Ratio::new(-4, 3), Ratio::ONE]
        );
        assert_eq!(s2.beta(), Ratio::new(2, 3));

        let s6 = bdf_scheme(6).unwrap();
        assert_eq!(
            s6.mu(),
            &[
                Ratio::new(10, 147),
                Ratio::new(-72, 147),
                Ratio::new(225, 147),
                Ratio::new(-400, 147),
                Ratio::new(450, 147),
                Ratio::new(-360, 147),
                Ratio::ONE
            ]
        );
        assert_eq!(s6.beta(), Ratio::new(60, 147));
    }

    #[test]
    fn derivative_on_constants_and_affine() {
        for (p, q) in [(4u32, 1u32), (8, 5)] {
            let coupling = RationalCoupling::new(p, q).unwrap();
            let constant =
                WaveProfile::restrict(p, 1, 60, Extension::ConstantLimits, |_, _| 2.5)
                    .with_limits(vec![2.5], vec![2.5]);
            let affine = WaveProfile::restrict(p, 1, 60, Extension::Linear, |x, _| x);
            for k in 1..=6 {
                let scheme = bdf_scheme(k).unwrap();
                let dc = discrete_derivative(&scheme, &coupling, &constant, 3).unwrap();
                assert!(dc[0].abs() < 1e-13);
                let da = discrete_derivative(&scheme, &coupling, &affine, 0).unwrap();
                assert!((da[0] - 1.0).abs() < 1e-13, "k={k}: {}", da[0]);
                let da_star =
                    adjoint_discrete_derivative(&scheme, &coupling, &affine, 0).unwrap();
                assert!((da_star[0] + 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn quadratic_value_checked_by_hand() {
        // k = 2, M = 4, Phi = xi^2 at xi = 0:
        // beta^{-1} M [mu_0 (1/2)^2 + mu_1 (1/4)^2 + mu_2 * 0]
        //   = (3/2) * 4 * (1/3 * 1/16 * 4 - 4/3 * 1/16) = 0
        let coupling = RationalCoupling::new(4, 1).unwrap();
        let scheme = bdf_scheme(2).unwrap();
        let sq = WaveProfile::restrict(4, 1, 40, Extension::Linear, |x, _| x * x);
        let v = discrete_derivative(&scheme, &coupling, &sq, 0).unwrap();
        assert!(v[0].abs() < 1e-14);
    }

    #[test]
    fn polynomial_exactness_up_to_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for k in 1..=6 {
            let scheme = bdf_scheme(k).unwrap();
            // normalize so values stay O(1) over the stencil span
            let coeffs: Vec<f64> = (0..=k)
                .map(|i| rng.gen_range(-1.0..1.0) / 3f64.powi(i as i32))
                .collect();
            let poly = |x: f64| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * x.powi(i as i32))
                    .sum::<f64>()
            };
            let dpoly = |x: f64| {
                coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, c)| i as f64 * c * x.powi(i as i32 - 1))
                    .sum::<f64>()
            };
            for (p, q) in [(2u32, 1u32), (8, 5)] {
                let coupling = RationalCoupling::new(p, q).unwrap();
                let profile = WaveProfile::restrict(p, 1, 64, Extension::Linear, |x, _| poly(x));
                // evaluation points within |xi| <= 2 keep the degree-6 terms
                // of order one; the stencil stays well inside the window
                let pi = p as i64;
                for j in [-2 * pi, -pi, 0, pi / 2, 2 * pi] {
                    let v = discrete_derivative(&scheme, &coupling, &profile, j).unwrap();
                    assert!(
                        (v[0] - dpoly(profile.xi(j))).abs() < 1e-12,
                        "k={k}, (p,q)=({p},{q}), j={j}"
                    );
                }
            }
        }
    }

    #[test]
    fn summation_by_parts_adjointness() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let coupling = RationalCoupling::new(8, 5).unwrap();
        for k in [1usize, 2, 6] {
            let scheme = bdf_scheme(k).unwrap();
            let mut phi = WaveProfile::zeros(8, 2, 120, Extension::ConstantLimits);
            let mut psi = phi.clone();
            // compact support well inside the window
            for j in -60..=60 {
                for c in 0..2 {
                    phi.set(j, c, rng.gen_range(-1.0..1.0));
                    psi.set(j, c, rng.gen_range(-1.0..1.0));
                }
            }
            let dphi = derivative_profile(&scheme, &coupling, &phi).unwrap();
            let dpsi = adjoint_derivative_profile(&scheme, &coupling, &psi).unwrap();
            let lhs = dphi.inner_scaled(&psi, 8.0).unwrap();
            let rhs = phi.inner_scaled(&dpsi, 8.0).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "k={k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn scaled_metric_separates_profiles() {
        let coupling = RationalCoupling::new(8, 5).unwrap();
        let scheme = bdf_scheme(2).unwrap();
        let a = WaveProfile::restrict(8, 1, 60, Extension::ConstantLimits, |x, _| {
            (0.3 * x).tanh()
        });
        assert_eq!(scaled_metric(&scheme, &coupling, &a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 1e-3);
        let dist = scaled_metric(&scheme, &coupling, &a, &b).unwrap();
        // at least the value part of the constant offset, plus whatever the
        // window boundary contributes to the derivative part
        let points = a.num_points() as f64;
        assert!(dist >= 1e-6 * points / 8.0 - 1e-15);
        let shifted = a.shifted(3);
        assert!(scaled_metric(&scheme, &coupling, &a, &shifted).unwrap() > 0.0);
    }

    #[test]
    fn convergence_orders_on_sine() {
        let ms = [4.0, 8.0, 16.0, 32.0];
        for k in [1usize, 2] {
            let scheme = bdf_scheme(k).unwrap();
            let errs = convergence_order_probe(&scheme, f64::sin, f64::cos, &ms, 2.0, 41);
            let slope = fit_loglog_slope(&ms, &errs);
            assert!(
                (-slope - k as f64).abs() < 0.1,
                "k={k}: slope {slope}, errs {errs:?}"
            );
        }
        // exactness on affine data regardless of M
        let scheme = bdf_scheme(3).unwrap();
        let errs = convergence_order_probe(&scheme, |x| x, |_| 1.0, &ms, 2.0, 41);
        assert!(errs.iter().all(|&e| e < 1e-13));
    }
}
