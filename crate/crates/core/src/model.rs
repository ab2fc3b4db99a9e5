//! Reaction nonlinearities, their Jacobians, equilibria, and the structural
//! condition checkers on the equilibrium Jacobians.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::fmt;
use std::sync::Arc;

type FieldFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// A reaction term `G(U; r)` with its closed-form Jacobian and the two
/// `r`-independent equilibria it connects. Supplying `G` and `DG` as paired
/// closures (rather than differentiating automatically) keeps custom models
/// checkable against finite differences.
#[derive(Clone)]
pub struct ReactionModel {
    name: String,
    d: usize,
    d_diff: usize,
    g: FieldFn,
    dg: FieldFn,
    p_minus: Vec<f64>,
    p_plus: Vec<f64>,
    gamma_cross: Option<f64>,
}

impl fmt::Debug for ReactionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionModel")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("d_diff", &self.d_diff)
            .field("p_minus", &self.p_minus)
            .field("p_plus", &self.p_plus)
            .finish()
    }
}

impl ReactionModel {
    /// Extension point for user-supplied nonlinearities. `g` writes the
    /// reaction into its output slice; `dg` writes the row-major `d x d`
    /// Jacobian.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: impl Into<String>,
        d: usize,
        d_diff: usize,
        g: FieldFn,
        dg: FieldFn,
        p_minus: Vec<f64>,
        p_plus: Vec<f64>,
        gamma_cross: Option<f64>,
    ) -> Result<Self> {
        if d == 0 || d_diff == 0 || d_diff > d {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= d_diff <= d, got d = {d}, d_diff = {d_diff}"
            )));
        }
        if p_minus.len() != d || p_plus.len() != d {
            return Err(Error::InvalidParameter(
                "equilibria must have d components".into(),
            ));
        }
        Ok(ReactionModel {
            name: name.into(),
            d,
            d_diff,
            g,
            dg,
            p_minus,
            p_plus,
            gamma_cross,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_diff(&self) -> usize {
        self.d_diff
    }

    pub fn p_minus(&self) -> &[f64] {
        &self.p_minus
    }

    pub fn p_plus(&self) -> &[f64] {
        &self.p_plus
    }

    pub fn gamma_cross(&self) -> Option<f64> {
        self.gamma_cross
    }

    pub fn eval(&self, u: &[f64], r: f64, out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.d);
        debug_assert_eq!(out.len(), self.d);
        (self.g)(u, r, out);
    }

    pub fn eval_vec(&self, u: &[f64], r: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.eval(u, r, &mut out);
        out
    }

    /// Row-major Jacobian `DG(U; r)`.
    pub fn jacobian(&self, u: &[f64], r: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.d * self.d);
        (self.dg)(u, r, out);
    }

    pub fn jacobian_matrix(&self, u: &[f64], r: f64) -> DMatrix<f64> {
        let mut out = vec![0.0; self.d * self.d];
        self.jacobian(u, r, &mut out);
        DMatrix::from_row_slice(self.d, self.d, &out)
    }

    /// Central finite-difference Jacobian, the independent check on `dg`.
    pub fn jacobian_fd(&self, u: &[f64], r: f64, h: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.d, self.d);
        let mut up = u.to_vec();
        let mut gm = vec![0.0; self.d];
        let mut gp = vec![0.0; self.d];
        for j in 0..self.d {
            up[j] = u[j] + h;
            self.eval(&up, r, &mut gp);
            up[j] = u[j] - h;
            self.eval(&up, r, &mut gm);
            up[j] = u[j];
            for i in 0..self.d {
                out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        out
    }

    /// Same profile and equilibria with `G` and `DG` multiplied by a
    /// constant; used when an experiment carries its own per-equation
    /// weighting.
    pub fn scaled(&self, factor: f64) -> ReactionModel {
        let g = self.g.clone();
        let dg = self.dg.clone();
        ReactionModel {
            name: format!("{}*{}", self.name, factor),
            d: self.d,
            d_diff: self.d_diff,
            g: Arc::new(move |u, r, out| {
                g(u, r, out);
                for v in out.iter_mut() {
                    *v *= factor;
                }
            }),
            dg: Arc::new(move |u, r, out| {
                dg(u, r, out);
                for v in out.iter_mut() {
                    *v *= factor;
                }
            }),
            p_minus: self.p_minus.clone(),
            p_plus: self.p_plus.clone(),
            gamma_cross: self.gamma_cross,
        }
    }
}

/// Two-component excitable system: cubic bistable `u`-equation coupled to a
/// slow linear recovery variable, equilibria at the origin.
pub fn fhn_model(rho: f64, gamma: f64) -> Result<ReactionModel> {
    if rho <= 0.0 || gamma <= 0.0 {
        return Err(Error::InvalidParameter(
            "rho and gamma must be positive".into(),
        ));
    }
    ReactionModel::custom(
        "fhn",
        2,
        1,
        Arc::new(move |u, r, out| {
            out[0] = u[0] * (1.0 - u[0]) * (u[0] - r) - u[1];
            out[1] = rho * (u[0] - gamma * u[1]);
        }),
        Arc::new(move |u, r, out| {
            let x = u[0];
            out[0] = (1.0 - x) * (x - r) + x * (1.0 - x) - x * (x - r);
            out[1] = -1.0;
            out[2] = rho;
            out[3] = -rho * gamma;
        }),
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        Some(1.0 / rho),
    )
}

/// Scalar cubic bistable nonlinearity with equilibria 0 and 1.
pub fn nagumo_model() -> ReactionModel {
    ReactionModel::custom(
        "nagumo",
        1,
        1,
        Arc::new(|u, r, out| {
            out[0] = u[0] * (1.0 - u[0]) * (u[0] - r);
        }),
        Arc::new(|u, r, out| {
            let x = u[0];
            out[0] = (1.0 - x) * (x - r) + x * (1.0 - x) - x * (x - r);
        }),
        vec![0.0],
        vec![1.0],
        None,
    )
    .expect("static model definition")
}

/// Look up a model by configuration name.
pub fn by_name(name: &str, rho: f64, gamma: f64) -> Result<ReactionModel> {
    match name {
        "fhn" => fhn_model(rho, gamma),
        "nagumo" => Ok(nagumo_model()),
        other => Err(Error::InvalidParameter(format!(
            "unknown model '{other}' (expected 'fhn' or 'nagumo')"
        ))),
    }
}

/// Residuals of `G(P±; r) = 0` over sampled detunings.
#[derive(Clone, Debug)]
pub struct EquilibriaReport {
    pub max_residual_minus: f64,
    pub max_residual_plus: f64,
}

impl EquilibriaReport {
    pub fn pass(&self) -> bool {
        self.max_residual_minus < 1e-12 && self.max_residual_plus < 1e-12
    }
}

pub fn check_equilibria(model: &ReactionModel, r_samples: &[f64]) -> EquilibriaReport {
    let norm = |u: &[f64], r: f64| {
        model
            .eval_vec(u, r)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    EquilibriaReport {
        max_residual_minus: r_samples
            .iter()
            .fold(0.0f64, |m, &r| m.max(norm(model.p_minus(), r))),
        max_residual_plus: r_samples
            .iter()
            .fold(0.0f64, |m, &r| m.max(norm(model.p_plus(), r))),
    }
}

/// Which stability branch the equilibrium Jacobians satisfy.
#[derive(Clone, Debug)]
pub struct StabilityReport {
    /// Smallest symmetric-part eigenvalue of `-DG(P±)`.
    pub min_eig_full: f64,
    pub holds_a: bool,
    /// Smallest symmetric-part eigenvalue over the four diagonal blocks.
    pub min_eig_blocks: f64,
    pub blocks_positive: bool,
    /// Proportionality constant of the cross-coupling relation, if one fits.
    pub gamma: Option<f64>,
    /// Max residual of `G12(U) + Gamma G21(U)^T` over the sampled box.
    pub cross_residual: f64,
    pub holds_b: bool,
    pub sampled_points: usize,
    /// Branch a downstream solver should cite: "a", "b", or none.
    pub branch: Option<&'static str>,
}

const POS_DEF_TOL: f64 = 1e-10;

fn min_symmetric_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Positive definiteness is decided through the symmetric part: the matrices
/// in the conditions need not be symmetric, and the quadratic forms the
/// analysis uses only see the symmetric part.
pub fn check_stability(model: &ReactionModel, r: f64) -> StabilityReport {
    use rand::{Rng, SeedableRng};
    let d = model.d();
    let dd = model.d_diff();

    let mut min_eig_full = f64::INFINITY;
    let mut min_eig_blocks = f64::INFINITY;
    for p in [model.p_minus(), model.p_plus()] {
        let neg_dg = -model.jacobian_matrix(p, r);
        min_eig_full = min_eig_full.min(min_symmetric_eig(&neg_dg));
        let g11 = neg_dg.view((0, 0), (dd, dd)).into_owned();
        min_eig_blocks = min_eig_blocks.min(min_symmetric_eig(&g11));
        if d > dd {
            let g22 = neg_dg.view((dd, dd), (d - dd, d - dd)).into_owned();
            min_eig_blocks = min_eig_blocks.min(min_symmetric_eig(&g22));
        }
    }
    let holds_a = min_eig_full > POS_DEF_TOL;
    let blocks_positive = min_eig_blocks > POS_DEF_TOL;

    // Cross relation G12(U) = -Gamma G21(U)^T sampled over a box holding the
    // wave range with margin; universality over all of R^d is not
    // machine-checkable, so this is reported as a sampled check.
    let samples = 100;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let mut gamma = model.gamma_cross();
    let mut cross_residual = 0.0f64;
    if d > dd {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut points = Vec::with_capacity(samples);
        for _ in 0..samples {
            let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let dg = model.jacobian_matrix(&u, r);
            let g12 = dg.view((0, dd), (dd, d - dd)).into_owned();
            let g21t = dg.view((dd, 0), (d - dd, dd)).transpose().into_owned();
            num += -(g12.component_mul(&g21t)).sum();
            den += g21t.norm_squared();
            points.push((g12, g21t));
        }
        if gamma.is_none() && den > 0.0 {
            gamma = Some(num / den);
        }
        if let Some(g) = gamma {
            for (g12, g21t) in &points {
                cross_residual = cross_residual.max((g12 + g21t * g).norm());
            }
        }
    }
    let cross_ok = d == dd || (gamma.is_some_and(|g| g > 0.0) && cross_residual < 1e-10);
    let holds_b = blocks_positive && cross_ok;

    StabilityReport {
        min_eig_full,
        holds_a,
        min_eig_blocks,
        blocks_positive,
        gamma,
        cross_residual,
        holds_b,
        sampled_points: samples,
        branch: if holds_a {
            Some("a")
        } else if holds_b {
            Some("b")
        } else {
            None
        },
    }
}
