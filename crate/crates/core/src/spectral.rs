//! Operators on the periodised sequence spaces and their constant-coefficient
//! limits: twist shifts, the twisted nonlocal Laplacian, the linearised wave
//! operators in twisted coordinates, characteristic matrices and
//! hyperbolicity scans, harmonic projections, the bordered quasi-inverse,
//! and the lower-bound diagnostic for the spectral convergence argument.
//!
//! Windowed fields carry the seam convention `Phi(zeta±1, xi) =
//! Phi(zeta, xi±1/M)`; all twist arithmetic is exact on indices. Limit-type
//! fields are `zeta`-periodic instead.

use crate::bdf::BdfScheme;
use crate::error::{Error, Result};
use crate::exec::{run_tasks, ExecMode};
use crate::grid::{Extension, PeriodicField, RationalCoupling, WaveProfile};
use crate::kernel::InteractionKernel;
use crate::linalg::{BandMatrix, BorderedSolver};
use crate::model::ReactionModel;
use nalgebra::{Complex, DMatrix};

type C64 = Complex<f64>;

/// Which operator a [`TwistedOperator`] realizes on windowed fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// The twist shift itself.
    TwistM,
    /// Twisted nonlocal Laplacian.
    DeltaM,
    /// Linearised wave operator in twisted coordinates.
    KkM,
    /// Its formal adjoint (forward differences, transposed reaction).
    KkMAdjoint,
}

/// Context shared by the windowed operator kinds. The wave data enters as
/// the base profile on the field's grid together with the wavespeed.
pub struct TwistedOperator {
    kind: OperatorKind,
    coupling: RationalCoupling,
    kernel: Option<InteractionKernel>,
    scheme: Option<BdfScheme>,
    model: Option<ReactionModel>,
    u0: Option<WaveProfile>,
    c0: f64,
    r: f64,
}

/// Normalize a twisted coordinate pair through the seam:
/// `(s, t) -> (s mod q, t + s div q)`.
#[inline]
fn seam_normalize(s: i64, t: i64, q: i64) -> (i64, i64) {
    (s.rem_euclid(q), t + s.div_euclid(q))
}

impl TwistedOperator {
    pub fn twist(coupling: RationalCoupling) -> Self {
        TwistedOperator {
            kind: OperatorKind::TwistM,
            coupling,
            kernel: None,
            scheme: None,
            model: None,
            u0: None,
            c0: 0.0,
            r: 0.0,
        }
    }

    pub fn delta(coupling: RationalCoupling, kernel: InteractionKernel) -> Self {
        TwistedOperator {
            kind: OperatorKind::DeltaM,
            coupling,
            kernel: Some(kernel),
            scheme: None,
            model: None,
            u0: None,
            c0: 0.0,
            r: 0.0,
        }
    }

    /// The linearised wave operator (or its adjoint) around a wave profile
    /// restricted to the field's grid.
    #[allow(clippy::too_many_arguments)]
    pub fn linearisation(
        coupling: RationalCoupling,
        kernel: InteractionKernel,
        scheme: BdfScheme,
        model: ReactionModel,
        u0_on_grid: WaveProfile,
        c0: f64,
        r: f64,
        adjoint: bool,
    ) -> Self {
        TwistedOperator {
            kind: if adjoint {
                OperatorKind::KkMAdjoint
            } else {
                OperatorKind::KkM
            },
            coupling,
            kernel: Some(kernel),
            scheme: Some(scheme),
            model: Some(model),
            u0: Some(u0_on_grid),
            c0,
            r,
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Apply the operator through `(zeta, xi)` index arithmetic. The twist
    /// advances `zeta` by the rotation number and `xi` by `n/M` per power;
    /// the seam convention resolves the wrap-around.
    pub fn apply(&self, field: &PeriodicField) -> Result<PeriodicField> {
        if field.coupling() != &self.coupling {
            return Err(Error::GridMismatch(
                "field coupling does not match the operator".into(),
            ));
        }
        let q = self.coupling.q() as i64;
        let theta_num = self.coupling.theta_num() as i64;
        let n_twist = self.coupling.n() as i64;
        let t_half = field.t_half();
        let d = field.d();
        let mut out = field.clone();
        for v in out.profile_mut().values_mut() {
            *v = 0.0;
        }

        let twisted_sample = |s: i64, t: i64, power: i64, c: usize| -> f64 {
            let (s2, t2) = seam_normalize(s + power * theta_num, t + power * n_twist, q);
            field.value(s2, t2, c)
        };

        match self.kind {
            OperatorKind::TwistM => {
                for t in -t_half..=t_half {
                    for s in 0..q {
                        let j = out.flat_index(s, t);
                        if j > t_half * q {
                            continue; // beyond the stored window at the seam edge
                        }
                        for c in 0..d {
                            let v = twisted_sample(s, t, 1, c);
                            out.profile_mut().set(j, c, v);
                        }
                    }
                }
            }
            OperatorKind::DeltaM => {
                let kernel = self
                    .kernel
                    .as_ref()
                    .ok_or_else(|| Error::MissingContext("kernel".into()))?;
                for t in -t_half..=t_half {
                    for s in 0..q {
                        let j_flat = out.flat_index(s, t);
                        if j_flat > t_half * q {
                            continue;
                        }
                        for c in 0..d {
                            let mut acc = 0.0;
                            if c < kernel.d_diff {
                                let center = field.value(s, t, c);
                                for m in 1..=kernel.m_max {
                                    let alpha = kernel.alpha(m, c);
                                    if alpha == 0.0 {
                                        continue;
                                    }
                                    acc += alpha
                                        * (twisted_sample(s, t, m as i64, c)
                                            + twisted_sample(s, t, -(m as i64), c)
                                            - 2.0 * center);
                                }
                                acc *= kernel.tau;
                            }
                            out.profile_mut().set(j_flat, c, acc);
                        }
                    }
                }
            }
            OperatorKind::KkM | OperatorKind::KkMAdjoint => {
                let kernel = self
                    .kernel
                    .as_ref()
                    .ok_or_else(|| Error::MissingContext("kernel".into()))?;
                let scheme = self
                    .scheme
                    .as_ref()
                    .ok_or_else(|| Error::MissingContext("scheme".into()))?;
                let model = self
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::MissingContext("model".into()))?;
                let u0 = self
                    .u0
                    .as_ref()
                    .ok_or_else(|| Error::MissingContext("wave profile".into()))?;
                if u0.p() != field.coupling().p() {
                    return Err(Error::GridMismatch(
                        "wave profile grid does not match the coupling".into(),
                    ));
                }
                let adjoint = self.kind == OperatorKind::KkMAdjoint;
                let k = scheme.order();
                let m_scale = self.coupling.m() / scheme.beta_f64();
                let mut dg = vec![0.0; d * d];
                for t in -t_half..=t_half {
                    for s in 0..q {
                        let j_flat = field.flat_index(s, t);
                        if j_flat > t_half * q {
                            continue;
                        }
                        // evaluate the reaction Jacobian at U0(xi + zeta/M)
                        let u: Vec<f64> = (0..d).map(|cc| u0.value(j_flat, cc)).collect();
                        model.jacobian(&u, self.r, &mut dg);
                        for c in 0..d {
                            // discrete derivative acts on xi only
                            let mut dval = 0.0;
                            for (n_prime, &mu) in scheme.mu_f64().iter().enumerate() {
                                let off = (k - n_prime) as i64;
                                let t_s = if adjoint { t + off } else { t - off };
                                dval += mu * field.value(s, t_s, c);
                            }
                            dval *= m_scale;
                            let mut lap = 0.0;
                            if c < kernel.d_diff {
                                let center = field.value(s, t, c);
                                for m in 1..=kernel.m_max {
                                    let alpha = kernel.alpha(m, c);
                                    if alpha == 0.0 {
                                        continue;
                                    }
                                    lap += alpha
                                        * (twisted_sample(s, t, m as i64, c)
                                            + twisted_sample(s, t, -(m as i64), c)
                                            - 2.0 * center);
                                }
                                lap *= kernel.tau;
                            }
                            let mut reaction = 0.0;
                            for c2 in 0..d {
                                let w = if adjoint { dg[c2 * d + c] } else { dg[c * d + c2] };
                                reaction += w * field.value(s, t, c2);
                            }
                            out.profile_mut()
                                .set(j_flat, c, self.c0 * dval - lap - reaction);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Flattened-path evaluation of the linearised wave operator on a profile:
/// `c0 D_{k,M} Phi - Delta_0 Phi - DG(U0) Phi`. Together with
/// [`TwistedOperator::apply`] this gives the two independent routes of the
/// intertwining identity through the embedding.
#[allow(clippy::too_many_arguments)]
pub fn apply_l_km(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    c0: f64,
    r: f64,
    u0: &WaveProfile,
    phi: &WaveProfile,
) -> Result<WaveProfile> {
    let deriv = crate::bdf::derivative_profile(scheme, coupling, phi)?;
    let lap = crate::kernel::apply_nonlocal_laplacian(kernel, phi)?;
    let d = phi.d();
    let mut dg = vec![0.0; d * d];
    let mut out = phi
        .clone()
        .with_limits(vec![0.0; d], vec![0.0; d]);
    for j in -phi.n_half()..=phi.n_half() {
        let u: Vec<f64> = (0..d).map(|cc| u0.value(j, cc)).collect();
        model.jacobian(&u, r, &mut dg);
        for c in 0..d {
            let mut reaction = 0.0;
            for c2 in 0..d {
                reaction += dg[c * d + c2] * phi.value(j, c2);
            }
            out.set(j, c, c0 * deriv.value(j, c) - lap.value(j, c) - reaction);
        }
    }
    Ok(out)
}

/// Band matrix of `c0 D_{k,M} - Delta_0 - DG(U0)` on the window with
/// zero extension (perturbation fields vanish at the limits).
#[allow(clippy::too_many_arguments)]
pub fn assemble_l_km(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    c0: f64,
    r: f64,
    u0: &WaveProfile,
    adjoint: bool,
) -> BandMatrix {
    let d = u0.d();
    let p = u0.p() as i64;
    let n_half = u0.n_half();
    let n = u0.num_points() * d;
    let k = scheme.order();
    let step = (coupling.q() * (u0.p() / coupling.p())) as i64;
    let max_off = (kernel.m_max as i64 * p).max(k as i64 * step) as usize;
    let kw = max_off * d + d;
    let mut m = BandMatrix::zeros(n, kw, kw);
    let row_of = |j: i64, cc: usize| ((j + n_half) as usize) * d + cc;
    let in_window = |j: i64| j >= -n_half && j <= n_half;
    let dscale = c0 * coupling.m() / scheme.beta_f64();
    let mut dg = vec![0.0; d * d];
    for j in -n_half..=n_half {
        let u: Vec<f64> = (0..d).map(|cc| u0.value(j, cc)).collect();
        model.jacobian(&u, r, &mut dg);
        for cc in 0..d {
            let row = row_of(j, cc);
            for (n_prime, &mu) in scheme.mu_f64().iter().enumerate() {
                let off = (k - n_prime) as i64 * step;
                let jt = if adjoint { j + off } else { j - off };
                if in_window(jt) {
                    m.add(row, row_of(jt, cc), dscale * mu);
                }
            }
            if cc < kernel.d_diff {
                let tau = kernel.tau;
                for mm in 1..=kernel.m_max {
                    let alpha = kernel.alpha(mm, cc);
                    if alpha == 0.0 {
                        continue;
                    }
                    m.add(row, row, 2.0 * tau * alpha);
                    for sgn in [-1i64, 1] {
                        let jt = j + sgn * mm as i64 * p;
                        if in_window(jt) {
                            m.add(row, row_of(jt, cc), -tau * alpha);
                        }
                    }
                }
            }
            for c2 in 0..d {
                let val = if adjoint { dg[c2 * d + cc] } else { dg[cc * d + c2] };
                m.add(row, row_of(j, c2), -val);
            }
        }
    }
    m
}

/// Band matrix of the discrete derivative with zero extension, used for
/// graph-norm metrics.
pub fn assemble_derivative_matrix(
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    p: u32,
    d: usize,
    n_half: i64,
    adjoint: bool,
) -> BandMatrix {
    let n = (2 * n_half as usize + 1) * d;
    let k = scheme.order();
    let step = (coupling.q() * (p / coupling.p())) as i64;
    let kw = (k as i64 * step) as usize * d + d;
    let mut m = BandMatrix::zeros(n, kw, kw);
    let row_of = |j: i64, cc: usize| ((j + n_half) as usize) * d + cc;
    let scale = coupling.m() / scheme.beta_f64();
    for j in -n_half..=n_half {
        for cc in 0..d {
            let row = row_of(j, cc);
            for (n_prime, &mu) in scheme.mu_f64().iter().enumerate() {
                let off = (k - n_prime) as i64 * step;
                let jt = if adjoint { j + off } else { j - off };
                if jt >= -n_half && jt <= n_half {
                    m.add(row, row_of(jt, cc), scale * mu);
                }
            }
        }
    }
    m
}

/// Max of the twisted-Laplacian quadratic form over seeded random compactly
/// supported fields; nonpositivity is the discrete analogue of the
/// negativity of the second difference.
pub fn quadratic_form_negativity(
    kernel: &InteractionKernel,
    coupling: &RationalCoupling,
    t_half: i64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    use rand::Rng;
    let op = TwistedOperator::delta(*coupling, kernel.clone());
    let q = coupling.q() as i64;
    let n_half = t_half * q;
    let margin = kernel.m_max as i64 * coupling.p() as i64 + q;
    let mut rng = crate::random::rng_from_seed(seed);
    let mut max_form = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut profile =
            WaveProfile::zeros(coupling.p(), kernel.d, n_half, Extension::ConstantLimits);
        for j in (-n_half + margin)..=(n_half - margin) {
            for c in 0..kernel.d {
                profile.set(j, c, rng.gen_range(-1.0..1.0));
            }
        }
        let field = PeriodicField::embed(profile, *coupling)?;
        let image = op.apply(&field)?;
        let form = image.inner(&field)?;
        max_form = max_form.max(form);
    }
    Ok(max_form)
}

/// `rho`-homotopy of the equilibrium Jacobians, `rho DG(P-) + (1-rho) DG(P+)`.
pub fn reaction_jacobian_homotopy(model: &ReactionModel, r: f64, rho: f64) -> DMatrix<f64> {
    let dg_minus = model.jacobian_matrix(model.p_minus(), r);
    let dg_plus = model.jacobian_matrix(model.p_plus(), r);
    dg_minus * rho + dg_plus * (1.0 - rho)
}

/// Characteristic matrix of the constant-coefficient limit operator:
/// `c0 i y + 2 tau A(y) - DG_rho + lambda` as a complex `d x d` matrix.
pub fn characteristic_matrix(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    c0: f64,
    r: f64,
    rho: f64,
    lambda: C64,
    y: f64,
) -> DMatrix<C64> {
    let d = model.d();
    let dg = reaction_jacobian_homotopy(model, r, rho);
    let symbol = kernel.symbol_diagonal(y);
    let mut out = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut v = C64::new(-dg[(i, j)], 0.0);
            if i == j {
                v += C64::new(2.0 * kernel.tau * symbol[i], c0 * y) + lambda;
            }
            out[(i, j)] = v;
        }
    }
    out
}

/// Twisted characteristic matrix: the `(q d) x (q d)` block symbol obtained
/// by applying the twisted limit operator to exponential fields
/// `e^{i y xi} V(zeta)`.
#[allow(clippy::too_many_arguments)]
pub fn characteristic_matrix_twisted(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    coupling: &RationalCoupling,
    c0: f64,
    r: f64,
    rho: f64,
    lambda: C64,
    y: f64,
) -> DMatrix<C64> {
    let d = model.d();
    let q = coupling.q() as usize;
    let theta_num = coupling.theta_num() as i64;
    let dg = reaction_jacobian_homotopy(model, r, rho);
    let n = q * d;
    let mut out = DMatrix::<C64>::zeros(n, n);
    for s in 0..q {
        for c in 0..d {
            let row = s * d + c;
            out[(row, row)] += C64::new(0.0, c0 * y) + lambda;
            for c2 in 0..d {
                out[(row, s * d + c2)] -= C64::new(dg[(c, c2)], 0.0);
            }
            if c < kernel.d_diff {
                for m in 1..=kernel.m_max {
                    let alpha = kernel.tau * kernel.alpha(m, c);
                    if alpha == 0.0 {
                        continue;
                    }
                    let phase = C64::new(0.0, m as f64 * y).exp();
                    let s_plus = (s as i64 + m as i64 * theta_num).rem_euclid(q as i64) as usize;
                    let s_minus = (s as i64 - m as i64 * theta_num).rem_euclid(q as i64) as usize;
                    out[(row, s_plus * d + c)] -= phase * alpha;
                    out[(row, s_minus * d + c)] -= phase.conj() * alpha;
                    out[(row, row)] += C64::new(2.0 * alpha, 0.0);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct ScanPoint {
    pub rho: f64,
    pub y: f64,
    pub abs_det: f64,
}

#[derive(Clone, Debug)]
pub struct ScanResult {
    pub min_abs_det: f64,
    pub argmin: (f64, f64),
    pub points: Vec<ScanPoint>,
    pub pass: bool,
}

impl ScanResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,y,abs_det\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{:e}\n", p.rho, p.y, p.abs_det));
        }
        out
    }
}

/// Scan `|det(characteristic matrix)|` over a `(rho, y)` grid. Hyperbolicity
/// of the limits means the determinant stays away from zero on the
/// imaginary axis; the symbol part is `2 pi`-periodic in `y` while the
/// transport part only grows, so one period plus a tail suffices.
#[allow(clippy::too_many_arguments)]
pub fn hyperbolicity_scan(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    coupling: Option<&RationalCoupling>,
    c0: f64,
    r: f64,
    rho_grid: &[f64],
    y_grid: &[f64],
    lambda: C64,
    threshold: f64,
    mode: ExecMode,
) -> ScanResult {
    let cells: Vec<(f64, f64)> = rho_grid
        .iter()
        .flat_map(|&rho| y_grid.iter().map(move |&y| (rho, y)))
        .collect();
    let points = run_tasks(mode, cells.len(), |i| {
        let (rho, y) = cells[i];
        let det = match coupling {
            Some(cpl) => {
                characteristic_matrix_twisted(model, kernel, cpl, c0, r, rho, lambda, y)
                    .determinant()
            }
            None => characteristic_matrix(model, kernel, c0, r, rho, lambda, y).determinant(),
        };
        ScanPoint {
            rho,
            y,
            abs_det: det.norm(),
        }
    });
    let (mut min_abs_det, mut argmin) = (f64::INFINITY, (0.0, 0.0));
    for p in &points {
        if p.abs_det < min_abs_det {
            min_abs_det = p.abs_det;
            argmin = (p.rho, p.y);
        }
    }
    ScanResult {
        min_abs_det,
        argmin,
        points,
        pass: min_abs_det > threshold,
    }
}

/// A `zeta`-periodic field over `q` fibers sampled on a fine `xi` grid;
/// the discretised limit-space element. Values are complex so harmonic
/// projections stay in one representation.
#[derive(Clone, Debug)]
pub struct FiberField {
    pub q: u32,
    pub p: u32,
    pub d: usize,
    pub n_half: i64,
    values: Vec<C64>,
}

impl FiberField {
    pub fn zeros(q: u32, p: u32, d: usize, n_half: i64) -> Self {
        FiberField {
            q,
            p,
            d,
            n_half,
            values: vec![C64::new(0.0, 0.0); q as usize * (2 * n_half as usize + 1) * d],
        }
    }

    fn offset(&self, s: i64, t: i64, c: usize) -> usize {
        let s = s.rem_euclid(self.q as i64) as usize;
        (((t + self.n_half) as usize) * self.q as usize + s) * self.d + c
    }

    /// Value at `(zeta, xi) = (s/q, t/p)`; `zeta` wraps periodically, `xi`
    /// reads zero outside the window (perturbation semantics).
    pub fn value(&self, s: i64, t: i64, c: usize) -> C64 {
        if t < -self.n_half || t > self.n_half {
            return C64::new(0.0, 0.0);
        }
        self.values[self.offset(s, t, c)]
    }

    pub fn set(&mut self, s: i64, t: i64, c: usize, v: C64) {
        let idx = self.offset(s, t, c);
        self.values[idx] = v;
    }

    /// Trapezoid-in-`zeta`, scaled-in-`xi` squared norm. With the periodic
    /// convention the end weights merge, giving weight one per fiber.
    pub fn norm(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (sum / (self.q as f64 * self.p as f64)).sqrt()
    }

    pub fn from_real_fn<F>(q: u32, p: u32, d: usize, n_half: i64, f: F) -> Self
    where
        F: Fn(i64, f64, usize) -> f64,
    {
        let mut out = FiberField::zeros(q, p, d, n_half);
        for t in -n_half..=n_half {
            let xi = t as f64 / p as f64;
            for s in 0..q as i64 {
                for c in 0..d {
                    out.set(s, t, c, C64::new(f(s, xi, c), 0.0));
                }
            }
        }
        out
    }
}

/// Twist shift on limit fields: `[T_{q,theta} Theta](zeta, xi) =
/// Theta(zeta + theta, xi + 1)` with periodic `zeta`.
pub fn apply_twist_limit(field: &FiberField, coupling: &RationalCoupling, power: i64) -> FiberField {
    let mut out = FiberField::zeros(field.q, field.p, field.d, field.n_half);
    let theta_num = coupling.theta_num() as i64;
    let shift = power * field.p as i64;
    for t in -field.n_half..=field.n_half {
        for s in 0..field.q as i64 {
            for c in 0..field.d {
                out.set(s, t, c, field.value(s + power * theta_num, t + shift, c));
            }
        }
    }
    out
}

/// Twisted limit Laplacian `tau sum alpha_m [T^m + T^{-m} - 2]`.
pub fn apply_delta_limit(
    field: &FiberField,
    coupling: &RationalCoupling,
    kernel: &InteractionKernel,
) -> FiberField {
    let mut out = FiberField::zeros(field.q, field.p, field.d, field.n_half);
    let theta_num = coupling.theta_num() as i64;
    let p = field.p as i64;
    for t in -field.n_half..=field.n_half {
        for s in 0..field.q as i64 {
            for c in 0..field.d {
                let mut acc = C64::new(0.0, 0.0);
                if c < kernel.d_diff {
                    let center = field.value(s, t, c);
                    for m in 1..=kernel.m_max {
                        let alpha = kernel.alpha(m, c);
                        if alpha == 0.0 {
                            continue;
                        }
                        let mi = m as i64;
                        acc += (field.value(s + mi * theta_num, t + mi * p, c)
                            + field.value(s - mi * theta_num, t - mi * p, c)
                            - center * 2.0)
                            * alpha;
                    }
                    acc *= C64::new(kernel.tau, 0.0);
                }
                out.set(s, t, c, acc);
            }
        }
    }
    out
}

/// Twisted limit of the linearised wave operator,
/// `c0 d_xi - Delta_{q,theta} - DG(U0(xi))`, with a fourth-order transport
/// stencil. The reaction coefficient is fiber-independent.
#[allow(clippy::too_many_arguments)]
pub fn apply_k_limit(
    field: &FiberField,
    coupling: &RationalCoupling,
    kernel: &InteractionKernel,
    model: &ReactionModel,
    u0: &WaveProfile,
    c0: f64,
    r: f64,
) -> Result<FiberField> {
    if u0.p() != field.p {
        return Err(Error::GridMismatch(
            "wave profile grid does not match the fiber field".into(),
        ));
    }
    let lap = apply_delta_limit(field, coupling, kernel);
    let d = field.d;
    let mut dg = vec![0.0; d * d];
    let dscale = field.p as f64 / 12.0;
    let mut out = FiberField::zeros(field.q, field.p, field.d, field.n_half);
    for t in -field.n_half..=field.n_half {
        let u: Vec<f64> = (0..d).map(|cc| u0.value(t, cc)).collect();
        model.jacobian(&u, r, &mut dg);
        for s in 0..field.q as i64 {
            for c in 0..d {
                let deriv = (field.value(s, t - 2, c) - field.value(s, t + 2, c)
                    + (field.value(s, t + 1, c) - field.value(s, t - 1, c)) * 8.0)
                    * dscale;
                let mut reaction = C64::new(0.0, 0.0);
                for c2 in 0..d {
                    reaction += field.value(s, t, c2) * dg[c * d + c2];
                }
                out.set(s, t, c, deriv * c0 - lap.value(s, t, c) - reaction);
            }
        }
    }
    Ok(out)
}

/// Band matrix of the twisted limit operator over `(xi, zeta, component)`
/// coordinates with zero extension, for kernel extraction.
pub fn assemble_k_limit(
    coupling: &RationalCoupling,
    kernel: &InteractionKernel,
    model: &ReactionModel,
    u0: &WaveProfile,
    c0: f64,
    r: f64,
) -> BandMatrix {
    let q = coupling.q() as usize;
    let d = model.d();
    let p = u0.p() as i64;
    let n_half = u0.n_half();
    let block = q * d;
    let n = (2 * n_half as usize + 1) * block;
    let theta_num = coupling.theta_num() as i64;
    let max_off = (kernel.m_max as i64 * p).max(2) as usize;
    let kw = max_off * block + block;
    let mut m = BandMatrix::zeros(n, kw, kw);
    let row_of =
        |t: i64, s: usize, c: usize| ((t + n_half) as usize) * block + s * d + c;
    let in_window = |t: i64| t >= -n_half && t <= n_half;
    let dscale = c0 * p as f64 / 12.0;
    let mut dg = vec![0.0; d * d];
    for t in -n_half..=n_half {
        let u: Vec<f64> = (0..d).map(|cc| u0.value(t, cc)).collect();
        model.jacobian(&u, r, &mut dg);
        for s in 0..q {
            for c in 0..d {
                let row = row_of(t, s, c);
                for (off, w) in [(-2i64, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)] {
                    if in_window(t + off) {
                        m.add(row, row_of(t + off, s, c), dscale * w / 1.0);
                    }
                }
                if c < kernel.d_diff {
                    for mm in 1..=kernel.m_max {
                        let alpha = kernel.tau * kernel.alpha(mm, c);
                        if alpha == 0.0 {
                            continue;
                        }
                        m.add(row, row, 2.0 * alpha);
                        for sgn in [-1i64, 1] {
                            let ts = t + sgn * mm as i64 * p;
                            let ss = (s as i64 + sgn * mm as i64 * theta_num)
                                .rem_euclid(q as i64) as usize;
                            if in_window(ts) {
                                m.add(row, row_of(ts, ss, c), -alpha);
                            }
                        }
                    }
                }
                for c2 in 0..d {
                    m.add(row, row_of(t, s, c2), -dg[c * d + c2]);
                }
            }
        }
    }
    m
}

/// Harmonic projection `[Pi_n Theta](xi) = sum_{n'} zeta_q^{n n'}
/// Theta(n' theta, xi)`: the root-of-unity combination over the fiber orbit
/// visited in rotation-number steps.
pub fn harmonic_projection(field: &FiberField, coupling: &RationalCoupling, n: u32) -> Result<Vec<C64>> {
    let q = field.q;
    if n >= q {
        return Err(Error::IndexOutOfRange(format!(
            "harmonic index {n} outside 0..{q}"
        )));
    }
    let theta_num = coupling.theta_num() as i64;
    let points = 2 * field.n_half as usize + 1;
    let mut out = vec![C64::new(0.0, 0.0); points * field.d];
    for n_prime in 0..q as i64 {
        let root = C64::new(
            0.0,
            2.0 * std::f64::consts::PI * (n as i64 * n_prime) as f64 / q as f64,
        )
        .exp();
        for t in -field.n_half..=field.n_half {
            for c in 0..field.d {
                out[((t + field.n_half) as usize) * field.d + c] +=
                    root * field.value(n_prime * theta_num, t, c);
            }
        }
    }
    Ok(out)
}

/// Quasi-inverse of the linearised operator: solve the bordered system
/// `L_{k,M} V = Psi + gamma pi D_{k,M} U0` with `<pi Phi0^-, V> = 0` and
/// report the stability ratio `(|gamma| + ||V||_graph) / ||Psi||`.
#[derive(Clone, Debug)]
pub struct QuasiInverseSolution {
    pub gamma: f64,
    pub v: WaveProfile,
    pub v_graph_norm: f64,
    pub ratio: f64,
}

pub fn quasi_inverse_solve(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    wave: &crate::semidiscrete::SemiDiscreteWave,
    psi: &WaveProfile,
) -> Result<QuasiInverseSolution> {
    let p = psi.p();
    if !p.is_multiple_of(coupling.p()) || !wave.profile.p().is_multiple_of(p) {
        return Err(Error::GridMismatch(
            "grids must nest: coupling | psi | wave".into(),
        ));
    }
    let n_half = psi.n_half();
    let u0 = wave.profile.resample(p, n_half);
    let mut u0_zero_ext = u0.clone();
    u0_zero_ext.set_extension(Extension::ConstantLimits);
    let phi_minus = {
        let mut f = wave.phi_minus.resample(p, n_half);
        f.set_extension(Extension::ConstantLimits);
        f
    };
    let l_km = assemble_l_km(
        model,
        kernel,
        scheme,
        coupling,
        wave.c0,
        wave.r,
        &u0_zero_ext,
        false,
    );
    // border column -pi D_{k,M} U0 and constraint row <pi Phi0^-, .>
    let du0 = crate::bdf::derivative_profile(scheme, coupling, &u0)?;
    let col: Vec<f64> = du0.values().iter().map(|v| -v).collect();
    let row: Vec<f64> = phi_minus.values().iter().map(|v| v / p as f64).collect();
    let solver = BorderedSolver::new(&l_km, col, row)?;
    let (v_values, gamma) = solver.solve(psi.values(), 0.0);
    let mut v = psi.clone().with_limits(vec![0.0; psi.d()], vec![0.0; psi.d()]);
    v.values_mut().copy_from_slice(&v_values);
    v.set_extension(Extension::ConstantLimits);
    let dv = crate::bdf::derivative_profile(scheme, coupling, &v)?;
    let v_graph_norm =
        (v.norm_scaled().powi(2) + dv.norm_scaled().powi(2)).sqrt();
    let psi_norm = psi.norm_scaled();
    Ok(QuasiInverseSolution {
        gamma,
        v,
        v_graph_norm,
        ratio: (gamma.abs() + v_graph_norm) / psi_norm.max(1e-300),
    })
}

/// Lower-bound estimate of the spectral-convergence quantity at one `delta`:
/// the minimizer of the quadratic surrogate
/// `||(K + delta) Phi||^2 + delta^{-2} <pi Phi0^-, (K + delta) Phi>^2`
/// over the graph-norm sphere, computed as a generalized symmetric
/// eigenproblem. The square root brackets the sum-of-norms functional
/// within a factor sqrt(2).
#[allow(clippy::too_many_arguments)]
pub fn spectral_convergence_diagnostic(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    wave: &crate::semidiscrete::SemiDiscreteWave,
    n_half: i64,
    delta: f64,
    adjoint: bool,
) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    let p = coupling.p();
    let d = model.d();
    let mut u0 = wave.profile.resample(p, n_half);
    u0.set_extension(Extension::ConstantLimits);
    let pairing_profile = if adjoint { &wave.phi_plus } else { &wave.phi_minus };
    let u_vec: Vec<f64> = pairing_profile.resample(p, n_half).values().to_vec();

    let k_mat = assemble_l_km(model, kernel, scheme, coupling, wave.c0, wave.r, &u0, adjoint);
    let n = k_mat.n();
    let mut b = k_mat.to_dense();
    for i in 0..n {
        b[(i, i)] += delta;
    }
    let scale = 1.0 / p as f64;
    // A = B^T B / p + delta^{-2} (B^T u)(B^T u)^T / p^2
    let bt_b = b.transpose() * &b * scale;
    let bt_u = b.transpose() * DMatrix::from_column_slice(n, 1, &u_vec);
    let rank1 = &bt_u * bt_u.transpose() * (scale * scale / (delta * delta));
    let a = bt_b + rank1;
    // metric (I + D^T D) / p
    let d_mat = assemble_derivative_matrix(scheme, coupling, p, d, n_half, adjoint).to_dense();
    let metric = (DMatrix::identity(n, n) + d_mat.transpose() * d_mat) * scale;
    let (lambda_min, _) = crate::linalg::generalized_symmetric_smallest(&a, &metric)?;
    Ok(lambda_min.max(0.0).sqrt())
}

/// Piecewise interpolant of the `xi` coordinate of a windowed field.
pub struct Interpolant<'a> {
    field: &'a PeriodicField,
    order: u8,
}

/// Order 0 gives the left-constant interpolant (`xi^- = xi` at grid
/// points); order 1 the linear one.
pub fn interpolate(field: &PeriodicField, order: u8) -> Result<Interpolant<'_>> {
    if order > 1 {
        return Err(Error::InvalidParameter(
            "interpolation order must be 0 or 1".into(),
        ));
    }
    Ok(Interpolant { field, order })
}

impl Interpolant<'_> {
    /// Evaluate at `zeta = s/q` and real `xi` inside the window.
    pub fn eval(&self, s: i64, xi: f64, c: usize) -> Result<f64> {
        let m = self.field.coupling().m();
        let x = xi * m;
        let t_minus = x.floor() as i64;
        if t_minus < -self.field.t_half() || t_minus + 1 > self.field.t_half() {
            return Err(Error::IndexOutOfRange(format!(
                "xi = {xi} outside the window"
            )));
        }
        match self.order {
            0 => Ok(self.field.value(s, t_minus, c)),
            _ => {
                let frac = x - t_minus as f64;
                Ok((1.0 - frac) * self.field.value(s, t_minus, c)
                    + frac * self.field.value(s, t_minus + 1, c))
            }
        }
    }
}

/// Norms `||Delta_{M_j} Z - Delta_{q,theta} Z||` for a smooth compactly
/// supported test field evaluated analytically, along a sequence of
/// couplings sharing the rotation number. The fiber shift is common to both
/// operators; only the `xi` shift differs (`m n_j / M_j` against `m`).
pub fn laplacian_limit_probe<F>(
    kernel: &InteractionKernel,
    couplings: &[RationalCoupling],
    z: F,
    support: f64,
    quad_points: usize,
) -> Result<Vec<f64>>
where
    F: Fn(i64, f64, usize) -> f64,
{
    let q = couplings
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty coupling sequence".into()))?
        .q();
    let theta = couplings[0].theta_num();
    for c in couplings {
        if c.q() != q || c.theta_num() != theta {
            return Err(Error::InvalidParameter(
                "couplings must share q and the rotation number".into(),
            ));
        }
    }
    let d = 1; // scalar fibers; vector fields factor through components
    let half = support + kernel.m_max as f64 + 1.0;
    let h = 2.0 * half / quad_points as f64;
    let mut out = Vec::with_capacity(couplings.len());
    for coupling in couplings {
        let n_j = coupling.n() as f64;
        let m_inv = 1.0 / coupling.m();
        let mut acc = 0.0;
        for i in 0..=quad_points {
            let xi = -half + i as f64 * h;
            let w = if i == 0 || i == quad_points { 0.5 } else { 1.0 };
            for s in 0..q as i64 {
                for c in 0..d {
                    let mut diff = 0.0;
                    for m in 1..=kernel.m_max {
                        let alpha = kernel.alpha(m, c);
                        if alpha == 0.0 {
                            continue;
                        }
                        let mf = m as f64;
                        let s_p = s + (m as i64) * theta as i64;
                        let s_m = s - (m as i64) * theta as i64;
                        diff += alpha
                            * (z(s_p, xi + mf * n_j * m_inv, c) - z(s_p, xi + mf, c)
                                + z(s_m, xi - mf * n_j * m_inv, c)
                                - z(s_m, xi - mf, c));
                    }
                    acc += w * (kernel.tau * diff).powi(2);
                }
            }
        }
        out.push((acc * h / q as f64).sqrt());
    }
    Ok(out)
}

/// Write a band matrix as coordinate-list text (`row col value` per line)
/// for external inspection.
pub fn matrix_to_coordinate_list(m: &BandMatrix) -> String {
    let mut out = String::new();
    let n = m.n();
    for i in 0..n {
        for j in 0..n {
            let v = m.get(i, j);
            if v != 0.0 {
                out.push_str(&format!("{} {} {:e}\n", i, j, v));
            }
        }
    }
    out
}
