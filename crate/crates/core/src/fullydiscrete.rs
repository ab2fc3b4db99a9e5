//! Travelling waves of the fully discrete system: solve the equation
//! `c [D_{k,M} Phi](xi) = tau sum alpha_m [...] + G(Phi(xi); r)` on
//! `p^{-1}Z` windows, run `(c, r)` parameter sweeps, and check the
//! normalization and shift-periodicity properties of the computed branches.
//!
//! The wavespeed is fixed by the cell through `c dt = q/p`; the profile is
//! the only unknown, so the broken translational symmetry leaves a square
//! Newton system without a phase condition.

use crate::bdf::{bdf_scheme, derivative_profile, BdfScheme};
use crate::error::{Error, Result};
use crate::exec::{run_tasks, ExecMode};
use crate::grid::{extension_columns, Extension, RationalCoupling, WaveProfile};
use crate::kernel::{apply_nonlocal_laplacian, InteractionKernel};
use crate::linalg::BandMatrix;
use crate::model::ReactionModel;
use crate::semidiscrete::SemiDiscreteWave;

/// A converged wave of one `(p, q, r)` cell.
#[derive(Clone, Debug)]
pub struct FullyDiscreteWave {
    pub coupling: RationalCoupling,
    pub scheme_order: usize,
    pub dt: f64,
    /// `c = q / (p dt)`, so that `c dt M = 1` exactly.
    pub c: f64,
    pub r: f64,
    pub profile: WaveProfile,
    pub residual: f64,
    pub front_amplitude: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct DiscreteSolveOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Minimal range of the first component; anything flatter is treated as
    /// capture by the trivial solution.
    pub nontriviality: f64,
    /// Optional sup-norm cap on Newton updates. The window problem has a
    /// soft translational direction, and uncapped steps can slide a pulse
    /// across the window; a cap keeps the iteration near its seed.
    pub max_step: Option<f64>,
}

impl Default for DiscreteSolveOptions {
    fn default() -> Self {
        DiscreteSolveOptions {
            max_iter: 50,
            tol: 1e-11,
            nontriviality: 0.5,
            max_step: None,
        }
    }
}

/// Pointwise defect of the fully discrete wave equation on the profile grid.
pub fn residual_field(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    dt: f64,
    r: f64,
    profile: &WaveProfile,
) -> Result<WaveProfile> {
    if profile.p() != coupling.p() {
        return Err(Error::GridMismatch(format!(
            "profile density {} does not match p = {}",
            profile.p(),
            coupling.p()
        )));
    }
    let c = coupling.wavespeed(dt);
    let lap = apply_nonlocal_laplacian(kernel, profile)?;
    let deriv = derivative_profile(scheme, coupling, profile)?;
    let d = profile.d();
    let mut g = vec![0.0; d];
    let mut out = profile
        .clone()
        .with_limits(vec![0.0; d], vec![0.0; d]);
    for j in -profile.n_half()..=profile.n_half() {
        let u: Vec<f64> = (0..d).map(|cc| profile.value(j, cc)).collect();
        model.eval(&u, r, &mut g);
        for (cc, gc) in g.iter().enumerate() {
            out.set(j, cc, c * deriv.value(j, cc) - lap.value(j, cc) - gc);
        }
    }
    Ok(out)
}

/// Jacobian `c D_{k,M} - Delta - DG(Phi)` on the window grid.
fn assemble_jacobian(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    c: f64,
    r: f64,
    profile: &WaveProfile,
) -> BandMatrix {
    let d = profile.d();
    let p = profile.p() as i64;
    let n_half = profile.n_half();
    let n = profile.num_points() * d;
    let k = scheme.order();
    let step = coupling.q() as i64;
    let max_off = (kernel.m_max as i64 * p).max(k as i64 * step) as usize;
    let kw = max_off * d + d;
    let mut m = BandMatrix::zeros(n, kw, kw);
    let row_of = |j: i64, cc: usize| ((j + n_half) as usize) * d + cc;
    let dscale = c * coupling.m() / scheme.beta_f64();
    let mut dg = vec![0.0; d * d];
    for j in -n_half..=n_half {
        let u: Vec<f64> = (0..d).map(|cc| profile.value(j, cc)).collect();
        model.jacobian(&u, r, &mut dg);
        for cc in 0..d {
            let row = row_of(j, cc);
            for (n_prime, &mu) in scheme.mu_f64().iter().enumerate() {
                let jt = j - (k - n_prime) as i64 * step;
                for (col_j, w) in extension_columns(profile.extension(), n_half, jt) {
                    m.add(row, row_of(col_j, cc), dscale * mu * w);
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
                        for (col_j, w) in extension_columns(profile.extension(), n_half, jt) {
                            m.add(row, row_of(col_j, cc), -tau * alpha * w);
                        }
                    }
                }
            }
            for c2 in 0..d {
                m.add(row, row_of(j, c2), -dg[cc * d + c2]);
            }
        }
    }
    m
}

/// Newton solve from a seed profile on the cell grid.
#[allow(clippy::too_many_arguments)]
pub fn solve_fully_discrete_wave(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    dt: f64,
    r: f64,
    seed: &WaveProfile,
    opts: &DiscreteSolveOptions,
) -> Result<FullyDiscreteWave> {
    let c = coupling.wavespeed(dt);
    let mut profile = seed
        .clone()
        .with_limits(model.p_minus().to_vec(), model.p_plus().to_vec());
    let mut iterations = 0;
    loop {
        let res = residual_field(model, kernel, scheme, coupling, dt, r, &profile)?;
        let sup = res.sup_norm();
        if sup < opts.tol {
            let front_amplitude = profile.component_range(0);
            if front_amplitude < opts.nontriviality {
                return Err(Error::DegenerateSolution(format!(
                    "converged to a trivial state (front amplitude {front_amplitude:.3})"
                )));
            }
            return Ok(FullyDiscreteWave {
                coupling: *coupling,
                scheme_order: scheme.order(),
                dt,
                c,
                r,
                profile,
                residual: sup,
                front_amplitude,
                iterations,
            });
        }
        if iterations >= opts.max_iter || !sup.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                residual: sup,
            });
        }
        let jac = assemble_jacobian(model, kernel, scheme, coupling, c, r, &profile);
        let lu = jac.factor()?;
        let mut delta = res.values().to_vec();
        lu.solve(&mut delta);
        let mut scale = 1.0;
        if let Some(cap) = opts.max_step {
            let step = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step > cap {
                scale = cap / step;
            }
        }
        for (v, dv) in profile.values_mut().iter_mut().zip(delta.iter()) {
            *v -= scale * dv;
        }
        iterations += 1;
    }
}

/// Newton solve with a phase anchor `<seed', Phi - seed> = 0` and the
/// detuning as the compensating unknown: for the given cell speed this
/// locates the `r` at which a wave with interior-selected phase exists (the
/// `r(c)` viewpoint). Fixed-`(c, r)` solves leave the phase to be selected
/// by the window boundary instead.
#[allow(clippy::too_many_arguments)]
pub fn solve_fully_discrete_anchored(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    coupling: &RationalCoupling,
    dt: f64,
    r_seed: f64,
    seed: &WaveProfile,
    opts: &DiscreteSolveOptions,
) -> Result<FullyDiscreteWave> {
    let c = coupling.wavespeed(dt);
    let mut profile = seed
        .clone()
        .with_limits(model.p_minus().to_vec(), model.p_plus().to_vec());
    let mut r = r_seed;
    let p = profile.p() as f64;
    let d = profile.d();
    let n = profile.num_points() * d;
    let deriv = crate::semidiscrete::central_derivative(&profile);
    let phase_weights: Vec<f64> = deriv.values().iter().map(|v| v / p).collect();
    let seed_values = profile.values().to_vec();
    let mut iterations = 0;
    loop {
        let res = residual_field(model, kernel, scheme, coupling, dt, r, &profile)?;
        let sup = res.sup_norm();
        let phase: f64 = phase_weights
            .iter()
            .zip(profile.values().iter().zip(seed_values.iter()))
            .map(|(w, (u, s))| w * (u - s))
            .sum();
        if sup < opts.tol && phase.abs() < opts.tol {
            let front_amplitude = profile.component_range(0);
            if front_amplitude < opts.nontriviality {
                return Err(Error::DegenerateSolution(format!(
                    "converged to a trivial state (front amplitude {front_amplitude:.3})"
                )));
            }
            return Ok(FullyDiscreteWave {
                coupling: *coupling,
                scheme_order: scheme.order(),
                dt,
                c,
                r,
                profile,
                residual: sup,
                front_amplitude,
                iterations,
            });
        }
        if iterations >= opts.max_iter || !sup.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                residual: sup,
            });
        }
        let jac = assemble_jacobian(model, kernel, scheme, coupling, c, r, &profile);
        // dResidual/dr by central differences on the reaction term
        let eps = 1e-7;
        let mut dcol = vec![0.0; n];
        {
            let mut gp = vec![0.0; d];
            let mut gm = vec![0.0; d];
            for j in -profile.n_half()..=profile.n_half() {
                let u: Vec<f64> = (0..d).map(|cc| profile.value(j, cc)).collect();
                model.eval(&u, r + eps, &mut gp);
                model.eval(&u, r - eps, &mut gm);
                let row = ((j + profile.n_half()) as usize) * d;
                for cc in 0..d {
                    dcol[row + cc] = -(gp[cc] - gm[cc]) / (2.0 * eps);
                }
            }
        }
        let solver = crate::linalg::BorderedSolver::new(&jac, dcol, phase_weights.clone())?;
        let (delta, delta_r) = solver.solve(res.values(), phase);
        for (v, dv) in profile.values_mut().iter_mut().zip(delta.iter()) {
            *v -= dv;
        }
        r -= delta_r;
        iterations += 1;
    }
}

/// Re-solve from the seed shifted by one grid step and report the sup
/// discrepancy against the shifted original, checking the branch's
/// shift-periodicity at the computable level.
pub fn check_shift_periodicity(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    solution: &FullyDiscreteWave,
    opts: &DiscreteSolveOptions,
) -> Result<f64> {
    let shifted_seed = solution.profile.shifted(1);
    let resolved = solve_fully_discrete_wave(
        model,
        kernel,
        scheme,
        &solution.coupling,
        solution.dt,
        solution.r,
        &shifted_seed,
        opts,
    )?;
    let n = solution.profile.n_half();
    let margin = (kernel.m_max as i64 * solution.profile.p() as i64)
        .max(scheme.order() as i64 * solution.coupling.q() as i64)
        + 1;
    let mut sup = 0.0f64;
    for j in (-n + margin)..=(n - margin) {
        for cc in 0..solution.profile.d() {
            sup = sup
                .max((resolved.profile.value(j, cc) - solution.profile.value(j + 1, cc)).abs());
        }
    }
    Ok(sup)
}

/// The alignment functional `sum_xi <phi-(xi+theta), U(xi) - U0(xi+theta)>`
/// against a reference wave on a finer grid (cubic interpolation in theta).
pub fn normalization_functional(
    solution: &FullyDiscreteWave,
    reference: &SemiDiscreteWave,
    theta: f64,
) -> f64 {
    let d = solution.profile.d();
    let mut acc = 0.0;
    for j in -solution.profile.n_half()..=solution.profile.n_half() {
        let xi = solution.profile.xi(j) + theta;
        for c in 0..d {
            let phi_minus = reference.phi_minus.value_interpolated(xi, c);
            let u0 = reference.profile.value_interpolated(xi, c);
            acc += phi_minus * (solution.profile.value(j, c) - u0);
        }
    }
    acc
}

/// Scan for a sign change of the alignment functional over one grid cell
/// and bisect it.
pub fn find_normalization_root(
    solution: &FullyDiscreteWave,
    reference: &SemiDiscreteWave,
    theta_min: f64,
    theta_max: f64,
    scan_points: usize,
) -> Option<f64> {
    let mut prev_theta = theta_min;
    let mut prev_val = normalization_functional(solution, reference, prev_theta);
    for s in 1..=scan_points {
        let theta = theta_min + (theta_max - theta_min) * s as f64 / scan_points as f64;
        let val = normalization_functional(solution, reference, theta);
        if prev_val == 0.0 {
            return Some(prev_theta);
        }
        if prev_val * val < 0.0 {
            let (mut a, mut b) = (prev_theta, theta);
            let (mut fa, _fb) = (prev_val, val);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                let fm = normalization_functional(solution, reference, mid);
                if fa * fm <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev_theta = theta;
        prev_val = val;
    }
    None
}

/// One sweep cell outcome.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub p: u32,
    pub q: u32,
    pub c: f64,
    pub r: f64,
    pub converged: bool,
    pub residual: f64,
    pub front_amplitude: f64,
    pub iterations: usize,
    pub seed: String,
    pub in_theory: bool,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,q,c,r,converged,residual,front_amplitude,iters,seed\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:e},{},{},{}\n",
                row.p,
                row.q,
                row.c,
                row.r,
                row.converged,
                row.residual,
                row.front_amplitude,
                row.iterations,
                row.seed
            ));
        }
        out
    }

    pub fn converged_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.converged)
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub dt: f64,
    pub window: f64,
    pub p_values: Vec<u32>,
    /// Explore `q in 1..=q_max_factor * p` with `gcd(p, q) = 1`; pairs with
    /// `q > p` run outside the constructed regime and are marked so.
    pub q_max_factor: u32,
    pub r_values: Vec<f64>,
    pub scheme_order: usize,
    pub extension: Extension,
    pub options: DiscreteSolveOptions,
}

/// Seed sources in the order they are tried: a time-simulation pulse on the
/// integer lattice, a reference wave on a fine grid, then continuation from
/// the previous detuning cell of the same `(p, q)` pair.
#[derive(Clone, Debug, Default)]
pub struct SweepSeeds {
    pub sim_profile: Option<WaveProfile>,
    pub semi_profile: Option<WaveProfile>,
}

fn resample_seed(
    source: &WaveProfile,
    p: u32,
    n_half: i64,
    extension: Extension,
    model: &ReactionModel,
) -> WaveProfile {
    let mut out = WaveProfile::zeros(p, model.d(), n_half, extension)
        .with_limits(model.p_minus().to_vec(), model.p_plus().to_vec());
    for j in -n_half..=n_half {
        let xi = j as f64 / p as f64;
        for c in 0..model.d() {
            out.set(j, c, source.value_interpolated(xi, c));
        }
    }
    out
}

/// Run all `(p, q, r)` cells. Cells of one `(p, q)` pair share a detuning
/// continuation chain and run sequentially; distinct pairs are independent
/// and run under the requested execution mode. Output order is
/// deterministic regardless of the mode.
pub fn sweep(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    config: &SweepConfig,
    seeds: &SweepSeeds,
    mode: ExecMode,
) -> Result<SweepResult> {
    let scheme = bdf_scheme(config.scheme_order)?;
    let mut pairs = Vec::new();
    for &p in &config.p_values {
        for q in 1..=(config.q_max_factor * p) {
            if crate::rational::gcd(p as u64, q as u64) == 1 {
                pairs.push((p, q));
            }
        }
    }
    let chains = run_tasks(mode, pairs.len(), |idx| {
        let (p, q) = pairs[idx];
        sweep_chain(model, kernel, &scheme, config, seeds, p, q)
    });
    let mut rows = Vec::new();
    for chain in chains {
        rows.extend(chain?);
    }
    Ok(SweepResult { rows })
}

fn sweep_chain(
    model: &ReactionModel,
    kernel: &InteractionKernel,
    scheme: &BdfScheme,
    config: &SweepConfig,
    seeds: &SweepSeeds,
    p: u32,
    q: u32,
) -> Result<Vec<SweepRow>> {
    let coupling = RationalCoupling::new_unrestricted(p, q)?;
    let n_half = WaveProfile::steps_for_window(p, config.window)?;
    let mut base_seeds: Vec<(String, WaveProfile)> = Vec::new();
    if let Some(sim) = &seeds.sim_profile {
        base_seeds.push((
            "sim".into(),
            resample_seed(sim, p, n_half, config.extension, model),
        ));
    }
    if let Some(semi) = &seeds.semi_profile {
        base_seeds.push((
            "semi".into(),
            resample_seed(semi, p, n_half, config.extension, model),
        ));
    }
    let mut prev: Option<WaveProfile> = None;
    let mut rows = Vec::new();
    for &r in &config.r_values {
        let mut attempts: Vec<(String, WaveProfile)> = Vec::new();
        if let Some(prev_profile) = &prev {
            attempts.push(("continuation".into(), prev_profile.clone()));
        }
        attempts.extend(base_seeds.iter().cloned());
        let mut row = SweepRow {
            p,
            q,
            c: coupling.wavespeed(config.dt),
            r,
            converged: false,
            residual: f64::NAN,
            front_amplitude: 0.0,
            iterations: 0,
            seed: "none".into(),
            in_theory: coupling.in_theory(),
        };
        for (label, seed) in attempts {
            match solve_fully_discrete_wave(
                model,
                kernel,
                scheme,
                &coupling,
                config.dt,
                r,
                &seed,
                &config.options,
            ) {
                Ok(wave) => {
                    row.converged = true;
                    row.residual = wave.residual;
                    row.front_amplitude = wave.front_amplitude;
                    row.iterations = wave.iterations;
                    row.seed = label;
                    prev = Some(wave.profile);
                    break;
                }
                Err(_) => continue,
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
