//! Implicit multistep time integration of the full lattice system, used to
//! generate wave seeds and to measure empirical wavespeeds.

use crate::bdf::{bdf_scheme, BdfScheme};
use crate::error::{Error, Result};
use crate::grid::{Extension, WaveProfile};
use crate::kernel::{apply_nonlocal_laplacian, InteractionKernel};
use crate::linalg::BandMatrix;
use crate::model::ReactionModel;
use serde::Serialize;
use std::collections::VecDeque;

const STEP_TOL: f64 = 1e-11;
const MAX_NEWTON: usize = 25;

/// Lattice state plus the step history the multistep scheme needs.
#[derive(Clone, Debug)]
pub struct SimulationState {
    /// Current lattice values as a profile on integer sites (`p = 1`).
    pub current: WaveProfile,
    /// Previous states, oldest first; grows to length `k` during warm-up.
    pub history: VecDeque<WaveProfile>,
    pub time: f64,
    pub steps: usize,
}

pub struct Simulation {
    model: ReactionModel,
    kernel: InteractionKernel,
    scheme: BdfScheme,
    r: f64,
    dt: f64,
    pub state: SimulationState,
}

impl Simulation {
    /// Start from initial lattice data on sites `[-j_half, j_half]` with
    /// Neumann ghost cells.
    pub fn new(
        model: ReactionModel,
        kernel: InteractionKernel,
        scheme: BdfScheme,
        r: f64,
        dt: f64,
        mut initial: WaveProfile,
    ) -> Result<Self> {
        if initial.p() != 1 {
            return Err(Error::GridMismatch(
                "time simulation runs on integer lattice sites (p = 1)".into(),
            ));
        }
        if initial.d() != model.d() {
            return Err(Error::GridMismatch(
                "initial data dimension does not match the model".into(),
            ));
        }
        initial.set_extension(Extension::Neumann);
        Ok(Simulation {
            model,
            kernel,
            scheme,
            r,
            dt,
            state: SimulationState {
                current: initial,
                history: VecDeque::new(),
                time: 0.0,
                steps: 0,
            },
        })
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn current(&self) -> &WaveProfile {
        &self.state.current
    }

    /// Advance one implicit step. While the history is still shorter than
    /// `k - 1`, lower-order schemes bootstrap it (order laddering).
    pub fn step(&mut self) -> Result<()> {
        let have = self.state.history.len();
        let k_eff = (have + 1).min(self.scheme.order());
        let scheme = if k_eff == self.scheme.order() {
            self.scheme.clone()
        } else {
            bdf_scheme(k_eff)?
        };
        let next = self.solve_step(&scheme)?;
        self.state.history.push_back(self.state.current.clone());
        while self.state.history.len() > self.scheme.order().saturating_sub(1) {
            self.state.history.pop_front();
        }
        self.state.current = next;
        self.state.time += self.dt;
        self.state.steps += 1;
        Ok(())
    }

    /// Newton solve of
    /// `beta^{-1} dt^{-1} sum mu_{n'} W(t - (k - n') dt) = tau Delta W + G(W)`
    /// for the newest state, seeded with the previous one.
    fn solve_step(&self, scheme: &BdfScheme) -> Result<WaveProfile> {
        let k = scheme.order();
        let d = self.model.d();
        let n_half = self.state.current.n_half();
        let n_points = self.state.current.num_points();
        let n = n_points * d;
        let a = 1.0 / (scheme.beta_f64() * self.dt);

        // history part of the left-hand side (everything except n' = k)
        let mut hist = WaveProfile::zeros(1, d, n_half, Extension::Neumann);
        for n_prime in 0..k {
            let state = if n_prime + 1 < k {
                // W(t - (k - n') dt): history holds the last k-1 states
                let idx = self.state.history.len() + 1 + n_prime - k;
                &self.state.history[idx]
            } else {
                &self.state.current
            };
            let mu = scheme.weight(n_prime);
            for j in -n_half..=n_half {
                for c in 0..d {
                    let v = hist.value(j, c) + mu * state.value(j, c);
                    hist.set(j, c, v);
                }
            }
        }

        let mut w = self.state.current.clone();
        let kl = self.kernel.m_max * d + d;
        let mut g = vec![0.0; d];
        let mut dg = vec![0.0; d * d];
        for iter in 0..MAX_NEWTON {
            // residual F(W) = a (mu_k W + hist) - tau Delta W - G(W)
            let lap = apply_nonlocal_laplacian(&self.kernel, &w)?;
            let mut residual = vec![0.0; n];
            let mut sup = 0.0f64;
            for j in -n_half..=n_half {
                let row = ((j + n_half) as usize) * d;
                let u: Vec<f64> = (0..d).map(|c| w.value(j, c)).collect();
                self.model.eval(&u, self.r, &mut g);
                for c in 0..d {
                    let f = a * (w.value(j, c) + hist.value(j, c)) - lap.value(j, c) - g[c];
                    residual[row + c] = f;
                    sup = sup.max(f.abs());
                }
            }
            // exact equilibria are accepted immediately; anything else gets
            // at least one update so linear problems are solved to rounding
            if sup == 0.0 || (iter > 0 && sup < STEP_TOL) {
                return Ok(w);
            }
            if iter == MAX_NEWTON - 1 {
                return Err(Error::NonConvergence {
                    iterations: MAX_NEWTON,
                    residual: sup,
                });
            }

            // Jacobian a I - tau dLap - DG(W)
            let mut jac = BandMatrix::zeros(n, kl, kl);
            for j in -n_half..=n_half {
                let row = ((j + n_half) as usize) * d;
                let u: Vec<f64> = (0..d).map(|c| w.value(j, c)).collect();
                self.model.jacobian(&u, self.r, &mut dg);
                for c in 0..d {
                    jac.add(row + c, row + c, a);
                    for c2 in 0..d {
                        jac.add(row + c, row + c2, -dg[c * d + c2]);
                    }
                    if c < self.kernel.d_diff {
                        let tau = self.kernel.tau;
                        for m in 1..=self.kernel.m_max {
                            let alpha = self.kernel.alpha(m, c);
                            if alpha == 0.0 {
                                continue;
                            }
                            jac.add(row + c, row + c, 2.0 * tau * alpha);
                            for sgn in [-1i64, 1] {
                                // Neumann ghosts clamp to the nearest site
                                let jj = (j + sgn * m as i64).clamp(-n_half, n_half);
                                let col = ((jj + n_half) as usize) * d + c;
                                jac.add(row + c, col, -tau * alpha);
                            }
                        }
                    }
                }
            }
            let lu = jac.factor()?;
            let mut delta = residual;
            lu.solve(&mut delta);
            for j in -n_half..=n_half {
                let row = ((j + n_half) as usize) * d;
                for c in 0..d {
                    let v = w.value(j, c) - delta[row + c];
                    w.set(j, c, v);
                }
            }
        }
        unreachable!()
    }

    /// Run `steps` steps, recording a snapshot every `stride` steps
    /// (including the initial state).
    pub fn run(&mut self, steps: usize, stride: usize) -> Result<Trajectory> {
        let mut snapshots = vec![(self.state.time, self.state.current.clone())];
        for s in 0..steps {
            self.step()?;
            if stride > 0 && (s + 1) % stride == 0 {
                snapshots.push((self.state.time, self.state.current.clone()));
            }
        }
        Ok(Trajectory { snapshots })
    }
}

/// Recorded snapshots of one simulation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, WaveProfile)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WavespeedEstimate {
    pub speed: f64,
    pub fit_residual: f64,
    /// Time window of the fit.
    pub window: (f64, f64),
    pub crossings: usize,
}

/// Rightmost sub-grid crossing of `level` in the given component.
fn level_crossing(profile: &WaveProfile, level: f64, component: usize) -> Option<f64> {
    let n = profile.n_half();
    for j in (-n..n).rev() {
        let a = profile.value(j, component) - level;
        let b = profile.value(j + 1, component) - level;
        if a == 0.0 {
            return Some(j as f64);
        }
        if a * b < 0.0 {
            return Some(j as f64 + a / (a - b));
        }
    }
    None
}

/// Least-squares slope of the level-crossing position over the final half of
/// the trajectory.
pub fn measure_wavespeed(
    trajectory: &Trajectory,
    level: f64,
    component: usize,
) -> Result<WavespeedEstimate> {
    let mut points = Vec::new();
    for (t, profile) in &trajectory.snapshots {
        if let Some(x) = level_crossing(profile, level, component) {
            if x.abs() < profile.n_half() as f64 - 1.0 {
                points.push((*t, x));
            }
        }
    }
    if points.len() < 4 {
        return Err(Error::DegenerateSolution(format!(
            "only {} level crossings found; front missing or out of window",
            points.len()
        )));
    }
    let tail = points.split_off(points.len() / 2);
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let den: f64 = tail.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    if den == 0.0 {
        return Err(Error::DegenerateSolution("degenerate time axis".into()));
    }
    let speed = num / den;
    let intercept = mx - speed * mt;
    let fit_residual = tail
        .iter()
        .map(|p| (p.1 - speed * p.0 - intercept).powi(2))
        .sum::<f64>()
        .sqrt()
        / n.sqrt();
    Ok(WavespeedEstimate {
        speed,
        fit_residual,
        window: (tail.first().unwrap().0, tail.last().unwrap().0),
        crossings: tail.len(),
    })
}

/// Default seeds: a rising front in the first component, or a localized
/// rectangular excitation for pulse-forming systems.
pub fn tanh_front_seed(d: usize, j_half: i64, center: f64, width: f64) -> WaveProfile {
    let mut out = WaveProfile::zeros(1, d, j_half, Extension::Neumann);
    for j in -j_half..=j_half {
        let x = (j as f64 - center) / width;
        out.set(j, 0, 0.5 * (1.0 + x.tanh()));
    }
    out
}

pub fn pulse_seed(d: usize, j_half: i64, left: i64, right: i64, height: f64) -> WaveProfile {
    let mut out = WaveProfile::zeros(1, d, j_half, Extension::Neumann);
    for j in left.max(-j_half)..=right.min(j_half) {
        out.set(j, 0, height);
    }
    out
}
