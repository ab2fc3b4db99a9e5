//! Rational grid arithmetic, lattice profiles and weighted inner products.
//!
//! All grids are uniform with spacing `1/p`; points are addressed by the
//! integer index `j` with `xi = j / p`, so shifts by whole lattice units are
//! offsets of `p` indices and shifts by `M^{-1} = q/p` are offsets of `q`
//! indices. No floating-point coordinates appear in index arithmetic.

use crate::error::{Error, Result};
use crate::rational::{gcd, Ratio};
use serde::{Deserialize, Serialize};

/// Rule used to extend a windowed profile beyond its stored range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// Constant continuation by the asymptotic states `P-` / `P+`.
    #[serde(rename = "constant-by-limits")]
    ConstantLimits,
    /// Copy the nearest stored value (ghost-cell convention of the sweep).
    #[serde(rename = "neumann")]
    Neumann,
    /// Linear extrapolation from the outermost two samples.
    #[serde(rename = "linear")]
    Linear,
}


/// Columns a sample at index `j` resolves to under an extension rule, as
/// `(column index, weight)` pairs; constant extension contributes nothing to
/// derivatives with respect to the stored unknowns.
pub(crate) fn extension_columns(extension: Extension, n_half: i64, j: i64) -> Vec<(i64, f64)> {
    if j >= -n_half && j <= n_half {
        return vec![(j, 1.0)];
    }
    match extension {
        Extension::ConstantLimits => vec![],
        Extension::Neumann => vec![(j.clamp(-n_half, n_half), 1.0)],
        Extension::Linear => {
            if j < -n_half {
                let s = (j + n_half).abs() as f64;
                vec![(-n_half, 1.0 + s), (-n_half + 1, -s)]
            } else {
                let s = (j - n_half) as f64;
                vec![(n_half, 1.0 + s), (n_half - 1, -s)]
            }
        }
    }
}

/// The coupling constant `M = p/q` together with the shift count `n` and the
/// rotation number `theta` fixed by `1 = (n + theta) / M` with
/// `theta in (0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RationalCoupling {
    p: u32,
    q: u32,
    n: u32,
    theta_num: u32,
    in_theory: bool,
}

impl RationalCoupling {
    /// Build the coupling for `M = p/q >= 1` with `gcd(p, q) = 1`.
    pub fn new(p: u32, q: u32) -> Result<Self> {
        if p < q {
            return Err(Error::InvalidParameter(format!(
                "M = {p}/{q} < 1 is outside the admissible set (need p >= q)"
            )));
        }
        Self::new_unrestricted(p, q)
    }

    /// Accept any coprime pair, including `p < q` (`c dt > 1`), which the
    /// parameter sweep explores beyond the regime the construction covers.
    pub fn new_unrestricted(p: u32, q: u32) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidParameter("p and q must be positive".into()));
        }
        if gcd(p as u64, q as u64) != 1 {
            return Err(Error::InvalidParameter(format!(
                "gcd({p}, {q}) != 1: grid would be degenerate"
            )));
        }
        // theta = (p - n q)/q in (0, 1] forces theta*q = ((p-1) mod q) + 1.
        let theta_num = (p - 1) % q + 1;
        let n = (p - theta_num) / q;
        Ok(RationalCoupling {
            p,
            q,
            n,
            theta_num,
            in_theory: p >= q,
        })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Integer part `n` of `M = n + theta`.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Rotation number as an exact fraction `theta = theta_num / q`.
    pub fn theta(&self) -> Ratio {
        Ratio::new(self.theta_num as i64, self.q as i64)
    }

    /// Numerator of the rotation number, i.e. `theta * q`.
    pub fn theta_num(&self) -> u32 {
        self.theta_num
    }

    pub fn m(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    pub fn m_ratio(&self) -> Ratio {
        Ratio::new(self.p as i64, self.q as i64)
    }

    /// Whether `M >= 1`, the regime the wave construction actually covers.
    pub fn in_theory(&self) -> bool {
        self.in_theory
    }

    /// `gcd(p, theta q) = 1` holds for many but not all admissible pairs;
    /// exposed as a diagnostic rather than enforced.
    pub fn coprime_p_thetaq(&self) -> bool {
        gcd(self.p as u64, self.theta_num as u64) == 1
    }

    /// Wavespeed for a given time step via `c dt = 1/M = q/p`.
    pub fn wavespeed(&self, dt: f64) -> f64 {
        self.q as f64 / (self.p as f64 * dt)
    }
}

/// A `d`-component field sampled on `xi = j/p` for `j in [-n_half, n_half]`,
/// together with its asymptotic states and boundary extension rule.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveProfile {
    p: u32,
    d: usize,
    n_half: i64,
    values: Vec<f64>,
    p_minus: Vec<f64>,
    p_plus: Vec<f64>,
    extension: Extension,
}

impl WaveProfile {
    pub fn zeros(p: u32, d: usize, n_half: i64, extension: Extension) -> Self {
        WaveProfile {
            p,
            d,
            n_half,
            values: vec![0.0; (2 * n_half as usize + 1) * d],
            p_minus: vec![0.0; d],
            p_plus: vec![0.0; d],
            extension,
        }
    }

    pub fn with_limits(mut self, p_minus: Vec<f64>, p_plus: Vec<f64>) -> Self {
        assert_eq!(p_minus.len(), self.d);
        assert_eq!(p_plus.len(), self.d);
        self.p_minus = p_minus;
        self.p_plus = p_plus;
        self
    }

    /// Pointwise sampling of a continuous function descriptor on the grid.
    pub fn restrict<F>(p: u32, d: usize, n_half: i64, extension: Extension, f: F) -> Self
    where
        F: Fn(f64, usize) -> f64,
    {
        let mut profile = WaveProfile::zeros(p, d, n_half, extension);
        for j in -n_half..=n_half {
            let xi = j as f64 / p as f64;
            for c in 0..d {
                profile.set(j, c, f(xi, c));
            }
        }
        profile
    }

    /// Window half-length `L` with `n_half = L p`; errors if `L p` is not an
    /// integer count of grid steps.
    pub fn steps_for_window(p: u32, window: f64) -> Result<i64> {
        let n = window * p as f64;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::GridMismatch(format!(
                "window {window} is not an integer multiple of the spacing 1/{p}"
            )));
        }
        Ok(n.round() as i64)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_half(&self) -> i64 {
        self.n_half
    }

    pub fn num_points(&self) -> usize {
        2 * self.n_half as usize + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.p as f64
    }

    pub fn half_width(&self) -> f64 {
        self.n_half as f64 / self.p as f64
    }

    pub fn xi(&self, j: i64) -> f64 {
        j as f64 / self.p as f64
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn set_extension(&mut self, extension: Extension) {
        self.extension = extension;
    }

    pub fn p_minus(&self) -> &[f64] {
        &self.p_minus
    }

    pub fn p_plus(&self) -> &[f64] {
        &self.p_plus
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn offset(&self, j: i64, c: usize) -> usize {
        debug_assert!(j.abs() <= self.n_half && c < self.d);
        ((j + self.n_half) as usize) * self.d + c
    }

    /// Value at index `j`, applying the boundary extension outside the window.
    pub fn value(&self, j: i64, c: usize) -> f64 {
        let n = self.n_half;
        if j >= -n && j <= n {
            return self.values[self.offset(j, c)];
        }
        match self.extension {
            Extension::ConstantLimits => {
                if j < -n {
                    self.p_minus[c]
                } else {
                    self.p_plus[c]
                }
            }
            Extension::Neumann => {
                let jc = j.clamp(-n, n);
                self.values[self.offset(jc, c)]
            }
            Extension::Linear => {
                if j < -n {
                    let v0 = self.values[self.offset(-n, c)];
                    let v1 = self.values[self.offset(-n + 1, c)];
                    v0 + (j + n) as f64 * (v1 - v0)
                } else {
                    let v0 = self.values[self.offset(n, c)];
                    let v1 = self.values[self.offset(n - 1, c)];
                    v0 + (j - n) as f64 * (v0 - v1)
                }
            }
        }
    }

    pub fn set(&mut self, j: i64, c: usize, v: f64) {
        let idx = self.offset(j, c);
        self.values[idx] = v;
    }

    pub fn same_grid(&self, other: &WaveProfile) -> bool {
        self.p == other.p && self.d == other.d && self.n_half == other.n_half
    }

    fn check_grid(&self, other: &WaveProfile) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch(format!(
                "profiles on (p={}, d={}, n={}) vs (p={}, d={}, n={})",
                self.p, self.d, self.n_half, other.p, other.d, other.n_half
            )));
        }
        Ok(())
    }

    /// `mu^{-1} sum <u(xi), v(xi)>` over the shared window.
    pub fn inner_scaled(&self, other: &WaveProfile, mu: f64) -> Result<f64> {
        self.check_grid(other)?;
        let dot: f64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum();
        Ok(dot / mu)
    }

    /// Norm in the natural scaling `mu = p`.
    pub fn norm_scaled(&self) -> f64 {
        let dot: f64 = self.values.iter().map(|a| a * a).sum();
        (dot / self.p as f64).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Max minus min of one component over the window.
    pub fn component_range(&self, c: usize) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in -self.n_half..=self.n_half {
            let v = self.values[self.offset(j, c)];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> WaveProfile {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v = f(*v);
        }
        out
    }

    /// `self - other` on the shared grid.
    pub fn difference(&self, other: &WaveProfile) -> Result<WaveProfile> {
        self.check_grid(other)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(other.values.iter()) {
            *a -= b;
        }
        Ok(out)
    }

    /// Spatial reflection `out(j) = self(-j)` with the limit states swapped;
    /// for reflection-symmetric couplings this flips the wavespeed sign.
    pub fn mirrored(&self) -> WaveProfile {
        let mut out = self
            .clone()
            .with_limits(self.p_plus.clone(), self.p_minus.clone());
        for j in -self.n_half..=self.n_half {
            for c in 0..self.d {
                out.set(j, c, self.value(-j, c));
            }
        }
        out
    }

    /// Profile shifted by `steps` grid indices: `out(j) = self(j + steps)`.
    pub fn shifted(&self, steps: i64) -> WaveProfile {
        let mut out = self.clone();
        for j in -self.n_half..=self.n_half {
            for c in 0..self.d {
                out.set(j, c, self.value(j + steps, c));
            }
        }
        out
    }

    /// Cubic (4-point Lagrange) interpolation at an arbitrary coordinate.
    pub fn value_interpolated(&self, xi: f64, c: usize) -> f64 {
        let x = xi * self.p as f64;
        let j0 = x.floor() as i64;
        let t = x - j0 as f64;
        if t.abs() < 1e-13 {
            return self.value(j0, c);
        }
        let f = [
            self.value(j0 - 1, c),
            self.value(j0, c),
            self.value(j0 + 1, c),
            self.value(j0 + 2, c),
        ];
        let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        w0 * f[0] + w1 * f[1] + w2 * f[2] + w3 * f[3]
    }

    /// Resample onto a grid of density `p_new` over (at most) the same window.
    /// Exact when `p_new` divides `p`, cubic interpolation otherwise.
    pub fn resample(&self, p_new: u32, n_half_new: i64) -> WaveProfile {
        let mut out = WaveProfile::zeros(p_new, self.d, n_half_new, self.extension)
            .with_limits(self.p_minus.clone(), self.p_plus.clone());
        let exact = self.p.is_multiple_of(p_new.max(1));
        let stride = (self.p / p_new.max(1)) as i64;
        for j in -n_half_new..=n_half_new {
            for c in 0..self.d {
                let v = if exact {
                    self.value(j * stride, c)
                } else {
                    self.value_interpolated(j as f64 / p_new as f64, c)
                };
                out.set(j, c, v);
            }
        }
        out
    }
}

/// Trapezoid-weighted transverse inner product on `q+1` samples of
/// `d`-vectors indexed by `zeta in {0, 1/q, ..., 1}`.
pub fn inner_product_transverse(a: &[f64], b: &[f64], q: u32, d: usize) -> Result<f64> {
    let len = (q as usize + 1) * d;
    if a.len() != len || b.len() != len {
        return Err(Error::GridMismatch(format!(
            "transverse vectors need {} entries, got {} and {}",
            len,
            a.len(),
            b.len()
        )));
    }
    let mut sum = 0.0;
    for s in 0..=q as usize {
        let w = if s == 0 || s == q as usize { 0.5 } else { 1.0 };
        for c in 0..d {
            sum += w * a[s * d + c] * b[s * d + c];
        }
    }
    Ok(sum / q as f64)
}

/// A seam-consistent field on `(zeta, xi) in q^{-1}Z_q x M^{-1}Z`.
///
/// The seam identity `Phi(1, xi) = Phi(0, xi + M^{-1})` means the independent
/// data is exactly a profile on the flattened grid `p^{-1}Z` via
/// `x = xi + zeta/M`; the field stores that profile and resolves `(zeta, xi)`
/// accesses through it, so the identity holds by construction.
#[derive(Clone, Debug)]
pub struct PeriodicField {
    coupling: RationalCoupling,
    t_half: i64,
    profile: WaveProfile,
}

impl PeriodicField {
    /// Embed a profile on `p^{-1}Z` as `[J Phi](zeta, xi) = Phi(xi + zeta/M)`.
    /// The profile window must hold a whole number of `M^{-1}` blocks.
    pub fn embed(profile: WaveProfile, coupling: RationalCoupling) -> Result<Self> {
        if profile.p() != coupling.p() {
            return Err(Error::GridMismatch(format!(
                "profile density {} does not match coupling p = {}",
                profile.p(),
                coupling.p()
            )));
        }
        let q = coupling.q() as i64;
        if profile.n_half() % q != 0 {
            return Err(Error::GridMismatch(format!(
                "window of {} steps is not a multiple of q = {}",
                profile.n_half(),
                q
            )));
        }
        let t_half = profile.n_half() / q;
        Ok(PeriodicField {
            coupling,
            t_half,
            profile,
        })
    }

    pub fn coupling(&self) -> &RationalCoupling {
        &self.coupling
    }

    /// Half-extent of the `xi` index range (`xi = t / M`).
    pub fn t_half(&self) -> i64 {
        self.t_half
    }

    pub fn d(&self) -> usize {
        self.profile.d()
    }

    /// Flattened index of the point `(zeta, xi) = (s/q, t/M)`.
    pub fn flat_index(&self, s: i64, t: i64) -> i64 {
        t * self.coupling.q() as i64 + s
    }

    /// Value at `zeta = s/q`, `xi = t/M`; `s = q` reads through the seam.
    pub fn value(&self, s: i64, t: i64, c: usize) -> f64 {
        self.profile.value(self.flat_index(s, t), c)
    }

    pub fn profile(&self) -> &WaveProfile {
        &self.profile
    }

    pub fn profile_mut(&mut self) -> &mut WaveProfile {
        &mut self.profile
    }

    pub fn into_profile(self) -> WaveProfile {
        self.profile
    }

    /// Inner product of the underlying sequence space; on the window this is
    /// the flattened `p^{-1}`-weighted sum, which is what makes the embedding
    /// an isometry.
    pub fn inner(&self, other: &PeriodicField) -> Result<f64> {
        self.profile
            .inner_scaled(&other.profile, self.coupling.p() as f64)
    }

    pub fn norm(&self) -> f64 {
        self.profile.norm_scaled()
    }
}

/// Serialization schema for profile files.
#[derive(Serialize, Deserialize)]
pub struct ProfileFile {
    pub p: u32,
    pub q: u32,
    pub l: f64,
    pub d: usize,
    pub p_minus: Vec<f64>,
    pub p_plus: Vec<f64>,
    pub extension: Extension,
    pub values: Vec<f64>,
}

impl ProfileFile {
    pub fn from_profile(profile: &WaveProfile, q: u32) -> Self {
        ProfileFile {
            p: profile.p(),
            q,
            l: profile.half_width(),
            d: profile.d(),
            p_minus: profile.p_minus().to_vec(),
            p_plus: profile.p_plus().to_vec(),
            extension: profile.extension(),
            values: profile.values().to_vec(),
        }
    }

    pub fn into_profile(self) -> Result<WaveProfile> {
        let n_half = WaveProfile::steps_for_window(self.p, self.l)?;
        if self.values.len() != (2 * n_half as usize + 1) * self.d {
            return Err(Error::GridMismatch(format!(
                "profile file has {} values, expected {}",
                self.values.len(),
                (2 * n_half as usize + 1) * self.d
            )));
        }
        let mut profile = WaveProfile::zeros(self.p, self.d, n_half, self.extension)
            .with_limits(self.p_minus, self.p_plus);
        profile.values_mut().copy_from_slice(&self.values);
        Ok(profile)
    }
}

/// Two-column (plus one per component) CSV export for plotting.
pub fn profile_to_csv(profile: &WaveProfile) -> String {
    let mut out = String::from("xi");
    for c in 0..profile.d() {
        out.push_str(&format!(",u{c}"));
    }
    out.push('\n');
    for j in -profile.n_half()..=profile.n_half() {
        out.push_str(&format!("{}", profile.xi(j)));
        for c in 0..profile.d() {
            out.push_str(&format!(",{}", profile.value(j, c)));
        }
        out.push('\n');
    }
    out
}
