//! Run configuration: one JSON document holding the model, kernel, scheme,
//! grid and per-command blocks. Artifacts embed a hash of the raw
//! configuration bytes so runs can be traced back to their inputs.

use anyhow::{bail, Context, Result};
use latticewave::grid::Extension;
use latticewave::kernel::{build_gaussian_kernel, build_nearest_neighbor_kernel, InteractionKernel};
use latticewave::model::{by_name, ReactionModel};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Optional per-equation weight multiplying the reaction term; the
    /// effective coupling becomes `scale / h^2` when `h` is given.
    #[serde(default)]
    pub scale: Option<f64>,
}

fn default_rho() -> f64 {
    0.01
}

fn default_gamma() -> f64 {
    5.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelConfig {
    pub name: String,
    #[serde(default)]
    pub tau: Option<f64>,
    /// Lattice distance; used as `tau = scale / h^2` when `tau` is absent.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

fn default_tail_tol() -> f64 {
    1e-14
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRanges {
    pub p_values: Vec<u32>,
    #[serde(default = "default_q_factor")]
    pub q_max_factor: u32,
    pub r_values: Vec<f64>,
}

fn default_q_factor() -> u32 {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default)]
    pub p: Option<u32>,
    #[serde(default)]
    pub q: Option<u32>,
    #[serde(default = "default_window")]
    pub l: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Fine grid density for the co-moving reference solve.
    #[serde(default = "default_p0")]
    pub p0: u32,
    #[serde(default = "default_extension")]
    pub extension: Extension,
    #[serde(default)]
    pub sweep: Option<SweepRanges>,
}

fn default_window() -> f64 {
    80.0
}

fn default_dt() -> f64 {
    2.0
}

fn default_p0() -> u32 {
    8
}

fn default_extension() -> Extension {
    Extension::Neumann
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
    /// Path of a profile JSON used to seed wave solves.
    #[serde(default)]
    pub seed_profile: Option<String>,
    /// Reflect the seed profile (waves of the opposite orientation).
    #[serde(default)]
    pub mirror_seed: bool,
    /// Shifted-inverse offsets for the resolvent / diagnostic commands.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Time-integration parameters for `simulate` and internal seeding.
    #[serde(default = "default_sim_steps")]
    pub sim_steps: usize,
    #[serde(default = "default_sim_dt")]
    pub sim_dt: f64,
    #[serde(default = "default_sim_window")]
    pub sim_window: i64,
    /// Snapshot stride for `simulate` (one snapshot every this many steps).
    #[serde(default)]
    pub sim_stride: Option<usize>,
    /// Initial excitation for simulations: [left, right, height].
    #[serde(default = "default_excitation")]
    pub excitation: (i64, i64, f64),
    /// Wavespeed of the reference wave, for scans run without a bundle.
    #[serde(default)]
    pub c0: Option<f64>,
    /// Wave bundle JSON produced by `solve-semi`.
    #[serde(default)]
    pub wave_bundle: Option<String>,
    #[serde(default)]
    pub nontriviality: Option<f64>,
}

fn default_r() -> f64 {
    0.11
}

fn default_tol() -> f64 {
    1e-11
}

fn default_max_iter() -> usize {
    50
}

fn default_seed() -> u64 {
    42
}

fn default_deltas() -> Vec<f64> {
    vec![0.01, 0.05]
}

fn default_sim_steps() -> usize {
    800
}

fn default_sim_dt() -> f64 {
    0.2
}

fn default_sim_window() -> i64 {
    120
}

fn default_excitation() -> (i64, i64, f64) {
    (-115, -75, 1.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Config {
    pub model: ModelConfig,
    pub kernel: KernelConfig,
    #[serde(default = "default_scheme")]
    pub scheme: usize,
    pub grid: GridConfig,
    #[serde(default = "default_run")]
    pub run: RunConfig,
}

fn default_scheme() -> usize {
    1
}

fn default_run() -> RunConfig {
    serde_json::from_str("{}").expect("all run fields have defaults")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Config = serde_json::from_str(text).context("malformed configuration")?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.scheme) {
            bail!("scheme order {} outside 1..=6", self.scheme);
        }
        if self.grid.dt <= 0.0 || self.grid.l <= 0.0 {
            bail!("grid step and window must be positive");
        }
        if !(0.0..1.0).contains(&self.run.r) {
            bail!("detuning r = {} outside (0, 1)", self.run.r);
        }
        Ok(())
    }

    /// Base reaction model, before any per-equation scaling.
    pub fn base_model(&self) -> Result<ReactionModel> {
        Ok(by_name(&self.model.name, self.model.rho, self.model.gamma)?)
    }

    /// Model with the configured per-equation weight applied.
    pub fn model(&self) -> Result<ReactionModel> {
        let base = self.base_model()?;
        Ok(match self.model.scale {
            Some(s) => base.scaled(s),
            None => base,
        })
    }

    pub fn tau(&self) -> Result<f64> {
        if let Some(tau) = self.kernel.tau {
            return Ok(tau);
        }
        if let Some(h) = self.kernel.h {
            let scale = self.model.scale.unwrap_or(1.0);
            return Ok(scale / (h * h));
        }
        bail!("kernel block needs either tau or h");
    }

    pub fn kernel(&self, model: &ReactionModel) -> Result<InteractionKernel> {
        let tau = self.tau()?;
        let kernel = match self.kernel.name.as_str() {
            "nearest-neighbor" => {
                build_nearest_neighbor_kernel(model.d(), model.d_diff(), tau)?
            }
            "gaussian" => {
                build_gaussian_kernel(model.d(), model.d_diff(), tau, self.kernel.tail_tol)?
            }
            other => bail!("unknown kernel '{other}' (expected 'nearest-neighbor' or 'gaussian')"),
        };
        Ok(kernel)
    }
}

/// FNV-1a hash of the raw configuration text; stable across runs and
/// platforms, embedded into every artifact.
pub fn config_hash(text: &str) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"name": "fhn", "rho": 0.01, "gamma": 5.0, "scale": 0.625},
        "kernel": {"name": "nearest-neighbor", "h": 0.625},
        "scheme": 1,
        "grid": {"p": 8, "q": 5, "l": 80.0, "dt": 2.0}
    }"#;

    #[test]
    fn parses_and_resolves_effective_coupling() {
        let config = Config::parse(MINIMAL).unwrap();
        // tau = scale / h^2 = h / h^2 = 1/h = 1.6
        assert!((config.tau().unwrap() - 1.6).abs() < 1e-15);
        let model = config.model().unwrap();
        assert_eq!(model.d(), 2);
        config.kernel(&model).unwrap();
        // defaults fill the run block
        assert_eq!(config.run.max_iter, 50);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Config::parse("{").is_err());
        let bad_scheme = MINIMAL.replace("\"scheme\": 1", "\"scheme\": 9");
        assert!(Config::parse(&bad_scheme).is_err());
        let bad_model = MINIMAL.replace("\"fhn\"", "\"unknown\"");
        let config = Config::parse(&bad_model).unwrap();
        assert!(config.model().is_err());
    }

    #[test]
    fn hash_is_stable_and_distinguishes_content() {
        let a = config_hash(MINIMAL);
        let b = config_hash(MINIMAL);
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert_ne!(a, config_hash(&format!("{MINIMAL} ")));
    }
}
