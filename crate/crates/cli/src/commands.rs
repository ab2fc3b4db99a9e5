//! Command implementations: each binds the configuration to the library
//! solvers and writes its artifacts under the output directory.

use crate::config::{config_hash, Config};
use crate::logging::{log_debug, log_info};
use anyhow::{anyhow, bail, Context, Result};
use latticewave::bdf::bdf_scheme;
use latticewave::exec::ExecMode;
use latticewave::fullydiscrete::{
    solve_fully_discrete_wave, sweep, DiscreteSolveOptions, SweepConfig, SweepSeeds,
};
use latticewave::grid::{profile_to_csv, ProfileFile, RationalCoupling, WaveProfile};
use latticewave::kernel::check_kernel_conditions;
use latticewave::model::{check_equilibria, check_stability};
use latticewave::semidiscrete::{
    estimate_spectral_gap, resolvent_decomposition_check, resolvent_kernel_case,
    simulation_seed, solve_semidiscrete_wave, SemiDiscreteWave, SolveOptions, WaveBundleFile,
};
use latticewave::spectral::{
    hyperbolicity_scan, quasi_inverse_solve, spectral_convergence_diagnostic,
};
use latticewave::timesim::{measure_wavespeed, pulse_seed, Simulation};
use nalgebra::Complex;
use serde_json::json;
use std::path::{Path, PathBuf};

pub struct Invocation {
    pub command: String,
    pub config_text: String,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub seed_override: Option<u64>,
    pub tol_override: Option<f64>,
}

/// Exit status contract: 0 success, 1 configuration/user error, 2 solver
/// non-convergence.
pub fn execute(inv: &Invocation) -> i32 {
    match run_command(inv) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify(&err)
        }
    }
}

fn classify(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<latticewave::Error>() {
        return match core {
            latticewave::Error::NonConvergence { .. }
            | latticewave::Error::DegenerateSolution(_)
            | latticewave::Error::SingularSystem(_)
            | latticewave::Error::EigenFailure(_) => 2,
            _ => 1,
        };
    }
    1
}

fn run_command(inv: &Invocation) -> Result<()> {
    let started = std::time::Instant::now();
    let mut config = Config::parse(&inv.config_text).map_err(|e| anyhow!("{e:#}"))?;
    if let Some(seed) = inv.seed_override {
        config.run.rng_seed = seed;
    }
    if let Some(tol) = inv.tol_override {
        config.run.tol = tol;
    }
    let hash = config_hash(&inv.config_text);
    std::fs::create_dir_all(&inv.out_dir)
        .with_context(|| format!("creating output directory {:?}", inv.out_dir))?;

    let body = || -> Result<()> {
        match inv.command.as_str() {
            "check-assumptions" => check_assumptions(&config, &hash, &inv.out_dir),
            "solve-semi" => solve_semi(&config, &hash, &inv.out_dir),
            "solve-wave" => solve_wave(&config, &hash, &inv.out_dir),
            "sweep" => run_sweep(&config, &hash, &inv.out_dir),
            "spectrum-scan" => spectrum_scan(&config, &hash, &inv.out_dir),
            "diagnostic" => diagnostic(&config, &hash, &inv.out_dir),
            "simulate" => simulate(&config, &hash, &inv.out_dir),
            other => bail!("unknown command '{other}'"),
        }
    };

    #[cfg(feature = "parallel")]
    let result = match inv.workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building worker pool")?
            .install(body),
        _ => body(),
    };
    #[cfg(not(feature = "parallel"))]
    let result = body();

    result?;
    // wall time makes this one file exempt from byte-for-byte reproducibility
    let metadata = json!({
        "command": inv.command,
        "config_hash": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "rng_seed": config.run.rng_seed,
        "tolerance": config.run.tol,
        "max_iter": config.run.max_iter,
        "workers": inv.workers,
        "wall_time_secs": started.elapsed().as_secs_f64(),
    });
    write_json(&inv.out_dir.join("run_metadata.json"), &metadata)?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {path:?}"))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {path:?}"))?;
    Ok(())
}

fn save_profile(path: &Path, profile: &WaveProfile, q: u32, hash: &str) -> Result<()> {
    let file = ProfileFile::from_profile(profile, q);
    let mut value = serde_json::to_value(&file)?;
    value["config_hash"] = json!(hash);
    write_json(path, &value)?;
    Ok(())
}

fn load_profile(path: &Path) -> Result<WaveProfile> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading profile {path:?}"))?;
    let file: ProfileFile = serde_json::from_str(&text)?;
    Ok(file.into_profile()?)
}

fn check_assumptions(config: &Config, hash: &str, out: &Path) -> Result<()> {
    let model = config.model()?;
    let kernel = config.kernel(&model)?;
    let kernel_report = check_kernel_conditions(&kernel, 1023, kernel.nu);
    let r_samples: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let equilibria = check_equilibria(&model, &r_samples);
    let stability = check_stability(&model, config.run.r);
    log_info(&format!(
        "kernel conditions {} | equilibria {} | stability branch {:?} (Gamma = {:?})",
        if kernel_report.pass() { "pass" } else { "FAIL" },
        if equilibria.pass() { "pass" } else { "FAIL" },
        stability.branch,
        stability.gamma
    ));
    let report = json!({
        "config_hash": hash,
        "kernel_conditions": {
            "pass": kernel_report.pass(),
            "min_symbol": kernel_report.min_symbol,
            "argmin_z": kernel_report.argmin_z,
            "normalization_residual": kernel_report.normalization_residual,
            "exponential_sum": kernel_report.exponential_sum,
            "tail_bound": kernel_report.tail_bound,
        },
        "equilibria": {
            "pass": equilibria.pass(),
            "max_residual_minus": equilibria.max_residual_minus,
            "max_residual_plus": equilibria.max_residual_plus,
        },
        "stability": {
            "holds_a": stability.holds_a,
            "holds_b": stability.holds_b,
            "branch": stability.branch,
            "gamma": stability.gamma,
            "min_eig_full": stability.min_eig_full,
            "min_eig_blocks": stability.min_eig_blocks,
            "cross_residual": stability.cross_residual,
            "sampled_points": stability.sampled_points,
        },
    });
    write_json(&out.join("assumptions.json"), &report)
}

fn solve_semi(config: &Config, hash: &str, out: &Path) -> Result<()> {
    let model = config.model()?;
    let kernel = config.kernel(&model)?;
    log_info("integrating the lattice system to seed the co-moving solve");
    let (seed, c_est) = simulation_seed(
        &model,
        &kernel,
        config.run.r,
        config.run.sim_dt,
        config.run.sim_window,
        config.run.excitation,
        config.run.sim_steps,
        config.grid.p0,
        config.grid.l,
    )?;
    log_info(&format!("seed speed estimate {c_est:.5}"));
    let opts = SolveOptions {
        max_iter: config.run.max_iter,
        tol: config.run.tol,
        ..Default::default()
    };
    let wave = solve_semidiscrete_wave(&model, &kernel, config.run.r, &seed, c_est, &opts)?;
    log_info(&format!(
        "converged: c0 = {:.6}, residual = {:.2e}, iterations = {}",
        wave.c0, wave.residual, wave.newton_iterations
    ));
    save_profile(&out.join("profile.json"), &wave.profile, 1, hash)?;
    save_profile(&out.join("phi_plus.json"), &wave.phi_plus, 1, hash)?;
    save_profile(&out.join("phi_minus.json"), &wave.phi_minus, 1, hash)?;
    write_text(&out.join("profile.csv"), &profile_to_csv(&wave.profile))?;
    let bundle = WaveBundleFile {
        c0: wave.c0,
        r: wave.r,
        residual: wave.residual,
        sigma_min: wave.sigma_min,
        sigma_second: wave.sigma_second,
        lambda_tilde: wave.lambda_tilde,
        pinned: wave.pinned,
        profile_file: "profile.json".into(),
        phi_plus_file: "phi_plus.json".into(),
        phi_minus_file: "phi_minus.json".into(),
    };
    let mut value = serde_json::to_value(&bundle)?;
    value["config_hash"] = json!(hash);
    value["tail_decay_right"] = json!(wave.tail_decay_rate(true));
    value["tail_decay_left"] = json!(wave.tail_decay_rate(false));
    write_json(&out.join("wave.json"), &value)
}

fn load_bundle(config: &Config) -> Result<(SemiDiscreteWave, PathBuf)> {
    let path = config
        .run
        .wave_bundle
        .as_ref()
        .ok_or_else(|| anyhow!("this command needs run.wave_bundle"))?;
    let path = PathBuf::from(path);
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading wave bundle {path:?}"))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let get_str = |k: &str| -> Result<String> {
        Ok(value
            .get(k)
            .and_then(|v| v.as_str())
            .ok_or_else(|| anyhow!("bundle missing field {k}"))?
            .to_string())
    };
    let get_f64 = |k: &str| -> Result<f64> {
        value
            .get(k)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| anyhow!("bundle missing field {k}"))
    };
    let wave = SemiDiscreteWave {
        c0: get_f64("c0")?,
        r: get_f64("r")?,
        profile: load_profile(&dir.join(get_str("profile_file")?))?,
        phi_plus: load_profile(&dir.join(get_str("phi_plus_file")?))?,
        phi_minus: load_profile(&dir.join(get_str("phi_minus_file")?))?,
        residual: get_f64("residual")?,
        sigma_min: get_f64("sigma_min")?,
        sigma_second: get_f64("sigma_second")?,
        lambda_tilde: value.get("lambda_tilde").and_then(|v| v.as_f64()),
        pinned: value
            .get("pinned")
            .and_then(|v| v.as_bool())
            .unwrap_or(false),
        newton_iterations: 0,
    };
    Ok((wave, dir))
}

fn cell_seed(config: &Config, p: u32, n_half: i64) -> Result<WaveProfile> {
    let path = config
        .run
        .seed_profile
        .as_ref()
        .ok_or_else(|| anyhow!("run.seed_profile is required to seed wave solves"))?;
    let mut source = load_profile(Path::new(path))?;
    if config.run.mirror_seed {
        source = source.mirrored();
    }
    let model = config.model()?;
    let mut out = WaveProfile::zeros(p, model.d(), n_half, config.grid.extension)
        .with_limits(model.p_minus().to_vec(), model.p_plus().to_vec());
    for j in -n_half..=n_half {
        let xi = j as f64 / p as f64;
        for c in 0..model.d() {
            out.set(j, c, source.value_interpolated(xi, c));
        }
    }
    Ok(out)
}

fn solve_wave(config: &Config, hash: &str, out: &Path) -> Result<()> {
    let model = config.model()?;
    let kernel = config.kernel(&model)?;
    let p = config.grid.p.ok_or_else(|| anyhow!("grid.p is required"))?;
    let q = config.grid.q.ok_or_else(|| anyhow!("grid.q is required"))?;
    // single-cell solves stay inside the admissible set M = p/q >= 1
    let coupling = RationalCoupling::new(p, q).map_err(|e| anyhow!("{e}"))?;
    let scheme = bdf_scheme(config.scheme)?;
    let n_half = WaveProfile::steps_for_window(p, config.grid.l)?;
    let seed = cell_seed(config, p, n_half)?;
    let opts = DiscreteSolveOptions {
        max_iter: config.run.max_iter,
        tol: config.run.tol,
        nontriviality: config.run.nontriviality.unwrap_or(0.5),
        max_step: None,
    };
    let wave = solve_fully_discrete_wave(
        &model,
        &kernel,
        &scheme,
        &coupling,
        config.grid.dt,
        config.run.r,
        &seed,
        &opts,
    )?;
    log_info(&format!(
        "cell ({p},{q}) converged: c = {}, residual = {:.2e}, amplitude = {:.3}",
        wave.c, wave.residual, wave.front_amplitude
    ));
    save_profile(&out.join("wave_profile.json"), &wave.profile, q, hash)?;
    write_text(&out.join("wave_profile.csv"), &profile_to_csv(&wave.profile))?;
    write_json(
        &out.join("cell.json"),
        &json!({
            "config_hash": hash,
            "p": p, "q": q, "dt": config.grid.dt,
            "c": wave.c, "r": wave.r,
            "residual": wave.residual,
            "front_amplitude": wave.front_amplitude,
            "iterations": wave.iterations,
        }),
    )
}

fn run_sweep(config: &Config, hash: &str, out: &Path) -> Result<()> {
    let model = config.model()?;
    let kernel = config.kernel(&model)?;
    let ranges = config
        .grid
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow!("grid.sweep block is required"))?;
    let sweep_config = SweepConfig {
        dt: config.grid.dt,
        window: config.grid.l,
        p_values: ranges.p_values.clone(),
        q_max_factor: ranges.q_max_factor,
        r_values: ranges.r_values.clone(),
        scheme_order: config.scheme,
        extension: config.grid.extension,
        options: DiscreteSolveOptions {
            max_iter: config.run.max_iter,
            tol: config.run.tol,
            nontriviality: config.run.nontriviality.unwrap_or(0.5),
            max_step: None,
        },
    };
    let mut seeds = SweepSeeds::default();
    if let Some(path) = &config.run.seed_profile {
        let mut profile = load_profile(Path::new(path))?;
        if config.run.mirror_seed {
            profile = profile.mirrored();
        }
        seeds.semi_profile = Some(profile);
    }
    log_info(&format!(
        "sweep over p in {:?}, q up to {} p, {} detuning values",
        sweep_config.p_values,
        sweep_config.q_max_factor,
        sweep_config.r_values.len()
    ));
    let result = sweep(&model, &kernel, &sweep_config, &seeds, ExecMode::Parallel)?;
    let converged = result.converged_rows().count();
    log_info(&format!(
        "{converged} of {} cells converged",
        result.rows.len()
    ));
    let csv = format!("# config_hash={hash}\n{}", result.to_csv());
    write_text(&out.join("sweep.csv"), &csv)?;
    let multivalued: Vec<f64> = {
        // detuning values admitting at least two distinct converged speeds
        let mut by_r: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
        for row in result.converged_rows() {
            by_r
                .entry((row.r * 1e9).round() as i64)
                .or_default()
                .push(row.c);
        }
        by_r
            .into_iter()
            .filter(|(_, cs)| {
                cs.iter()
                    .any(|&c| cs.iter().any(|&c2| (c - c2).abs() > 1e-12))
            })
            .map(|(r, _)| r as f64 / 1e9)
            .collect()
    };
    write_json(
        &out.join("sweep_meta.json"),
        &json!({
            "config_hash": hash,
            "cells": result.rows.len(),
            "converged": converged,
            "detunings_with_multiple_speeds": multivalued,
        }),
    )?;
    if converged == 0 {
        return Err(latticewave::Error::NonConvergence {
            iterations: 0,
            residual: f64::NAN,
        }
        .into());
    }
    Ok(())
}

fn spectrum_scan(config: &Config, hash: &str, out: &Path) -> Result<()> {
    let model = config.model()?;
    let kernel = config.kernel(&model)?;
    let (c0, bundle) = match (&config.run.c0, &config.run.wave_bundle) {
        (Some(c0), _) => (*c0, None),
        (None, Some(_)) => {
            let (wave, _) = load_bundle(config)?;
            (wave.c0, Some(wave))
        }
        (None, None) => bail!("spectrum-scan needs run.c0 or run.wave_bundle"),
    };
    let y_grid: Vec<f64> = (0..1024)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / 1024.0)
        .collect();
    let rho_grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let lambda = Complex::new(0.0, 0.0);
    let plain = hyperbolicity_scan(
        &model, &kernel, None, c0, config.run.r, &rho_grid, &y_grid, lambda, 1e-8,
        ExecMode::Parallel,
    );
    log_info(&format!(
        "constant-coefficient scan: min |det| = {:.3e} ({})",
        plain.min_abs_det,
        if plain.pass { "pass" } else { "FAIL" }
    ));
    write_text(
        &out.join("scan_plain.csv"),
        &format!("# config_hash={hash}\n{}", plain.to_csv()),
    )?;
    let mut summary = json!({
        "config_hash": hash,
        "c0": c0,
        "plain": {"min_abs_det": plain.min_abs_det, "argmin": plain.argmin, "pass": plain.pass},
    });
    if let (Some(p), Some(q)) = (config.grid.p, config.grid.q) {
        let coupling = RationalCoupling::new_unrestricted(p, q).map_err(|e| anyhow!("{e}"))?;
        let twisted = hyperbolicity_scan(
            &model,
            &kernel,
            Some(&coupling),
            c0,
            config.run.r,
            &rho_grid,
            &y_grid,
            lambda,
            1e-8,
            ExecMode::Parallel,
        );
        log_info(&format!(
            "twisted scan (q = {q}): min |det| = {:.3e} ({})",
            twisted.min_abs_det,
            if twisted.pass { "pass" } else { "FAIL" }
        ));
        write_text(
            &out.join("scan_twisted.csv"),
            &format!("# config_hash={hash}\n{}", twisted.to_csv()),
        )?;
        summary["twisted"] = json!({
            "min_abs_det": twisted.min_abs_det,
            "argmin": twisted.argmin,
            "pass": twisted.pass,
        });
    }
    if let Some(wave) = bundle {
        // window-convergence study of the spectral gap on a coarsened grid
        let coarse = wave.profile.resample(4, (config.grid.l * 4.0) as i64);
        let mut coarse_wave = wave.clone();
        coarse_wave.profile = coarse;
        let windows = [config.grid.l / 2.0, config.grid.l];
        log_debug("estimating the spectral gap on two windows");
        let gaps = estimate_spectral_gap(&model, &kernel, &coarse_wave, &windows)?;
        summary["lambda_tilde_by_window"] = json!(gaps
            .iter()
            .map(|(l, g)| json!({"window": l, "lambda_tilde": g}))
            .collect::<Vec<_>>());
    }
    write_json(&out.join("scan_summary.json"), &summary)
}

fn diagnostic(config: &Config, hash: &str, out: &Path) -> Result<()> {
    let model = config.model()?;
    let kernel = config.kernel(&model)?;
    let (wave, _) = load_bundle(config)?;
    let scheme = bdf_scheme(config.scheme)?;
    let p0 = wave.profile.p();

    // resolvent decomposition at the configured deltas
    let mut resolvent_rows = Vec::new();
    for &delta in &config.run.deltas {
        let kernel_case = resolvent_kernel_case(&model, &kernel, &wave, delta)?;
        let mix = latticewave::random::BumpMixture::new(
            model.d(),
            4,
            wave.profile.half_width() / 4.0,
            config.run.rng_seed,
        );
        let g = mix.sample(p0, wave.profile.n_half());
        let two_path =
            resolvent_decomposition_check(&model, &kernel, &wave, delta, &g, 0.1)?;
        log_info(&format!(
            "delta = {delta}: kernel case {kernel_case:.2e}, two-path {two_path:.2e}"
        ));
        resolvent_rows.push(json!({
            "delta": delta,
            "kernel_case_rel_err": kernel_case,
            "two_path_rel_err": two_path,
        }));
    }

    // quasi-inverse stability ratios over coarse grids (q = 1)
    let mut quasi_rows = Vec::new();
    for m in [2u32, 4, 8] {
        if !p0.is_multiple_of(m) {
            continue;
        }
        let coupling = RationalCoupling::new(m, 1).map_err(|e| anyhow!("{e}"))?;
        let n_half = WaveProfile::steps_for_window(m, wave.profile.half_width().min(40.0))?;
        let mut worst: f64 = 0.0;
        for trial in 0..10 {
            let mix = latticewave::random::BumpMixture::new(
                model.d(),
                4,
                10.0,
                config.run.rng_seed + trial,
            );
            let psi = mix.sample(m, n_half);
            let sol = quasi_inverse_solve(&model, &kernel, &scheme, &coupling, &wave, &psi)?;
            worst = worst.max(sol.ratio);
        }
        quasi_rows.push(json!({"m": m, "max_ratio": worst}));
        log_info(&format!("quasi-inverse ratio at M = {m}: {worst:.4}"));
    }

    // lower-bound diagnostic over delta, both variants
    let diag_coupling = RationalCoupling::new(4.min(p0), 1).map_err(|e| anyhow!("{e}"))?;
    let n_small = WaveProfile::steps_for_window(diag_coupling.p(), 16.0f64.min(wave.profile.half_width()))?;
    let mut diag_rows = Vec::new();
    let mut csv = String::from("delta,value,adjoint\n");
    for &delta in &config.run.deltas {
        for adjoint in [false, true] {
            let value = spectral_convergence_diagnostic(
                &model,
                &kernel,
                &scheme,
                &diag_coupling,
                &wave,
                n_small,
                delta,
                adjoint,
            )?;
            csv.push_str(&format!("{delta},{value:e},{adjoint}\n"));
            diag_rows.push(json!({"delta": delta, "value": value, "adjoint": adjoint}));
        }
    }
    write_text(
        &out.join("diagnostic.csv"),
        &format!("# config_hash={hash}\n{csv}"),
    )?;

    // assembled operator on the diagnostic grid, for external inspection
    let mut u0_small = wave.profile.resample(diag_coupling.p(), n_small);
    u0_small.set_extension(latticewave::grid::Extension::ConstantLimits);
    let operator = latticewave::spectral::assemble_l_km(
        &model,
        &kernel,
        &scheme,
        &diag_coupling,
        wave.c0,
        wave.r,
        &u0_small,
        false,
    );
    write_text(
        &out.join("operator_coordinate_list.txt"),
        &format!(
            "# config_hash={hash}\n{}",
            latticewave::spectral::matrix_to_coordinate_list(&operator)
        ),
    )?;
    write_json(
        &out.join("diagnostic.json"),
        &json!({
            "config_hash": hash,
            "resolvent": resolvent_rows,
            "quasi_inverse": quasi_rows,
            "lower_bound": diag_rows,
        }),
    )
}

fn simulate(config: &Config, hash: &str, out: &Path) -> Result<()> {
    let model = config.model()?;
    let kernel = config.kernel(&model)?;
    let scheme = bdf_scheme(config.scheme)?;
    let (left, right, height) = config.run.excitation;
    let seed = pulse_seed(model.d(), config.run.sim_window, left, right, height);
    let mut sim = Simulation::new(
        model,
        kernel,
        scheme,
        config.run.r,
        config.grid.dt,
        seed,
    )?;
    let stride = config
        .run
        .sim_stride
        .unwrap_or_else(|| (config.run.sim_steps / 64).max(1))
        .max(1);
    let trajectory = sim.run(config.run.sim_steps, stride)?;
    let snap_dir = out.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    for (i, (t, profile)) in trajectory.snapshots.iter().enumerate() {
        write_text(
            &snap_dir.join(format!("snap_{i:04}_t{t}.csv")),
            &format!("# config_hash={hash}\n{}", profile_to_csv(profile)),
        )?;
    }
    let speed = measure_wavespeed(&trajectory, 0.4, 0);
    let report = match &speed {
        Ok(est) => json!({
            "config_hash": hash,
            "speed": est.speed,
            "fit_residual": est.fit_residual,
            "window": est.window,
            "crossings": est.crossings,
        }),
        Err(e) => json!({
            "config_hash": hash,
            "speed": null,
            "error": e.to_string(),
        }),
    };
    log_info(&format!("wavespeed: {report}"));
    write_json(&out.join("wavespeed.json"), &report)?;
    speed.map(|_| ()).map_err(|e| e.into())
}
