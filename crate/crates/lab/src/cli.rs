//! Command-line front end: `sim`, `dmft`, `phase`, `threshold` and `instance`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use spiked_core::amp::{self, AmpInit};
use spiked_core::dmft::{self, DmftConfig};
use spiked_core::dynamics::{Algorithm, SimConfig, Trajectory};
use spiked_core::extrapolate::FitOptions;
use spiked_core::model::{Channels, TensorStorage};
use spiked_core::theory::{self, REFERENCE_BETAS};
use spiked_core::{ModelParams, SUCCESS_OVERLAP};

use crate::cache::GridCache;
use crate::config::{self, merge, parse_range};
use crate::ensemble;
use crate::format::{self, fmt_beta, PackRow};
use crate::manifest::RunManifest;
use crate::report::{MethodReport, ThresholdReport, REPORT_SCHEMA};
use crate::{usage, ToleranceError};

/// Largest ensemble-mean overlap change accepted between `dt` and `dt/2` in strict mode.
pub const STRICT_DT_TOL: f64 = 0.05;

/// Default `delta3` grid for threshold sweeps, as multiples of the analytic threshold.
pub const THRESHOLD_GRID_FACTORS: [f64; 7] = [0.8, 1.2, 1.6, 2.0, 3.0, 4.0, 6.0];

#[derive(Debug, Parser)]
#[command(name = "spiked", version, about = "Spiked matrix-tensor laboratory")]
pub struct Cli {
    /// TOML file with one table of defaults per command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = config::OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory of finished grid points (default: `<out>/cache`).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Recompute every grid point.
    #[arg(long, global = true)]
    pub no_cache: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Langevin, gradient-flow or AMP runs over a seed ensemble.
    Sim(SimFlags),
    /// Integrate the two-time mean-field equations.
    Dmft(DmftFlags),
    /// Phase classification, threshold lines and optional numeric marks.
    Phase(PhaseFlags),
    /// Compare threshold estimates from several methods.
    Threshold(ThresholdFlags),
    /// Write or inspect an instance dump.
    Instance(InstanceFlags),
    /// Repeat the run recorded in a manifest and compare output digests.
    Rerun(RerunFlags),
}

#[derive(Debug, Clone, Args)]
pub struct RerunFlags {
    /// `manifest.json` of an earlier run.
    pub manifest: PathBuf,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SimFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    /// One or more values, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta3: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[arg(long, value_parser = ["langevin", "gd", "amp"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algo: Option<String>,
    /// Ensemble size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_seed: Option<u64>,
    /// Thermal (or AMP initialisation) seed of member 0.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[arg(long, value_parser = ["packed", "implicit"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long, value_parser = ["random", "informed", "signal"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amp_init: Option<String>,
    /// Overlap of the informed AMP start.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amp_m0: Option<f64>,
    /// Norm scale of the random AMP start.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amp_scale: Option<f64>,
    /// Repeat at dt/2 and fail if the mean overlap moves by more than 0.05.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub strict: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub n: usize,
    pub delta2: f64,
    pub delta3: Vec<f64>,
    pub beta: f64,
    pub dt: f64,
    pub t_max: f64,
    pub algo: String,
    pub seeds: usize,
    pub instance_seed: u64,
    pub seed: u64,
    pub record_stride: usize,
    pub storage: String,
    pub max_iter: usize,
    pub tol: f64,
    pub amp_init: String,
    pub amp_m0: f64,
    pub amp_scale: f64,
    pub strict: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            n: 256,
            delta2: 0.7,
            delta3: vec![1.5],
            beta: 1.0,
            dt: 0.005,
            t_max: 50.0,
            algo: "langevin".into(),
            seeds: 20,
            instance_seed: 1,
            seed: 1001,
            record_stride: 20,
            storage: "packed".into(),
            max_iter: amp::MAX_ITER,
            tol: amp::AMP_TOL,
            amp_init: "random".into(),
            amp_m0: 0.05,
            amp_scale: 0.1,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct DmftFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta3: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    /// Waiting times for `C(t, tw)` and `R(t, tw)` slices.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slices: Option<Vec<f64>>,
    /// Also integrate at h/2 and h/4 and report the convergence order.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub richardson: bool,
    /// Start of the window for the fluctuation-dissipation check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdt_t0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DmftSettings {
    pub delta2: f64,
    pub delta3: f64,
    pub beta: f64,
    pub h: f64,
    pub t_max: f64,
    pub m0: f64,
    pub slices: Vec<f64>,
    pub richardson: bool,
    pub fdt_t0: f64,
}

impl Default for DmftSettings {
    fn default() -> Self {
        DmftSettings {
            delta2: 0.7,
            delta3: 1.5,
            beta: 1.0,
            h: 0.05,
            t_max: 50.0,
            m0: dmft::DEFAULT_M0,
            slices: Vec::new(),
            richardson: false,
            fdt_t0: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct PhaseFlags {
    /// `start:stop:step`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2_range: Option<String>,
    /// `start:stop:step`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta3_range: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    /// Add mean-field threshold marks (expensive).
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub numeric_marks: bool,
    /// `delta2` values at which marks are computed.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mark_delta2: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSettings {
    pub delta2_range: String,
    pub delta3_range: String,
    pub betas: Vec<f64>,
    pub numeric_marks: bool,
    pub mark_delta2: Vec<f64>,
    pub h: f64,
    pub t_max: f64,
    pub m0: f64,
}

impl Default for PhaseSettings {
    fn default() -> Self {
        PhaseSettings {
            delta2_range: "0.05:1.5:0.05".into(),
            delta3_range: "0.1:3.0:0.1".into(),
            betas: REFERENCE_BETAS.to_vec(),
            numeric_marks: false,
            mark_delta2: vec![0.5],
            h: 0.05,
            t_max: 200.0,
            m0: dmft::DEFAULT_M0,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ThresholdFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// One or more of `analytic`, `dmft`, `finite-n`.
    #[arg(long, value_delimiter = ',', value_parser = ["analytic", "dmft", "finite-n"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Vec<String>>,
    /// `delta3` values; defaults to multiples of the analytic threshold.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    /// Fit only the given number of finite points closest to the threshold.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nearest: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Horizon of the finite-n runs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim_t_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSettings {
    pub delta2: f64,
    pub beta: f64,
    pub method: Vec<String>,
    pub grid: Vec<f64>,
    /// `0` fits every finite point.
    pub nearest: usize,
    pub h: f64,
    pub t_max: f64,
    pub m0: f64,
    pub n: usize,
    pub seeds: usize,
    pub dt: f64,
    pub sim_t_max: f64,
    pub instance_seed: u64,
    pub seed: u64,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        ThresholdSettings {
            delta2: 0.5,
            beta: 1.0,
            method: vec!["analytic".into(), "dmft".into()],
            grid: Vec::new(),
            nearest: 0,
            h: 0.05,
            t_max: 200.0,
            m0: dmft::DEFAULT_M0,
            n: 256,
            seeds: 20,
            dt: 0.01,
            sim_t_max: 200.0,
            instance_seed: 1,
            seed: 1001,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct InstanceFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta3: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["packed", "implicit"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage: Option<String>,
    #[arg(long, value_parser = ["full", "noiseless", "noise-only"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<String>,
    /// Print the header of an existing dump instead of writing one.
    #[arg(long)]
    #[serde(skip)]
    pub inspect: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSettings {
    pub n: usize,
    pub delta2: f64,
    pub delta3: f64,
    pub beta: f64,
    pub seed: u64,
    pub storage: String,
    pub channels: String,
}

impl Default for InstanceSettings {
    fn default() -> Self {
        InstanceSettings {
            n: 64,
            delta2: 0.7,
            delta3: 1.5,
            beta: 1.0,
            seed: 1,
            storage: "packed".into(),
            channels: "full".into(),
        }
    }
}

/// Shared state of one invocation.
pub struct RunContext {
    pub out: PathBuf,
    pub file: Option<toml::Table>,
    pub jobs: usize,
    pub cache: GridCache,
}

impl RunContext {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let out = cli
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT_DIR));
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let file = cli.config.as_deref().map(config::load_file).transpose()?;
        let cache = if cli.no_cache {
            GridCache::disabled()
        } else {
            GridCache::at(&cli.cache.clone().unwrap_or_else(|| out.join("cache")))?
        };
        Ok(RunContext {
            out,
            file,
            jobs: cli.jobs.unwrap_or(0),
            cache,
        })
    }

    fn settings<S, F>(&self, section: &str, flags: &F) -> Result<S>
    where
        S: Default + Serialize + serde::de::DeserializeOwned,
        F: Serialize,
    {
        merge(self.file.as_ref(), section, flags).map_err(|e| usage(format!("{e:#}")))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run(cli: Cli) -> Result<RunManifest> {
    let ctx = RunContext::from_cli(&cli)?;
    let jobs = ctx.jobs;
    ensemble::with_jobs(jobs, || match &cli.command {
        Command::Sim(f) => cmd_sim(&ctx, f),
        Command::Dmft(f) => cmd_dmft(&ctx, f),
        Command::Phase(f) => cmd_phase(&ctx, f),
        Command::Threshold(f) => cmd_threshold(&ctx, f),
        Command::Instance(f) => cmd_instance(&ctx, f),
        Command::Rerun(f) => cmd_rerun(&ctx, f),
    })?
}

fn storage_of(s: &str) -> Result<TensorStorage> {
    match s {
        "packed" => Ok(TensorStorage::Packed),
        "implicit" => Ok(TensorStorage::Implicit),
        other => Err(usage(format!("unknown storage `{other}` (packed, implicit)"))),
    }
}

fn finish(ctx: &RunContext, mut manifest: RunManifest, files: &[PathBuf]) -> Result<RunManifest> {
    for f in files {
        manifest.record(&ctx.out, f)?;
    }
    manifest.write(&ctx.out)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(manifest)
}

pub fn cmd_sim(ctx: &RunContext, flags: &SimFlags) -> Result<RunManifest> {
    let s: SimSettings = ctx.settings("sim", flags)?;
    let storage = storage_of(&s.storage)?;
    if s.delta3.is_empty() {
        return Err(usage("--delta3 needs at least one value"));
    }
    if s.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let algo = match s.algo.as_str() {
        "langevin" if s.beta.is_infinite() => {
            return Err(usage(
                "--algo langevin needs a finite --beta; use --algo gd for beta = inf",
            ))
        }
        "langevin" => Some(Algorithm::Langevin),
        "gd" => Some(Algorithm::GradientFlow),
        "amp" => None,
        other => return Err(usage(format!("unknown algorithm `{other}` (langevin, gd, amp)"))),
    };
    let params: Vec<ModelParams> = s
        .delta3
        .iter()
        .map(|&d3| ModelParams::new(s.n, s.delta2, d3, s.beta))
        .collect::<spiked_core::Result<_>>()
        .map_err(|e| usage(e.to_string()))?;
    let mut manifest = RunManifest::new("sim", config::to_json(&s)?);
    manifest.instance_seed = Some(s.instance_seed);
    manifest.thermal_seed = Some(s.seed);
    let mut files = Vec::new();
    let mut per_delta3 = Vec::new();

    match algo {
        Some(algo) => {
            let mut sim = SimConfig::new(algo, s.dt, s.t_max, s.seed);
            sim.record_stride = s.record_stride;
            sim.validate(&params[0]).map_err(|e| usage(e.to_string()))?;
            if algo == Algorithm::GradientFlow && s.beta.is_finite() {
                manifest
                    .warnings
                    .push(format!("gradient flow ignores beta = {}", s.beta));
            }
            let mut blocks: Vec<(f64, String, Trajectory)> = Vec::new();
            for p in &params {
                let trajs = ensemble::langevin_ensemble(*p, &sim, s.seeds, s.instance_seed, storage)?;
                let mean = ensemble::mean_trajectory(&trajs);
                let path = ctx.path(&format!("sim_d3_{}.csv", p.delta3));
                format::write_trajectory(&path, &mean)?;
                files.push(path);
                let times: Vec<Option<f64>> = trajs.iter().map(|t| t.first_crossing(SUCCESS_OVERLAP)).collect();
                let mut entry = json!({
                    "delta3": p.delta3,
                    "t_star_median": spiked_core::dynamics::censored_median(&times),
                    "t_star_mean_curve": mean.first_crossing(SUCCESS_OVERLAP),
                    "t_star": times,
                    "final_mean_m": mean.m.last(),
                });
                if s.strict {
                    let half = SimConfig {
                        dt: s.dt / 2.0,
                        record_stride: s.record_stride * 2,
                        ..sim
                    };
                    let fine = ensemble::langevin_ensemble(*p, &half, s.seeds, s.instance_seed, storage)?;
                    let fine_mean = ensemble::mean_trajectory(&fine);
                    let gap = mean
                        .m
                        .iter()
                        .zip(&fine_mean.m)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    entry["dt_half_max_gap"] = json!(gap);
                    if gap > STRICT_DT_TOL {
                        manifest.report = json!(per_delta3);
                        finish(ctx, manifest, &files)?;
                        return Err(ToleranceError(format!(
                            "halving dt moved the mean overlap by {gap:.3} > {STRICT_DT_TOL} at delta3 = {}",
                            p.delta3
                        ))
                        .into());
                    }
                }
                per_delta3.push(entry);
                for (k, t) in trajs.into_iter().enumerate() {
                    blocks.push((p.delta3, k.to_string(), t));
                }
                blocks.push((p.delta3, "mean".into(), mean));
            }
            let long = ctx.path("sim_long.csv");
            format::write_long_trajectories(&long, blocks.iter().map(|(d, s, t)| (*d, s.clone(), t)))?;
            files.push(long);
        }
        None => {
            let init = match s.amp_init.as_str() {
                "random" => AmpInit::Random { scale: s.amp_scale },
                "informed" => AmpInit::Informed { m0: s.amp_m0 },
                "signal" => AmpInit::Signal,
                other => return Err(usage(format!("unknown AMP start `{other}`"))),
            };
            let mut blocks = Vec::new();
            for p in &params {
                let runs = ensemble::amp_ensemble(*p, &init, s.seeds, s.instance_seed, s.seed, s.max_iter, s.tol, storage)?;
                let ms: Vec<&[f64]> = runs.iter().map(|r| r.m.as_slice()).collect();
                let rs: Vec<&[f64]> = runs.iter().map(|r| r.residual.as_slice()).collect();
                let mean_m = ensemble::mean_padded(&ms);
                let mean_r = ensemble::mean_padded(&rs);
                let path = ctx.path(&format!("amp_d3_{}.csv", p.delta3));
                format::write_amp(&path, &mean_m, &mean_r)?;
                files.push(path);
                let iters: Vec<Option<usize>> = runs.iter().map(|r| r.converged_at).collect();
                if iters.iter().any(Option::is_none) {
                    manifest.warnings.push(format!(
                        "AMP hit max_iter = {} without converging at delta3 = {}",
                        s.max_iter, p.delta3
                    ));
                }
                per_delta3.push(json!({
                    "delta3": p.delta3,
                    "init": init.label(),
                    "iterations": iters,
                    "final_mean_m": mean_m.last(),
                }));
                for (k, r) in runs.into_iter().enumerate() {
                    blocks.push((p.delta3, k.to_string(), r.m, r.residual));
                }
                blocks.push((p.delta3, "mean".into(), mean_m, mean_r));
            }
            let long = ctx.path("amp_long.csv");
            format::write_long_amp(
                &long,
                blocks.iter().map(|(d, k, m, r)| (*d, k.clone(), m.as_slice(), r.as_slice())),
            )?;
            files.push(long);
        }
    }
    manifest.report = json!(per_delta3);
    finish(ctx, manifest, &files)
}

pub fn cmd_dmft(ctx: &RunContext, flags: &DmftFlags) -> Result<RunManifest> {
    let s: DmftSettings = ctx.settings("dmft", flags)?;
    let cfg = DmftConfig::new(s.delta2, s.delta3, s.beta, s.h, s.t_max).with_m0(s.m0);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let mut manifest = RunManifest::new("dmft", config::to_json(&s)?);
    if s.m0 == 0.0 {
        manifest
            .warnings
            .push("m0 = 0 is a fixed point: the overlap stays exactly zero".into());
    }
    let g = dmft::integrate(&cfg)?;
    let mut files = Vec::new();
    let series = ctx.path("dmft_series.csv");
    format::write_dmft_series(&series, &g)?;
    files.push(series);
    if !s.slices.is_empty() {
        let path = ctx.path("dmft_slices.csv");
        format::write_dmft_slices(&path, &g, &s.slices).map_err(|e| usage(format!("{e:#}")))?;
        files.push(path);
    }
    let mut report = json!({
        "steps": g.steps(),
        "diagonal_drift": g.diagonal_drift(),
        "t_star": g.first_crossing(SUCCESS_OVERLAP),
        "final_m": g.m().last(),
        "final_mu": g.mu().last(),
        "lambda": theory::lambda_exponent(s.delta2, s.delta3, s.beta).ok(),
    });
    if s.beta.is_finite() {
        report["fdt_deviation"] = json!(dmft::fdt_check(&g, s.fdt_t0)?);
    }
    if s.richardson {
        let levels: Vec<f64> = [2.0, 4.0]
            .par_iter()
            .map(|k| {
                let c = DmftConfig { h: s.h / k, ..cfg };
                Ok(*dmft::integrate(&c)?.m().last().unwrap())
            })
            .collect::<Result<_>>()?;
        let m = [*g.m().last().unwrap(), levels[0], levels[1]];
        let (d1, d2) = ((m[0] - m[1]).abs(), (m[1] - m[2]).abs());
        report["richardson"] = json!({
            "h": [s.h, s.h / 2.0, s.h / 4.0],
            "m_final": m,
            "observed_order": (d1 / d2).log2(),
            "extrapolated_m_final": (4.0 * m[2] - m[1]) / 3.0,
        });
    }
    manifest.report = report;
    finish(ctx, manifest, &files)
}

pub fn cmd_phase(ctx: &RunContext, flags: &PhaseFlags) -> Result<RunManifest> {
    let s: PhaseSettings = ctx.settings("phase", flags)?;
    let d2s = parse_range(&s.delta2_range).map_err(|e| usage(format!("--delta2-range: {e}")))?;
    let d3s = parse_range(&s.delta3_range).map_err(|e| usage(format!("--delta3-range: {e}")))?;
    if s.betas.is_empty() {
        return Err(usage("--betas needs at least one value"));
    }
    let mut manifest = RunManifest::new("phase", config::to_json(&s)?);
    let grid: Vec<(f64, f64)> = d2s.iter().flat_map(|&a| d3s.iter().map(move |&b| (a, b))).collect();
    let points = grid
        .par_iter()
        .map(|&(a, b)| amp::classify_phase(a, b))
        .collect::<spiked_core::Result<Vec<_>>>()
        .map_err(|e| usage(e.to_string()))?;
    let lines = s
        .betas
        .iter()
        .map(|&b| theory::threshold_line(b, &d2s))
        .collect::<spiked_core::Result<Vec<_>>>()?;
    let ordering = theory::threshold_ordering_report(&d2s);
    if !ordering.is_ordered() {
        manifest
            .warnings
            .push(format!("threshold lines out of order at delta2 = {:?}", ordering.violations));
    }

    let mut rows: Vec<PackRow> = points
        .iter()
        .map(|p| PackRow {
            kind: "phase",
            delta2: p.delta2,
            delta3: p.delta3,
            beta: String::new(),
            phase: p.phase.as_str().into(),
        })
        .collect();
    for line in &lines {
        rows.extend(line.samples.iter().map(|&(a, b)| PackRow {
            kind: "line",
            delta2: a,
            delta3: b,
            beta: fmt_beta(line.beta),
            phase: String::new(),
        }));
    }
    let mut marks = Vec::new();
    if s.numeric_marks {
        for &beta in &s.betas {
            for &d2 in &s.mark_delta2 {
                let Some(dc) = theory::critical_delta3(d2, beta) else {
                    manifest
                        .warnings
                        .push(format!("no threshold line at delta2 = {d2}, beta = {beta}; mark skipped"));
                    continue;
                };
                let grid: Vec<f64> = THRESHOLD_GRID_FACTORS.iter().map(|f| f * dc).collect();
                match ensemble::dmft_threshold(d2, beta, s.h, s.t_max, s.m0, &grid, &FitOptions::default(), &ctx.cache) {
                    Ok(t) => {
                        rows.push(PackRow {
                            kind: "dmft_mark",
                            delta2: d2,
                            delta3: t.fit.threshold,
                            beta: fmt_beta(beta),
                            phase: String::new(),
                        });
                        marks.push(json!({
                            "delta2": d2,
                            "beta": fmt_beta(beta),
                            "analytic": dc,
                            "numeric": t.fit.threshold,
                            "power_law": t.fit.power_law.map(|p| p.threshold),
                            "out_of_range": t.fit.out_of_range,
                        }));
                    }
                    Err(e) => manifest
                        .warnings
                        .push(format!("mark at delta2 = {d2}, beta = {beta} failed: {e:#}")),
                }
            }
        }
    }

    let phase_csv = ctx.path("phase.csv");
    format::write_phase(&phase_csv, &points)?;
    let theory_csv = ctx.path("theory.csv");
    format::write_theory_lines(&theory_csv, &lines)?;
    let pack = ctx.path("phase_pack.csv");
    format::write_pack(&pack, &rows)?;
    let count = |ph: amp::Phase| points.iter().filter(|p| p.phase == ph).count();
    let summary = json!({
        "grid": { "delta2": d2s, "delta3": d3s },
        "counts": {
            "easy": count(amp::Phase::Easy),
            "hard_or_impossible": count(amp::Phase::HardOrImpossible),
            "impossible_proxy": count(amp::Phase::ImpossibleProxy),
        },
        "ordering": {
            "ordered": ordering.is_ordered(),
            "violations": ordering.violations,
            "rows": ordering.rows.iter().map(|r| json!({"delta2": r.delta2, "delta3_c": r.delta3_c})).collect::<Vec<_>>(),
        },
        "lines": lines.iter().map(|l| json!({
            "beta": fmt_beta(l.beta),
            "samples": l.samples.len(),
            "skipped": l.skipped.iter().map(|(d, r)| json!({"delta2": d, "reason": format!("{r:?}")})).collect::<Vec<_>>(),
            "max_discrepancy": l.max_discrepancy,
        })).collect::<Vec<_>>(),
        "marks": marks,
    });
    let summary_path = ctx.path("phase_summary.json");
    format::write_json(&summary_path, &summary)?;
    manifest.report = summary;
    finish(ctx, manifest, &[phase_csv, theory_csv, pack, summary_path])
}

pub fn cmd_threshold(ctx: &RunContext, flags: &ThresholdFlags) -> Result<RunManifest> {
    let s: ThresholdSettings = ctx.settings("threshold", flags)?;
    if s.method.is_empty() {
        return Err(usage("--method needs at least one of analytic, dmft, finite-n"));
    }
    for m in &s.method {
        if !["analytic", "dmft", "finite-n"].contains(&m.as_str()) {
            return Err(usage(format!("unknown method `{m}`; valid methods: analytic, dmft, finite-n")));
        }
    }
    let analytic = theory::critical_delta3(s.delta2, s.beta);
    let grid = if s.grid.is_empty() {
        let dc = analytic.ok_or_else(|| {
            usage("no analytic threshold at these parameters; pass an explicit --grid")
        })?;
        THRESHOLD_GRID_FACTORS.iter().map(|f| f * dc).collect()
    } else {
        s.grid.clone()
    };
    let fit = FitOptions {
        nearest: (s.nearest > 0).then_some(s.nearest),
    };
    let mut manifest = RunManifest::new("threshold", config::to_json(&s)?);
    let mut methods = Vec::new();
    for m in &s.method {
        let mut r = match m.as_str() {
            "analytic" => MethodReport::analytic(analytic),
            "dmft" => {
                let t = ensemble::dmft_threshold(s.delta2, s.beta, s.h, s.t_max, s.m0, &grid, &fit, &ctx.cache)?;
                MethodReport::from_dmft(&t, json!({"h": s.h, "t_max": s.t_max, "m0": s.m0, "grid": grid}))
            }
            _ => {
                let algo = if s.beta.is_infinite() {
                    Algorithm::GradientFlow
                } else {
                    Algorithm::Langevin
                };
                let p = ModelParams::new(s.n, s.delta2, grid[0], s.beta).map_err(|e| usage(e.to_string()))?;
                let sim = SimConfig::new(algo, s.dt, s.sim_t_max, s.seed);
                sim.validate(&p).map_err(|e| usage(e.to_string()))?;
                let t = ensemble::finite_n_threshold(p, &grid, &sim, s.seeds, s.instance_seed, &fit, &ctx.cache)?;
                MethodReport::from_finite_n(
                    &t,
                    json!({"n": s.n, "seeds": s.seeds, "dt": s.dt, "t_max": s.sim_t_max, "grid": grid}),
                )
            }
        };
        r.compare_to(analytic);
        manifest.warnings.extend(r.notes.iter().filter(|n| n.contains("outside")).cloned());
        methods.push(r);
    }
    let report = ThresholdReport {
        schema: REPORT_SCHEMA,
        delta2: s.delta2,
        beta: fmt_beta(s.beta),
        analytic,
        methods,
    };
    let path = ctx.path("threshold_report.json");
    format::write_json(&path, &report)?;
    manifest.report = serde_json::to_value(&report)?;
    finish(ctx, manifest, &[path])
}

pub fn cmd_instance(ctx: &RunContext, flags: &InstanceFlags) -> Result<RunManifest> {
    if let Some(path) = &flags.inspect {
        let mut r = std::io::BufReader::new(
            std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
        );
        let h = format::read_header(&mut r)?;
        let info = json!({
            "version": h.version,
            "n": h.params.n,
            "delta2": h.params.delta2,
            "delta3": h.params.delta3,
            "beta": fmt_beta(h.params.beta),
            "seed": h.seed,
            "spike": h.channels.spike,
            "noise": h.channels.noise,
            "payload": h.payload,
        });
        println!("{}", serde_json::to_string_pretty(&info)?);
        let mut m = RunManifest::new("instance-inspect", json!({"path": path}));
        m.report = info;
        return Ok(m);
    }
    let s: InstanceSettings = ctx.settings("instance", flags)?;
    let channels = match s.channels.as_str() {
        "full" => Channels::FULL,
        "noiseless" => Channels::NOISELESS,
        "noise-only" => Channels::NOISE_ONLY,
        other => return Err(usage(format!("unknown channels `{other}`"))),
    };
    let p = ModelParams::new(s.n, s.delta2, s.delta3, s.beta).map_err(|e| usage(e.to_string()))?;
    let inst = spiked_core::model::Instance::builder(p, s.seed)
        .channels(channels)
        .storage(storage_of(&s.storage)?)
        .build()?;
    let path = ctx.path("instance.bin");
    format::save_instance(&path, &inst)?;
    let mut manifest = RunManifest::new("instance", config::to_json(&s)?);
    manifest.instance_seed = Some(s.seed);
    finish(ctx, manifest, &[path])
}

pub fn cmd_rerun(ctx: &RunContext, flags: &RerunFlags) -> Result<RunManifest> {
    let old = RunManifest::read(&flags.manifest)?;
    let settings = config::json_to_toml(&old.settings)
        .ok_or_else(|| usage("manifest has no settings"))?;
    let mut file = toml::Table::new();
    file.insert(old.command.clone(), settings);
    let replay = RunContext {
        out: ctx.out.clone(),
        file: Some(file),
        jobs: ctx.jobs,
        cache: ctx.cache.clone(),
    };
    let new = match old.command.as_str() {
        "sim" => cmd_sim(&replay, &SimFlags::default())?,
        "dmft" => cmd_dmft(&replay, &DmftFlags::default())?,
        "phase" => cmd_phase(&replay, &PhaseFlags::default())?,
        "threshold" => cmd_threshold(&replay, &ThresholdFlags::default())?,
        "instance" => cmd_instance(&replay, &InstanceFlags::default())?,
        other => return Err(usage(format!("cannot rerun a `{other}` manifest"))),
    };
    let mismatched: Vec<&str> = old
        .outputs
        .iter()
        .filter(|o| !new.outputs.iter().any(|n| n.path == o.path && n.sha256 == o.sha256))
        .map(|o| o.path.as_str())
        .collect();
    if !mismatched.is_empty() {
        return Err(ToleranceError(format!("rerun changed {}", mismatched.join(", "))).into());
    }
    Ok(new)
}

/// Convenience for tests and scripts: parse `args` and run.
pub fn run_args<I, T>(args: I) -> Result<RunManifest>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| usage(e.to_string()))?;
    run(cli)
}

/// Output directory of a finished run, for callers holding only the manifest.
pub fn output_path(out: &Path, manifest: &RunManifest, name: &str) -> Option<PathBuf> {
    manifest
        .outputs
        .iter()
        .find(|o| o.path == name)
        .map(|o| out.join(&o.path))
}
