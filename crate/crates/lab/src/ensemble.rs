//! Seed ensembles and parameter sweeps on a rayon pool.
//!
//! Every task is a pure function of its parameters and seeds, and results are
//! collected in task order, so output does not depend on scheduling.

use anyhow::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spiked_core::amp::{self, AmpInit, AmpTrajectory};
use spiked_core::dmft::{self, DmftConfig, DmftThreshold};
use spiked_core::dynamics::{self, EmpiricalThreshold, SimConfig, Trajectory};
use spiked_core::extrapolate::{self, FitOptions, SuccessTime};
use spiked_core::model::{Instance, TensorStorage};
use spiked_core::{ModelParams, SUCCESS_OVERLAP};

use crate::cache::GridCache;
use crate::format::fmt_beta;

/// Runs `f` on a pool of `jobs` workers (`0` means all cores).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(f))
}

pub fn build_instance(params: ModelParams, seed: u64, storage: TensorStorage) -> Result<Instance> {
    Ok(Instance::builder(params, seed).storage(storage).build()?)
}

/// Member `k` uses instance seed `instance_seed + k` and thermal seed `sim.seed + k`.
pub fn langevin_ensemble(
    params: ModelParams,
    sim: &SimConfig,
    seeds: usize,
    instance_seed: u64,
    storage: TensorStorage,
) -> Result<Vec<Trajectory>> {
    (0..seeds as u64)
        .into_par_iter()
        .map(|k| {
            let (iseed, member) = dynamics::ensemble_member(sim, instance_seed, k);
            let inst = build_instance(params, iseed, storage)?;
            Ok(dynamics::run_dynamics(&inst, &member)?)
        })
        .collect()
}

/// Pointwise mean over the common prefix of the trajectories.
pub fn mean_trajectory(trajs: &[Trajectory]) -> Trajectory {
    let len = trajs.iter().map(Trajectory::len).min().unwrap_or(0);
    let k = trajs.len() as f64;
    let avg = |f: &dyn Fn(&Trajectory) -> &Vec<f64>| -> Vec<f64> {
        (0..len).map(|i| trajs.iter().map(|t| f(t)[i]).sum::<f64>() / k).collect()
    };
    Trajectory {
        times: trajs.first().map(|t| t.times[..len].to_vec()).unwrap_or_default(),
        m: avg(&|t| &t.m),
        energy_per_spin: avg(&|t| &t.energy_per_spin),
        mu: avg(&|t| &t.mu),
    }
}

/// Member `k` uses instance seed `instance_seed + k` and AMP seed `amp_seed + k`.
#[allow(clippy::too_many_arguments)]
pub fn amp_ensemble(
    params: ModelParams,
    init: &AmpInit,
    seeds: usize,
    instance_seed: u64,
    amp_seed: u64,
    max_iter: usize,
    tol: f64,
    storage: TensorStorage,
) -> Result<Vec<AmpTrajectory>> {
    (0..seeds as u64)
        .into_par_iter()
        .map(|k| {
            let inst = build_instance(params, instance_seed.wrapping_add(k), storage)?;
            Ok(amp::run_amp(&inst, init, amp_seed.wrapping_add(k), max_iter, tol)?)
        })
        .collect()
}

/// Mean of series of unequal length; a finished series holds its last value.
pub fn mean_padded(series: &[&[f64]]) -> Vec<f64> {
    let len = series.iter().map(|s| s.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            series
                .iter()
                .map(|s| s.get(i).or(s.last()).copied().unwrap_or(0.0))
                .sum::<f64>()
                / series.len() as f64
        })
        .collect()
}

#[derive(Serialize)]
struct FiniteNPoint<'a> {
    kind: &'a str,
    n: usize,
    delta2: f64,
    delta3: f64,
    beta: String,
    dt: f64,
    t_max: f64,
    algo: String,
    instance_seed: u64,
    thermal_seed: u64,
}

/// Success times for every `(delta3, member)`; finished points come from `cache`.
pub fn finite_n_success_times(
    params: ModelParams,
    grid: &[f64],
    sim: &SimConfig,
    ensemble: usize,
    instance_seed: u64,
    cache: &GridCache,
) -> Result<Vec<Vec<Option<f64>>>> {
    let tasks: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|g| (0..ensemble as u64).map(move |k| (g, k)))
        .collect();
    let flat: Vec<Option<f64>> = tasks
        .par_iter()
        .map(|&(g, k)| {
            let p = params.with_delta3(grid[g]);
            let (iseed, member) = dynamics::ensemble_member(sim, instance_seed, k);
            let key = FiniteNPoint {
                kind: "finite-n-success",
                n: p.n,
                delta2: p.delta2,
                delta3: p.delta3,
                beta: fmt_beta(p.beta),
                dt: member.dt,
                t_max: member.t_max,
                algo: format!("{:?}", member.algo),
                instance_seed: iseed,
                thermal_seed: member.seed,
            };
            cache.get_or_compute(&key, || {
                let inst = Instance::builder(p, iseed).build()?;
                Ok(dynamics::success_time(&inst, &member)?)
            })
        })
        .collect::<Result<_>>()?;
    Ok(flat.chunks(ensemble.max(1)).map(<[_]>::to_vec).collect())
}

pub fn finite_n_threshold(
    params: ModelParams,
    grid: &[f64],
    sim: &SimConfig,
    ensemble: usize,
    instance_seed: u64,
    fit: &FitOptions,
    cache: &GridCache,
) -> Result<EmpiricalThreshold> {
    let samples = finite_n_success_times(params, grid, sim, ensemble, instance_seed, cache)?;
    Ok(dynamics::threshold_from_samples(params, grid, samples, fit)?)
}

#[derive(Serialize)]
struct DmftPoint<'a> {
    kind: &'a str,
    delta2: f64,
    delta3: f64,
    beta: String,
    h: f64,
    t_max: f64,
    m0: f64,
    level: f64,
}

#[derive(Serialize, Deserialize)]
struct CachedCrossing(Option<f64>);

/// Mean-field success time at each `delta3`, integrating only until `m >= 0.5`.
pub fn dmft_success_times(
    delta2: f64,
    beta: f64,
    h: f64,
    t_max: f64,
    m0: f64,
    grid: &[f64],
    cache: &GridCache,
) -> Result<Vec<SuccessTime>> {
    grid.par_iter()
        .map(|&delta3| {
            let key = DmftPoint {
                kind: "dmft-success",
                delta2,
                delta3,
                beta: fmt_beta(beta),
                h,
                t_max,
                m0,
                level: SUCCESS_OVERLAP,
            };
            let CachedCrossing(t_star) = cache.get_or_compute(&key, || {
                let cfg = DmftConfig::new(delta2, delta3, beta, h, t_max)
                    .with_m0(m0)
                    .stopping_at(SUCCESS_OVERLAP);
                let g = dmft::integrate(&cfg)?;
                Ok(CachedCrossing(
                    g.first_crossing(SUCCESS_OVERLAP).filter(|&t| t <= t_max),
                ))
            })?;
            Ok(SuccessTime { delta3, t_star })
        })
        .collect()
}

/// Parallel, cached counterpart of [`dmft::dmft_threshold`].
#[allow(clippy::too_many_arguments)]
pub fn dmft_threshold(
    delta2: f64,
    beta: f64,
    h: f64,
    t_max: f64,
    m0: f64,
    grid: &[f64],
    fit: &FitOptions,
    cache: &GridCache,
) -> Result<DmftThreshold> {
    let points = dmft_success_times(delta2, beta, h, t_max, m0, grid, cache)?;
    let fit = extrapolate::extrapolate(&points, fit)?;
    Ok(DmftThreshold {
        delta2,
        beta,
        h,
        t_max,
        m0,
        points,
        fit,
    })
}
