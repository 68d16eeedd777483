//! Langevin and gradient-flow dynamics on the sphere at finite `N`.
//!
//! One step is Euler-Maruyama followed by exact renormalisation:
//!
//! ```text
//! x' = x + dt (-grad H(x) - mu x) + sqrt(2 dt / beta) g,    g ~ N(0, I)
//! x' <- sqrt(N) x' / |x'|
//! ```
//!
//! with `mu = x . (-grad H(x)) / N + 1/beta`, the multiplier that keeps
//! `|x|^2` fixed to first order. Gradient flow drops the noise and the `1/beta`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::extrapolate::{self, FitOptions, SuccessTime, ThresholdFit};
use crate::model::{dot, project_to_sphere, Configuration, Instance};
use crate::rng::{self, Stream, StreamRng};
use crate::{Error, ModelParams, Result, SUCCESS_OVERLAP};

/// Steps at or above this size are rejected.
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Langevin,
    GradientFlow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub algo: Algorithm,
    pub record_stride: usize,
    /// Seeds the initial condition and the thermal noise; independent of the instance seed.
    pub seed: u64,
    /// End the run once the overlap reaches this value.
    pub stop_at_overlap: Option<f64>,
}

impl SimConfig {
    pub fn new(algo: Algorithm, dt: f64, t_max: f64, seed: u64) -> Self {
        SimConfig {
            dt,
            t_max,
            algo,
            record_stride: 1,
            seed,
            stop_at_overlap: None,
        }
    }

    pub fn steps(&self) -> usize {
        libm::round(self.t_max / self.dt) as usize
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt < MAX_DT) {
            return Err(Error::Domain(format!(
                "dt = {} outside (0, {MAX_DT})",
                self.dt
            )));
        }
        if !(self.t_max > 0.0) || self.t_max / self.dt >= usize::MAX as f64 / 2.0 {
            return Err(Error::Domain(format!(
                "t_max = {} unusable with dt = {}",
                self.t_max, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::domain("record_stride must be at least 1"));
        }
        if self.algo == Algorithm::Langevin && params.is_zero_temperature() {
            return Err(Error::domain(
                "Langevin dynamics needs a finite beta; use gradient flow for beta = inf",
            ));
        }
        Ok(())
    }
}

/// Recorded observables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    pub energy_per_spin: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, obs: Observables) {
        self.times.push(t);
        self.m.push(obs.m);
        self.energy_per_spin.push(obs.energy_per_spin);
        self.mu.push(obs.mu);
    }

    /// First recorded time with `m >= level`, linearly interpolated.
    pub fn first_crossing(&self, level: f64) -> Option<f64> {
        if self.m.first().is_some_and(|&v| v >= level) {
            return Some(self.times[0]);
        }
        (1..self.len()).find_map(|i| {
            (self.m[i] >= level).then(|| {
                let f = (level - self.m[i - 1]) / (self.m[i] - self.m[i - 1]);
                self.times[i - 1] + f * (self.times[i] - self.times[i - 1])
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub m: f64,
    pub energy_per_spin: f64,
    pub mu: f64,
}

/// Reusable stepper; holds gradient buffers and the thermal stream.
pub struct Integrator<'a> {
    inst: &'a Instance,
    dt: f64,
    temperature: f64,
    noise: Option<StreamRng>,
    g2: Vec<f64>,
    g3: Vec<f64>,
    steps_taken: usize,
}

impl<'a> Integrator<'a> {
    /// `noise = None` gives gradient flow regardless of the instance temperature.
    pub fn new(inst: &'a Instance, dt: f64, noise: Option<StreamRng>) -> Self {
        let n = inst.n();
        let temperature = if noise.is_some() {
            inst.params().temperature()
        } else {
            0.0
        };
        Integrator {
            inst,
            dt,
            temperature,
            noise,
            g2: vec![0.0; n],
            g3: vec![0.0; n],
            steps_taken: 0,
        }
    }

    pub fn for_config(inst: &'a Instance, sim: &SimConfig) -> Self {
        let noise = match sim.algo {
            Algorithm::Langevin => Some(rng::stream(sim.seed, Stream::Thermal, 0, 0)),
            Algorithm::GradientFlow => None,
        };
        Integrator::new(inst, sim.dt, noise)
    }

    /// Gradient at `x` plus the observables derived from it.
    fn observe(&mut self, x: &[f64]) -> Result<Observables> {
        self.inst.gradient_parts_into(x, &mut self.g2, &mut self.g3)?;
        let n = x.len() as f64;
        // Euler: x . grad E_p = p E_p.
        let e2 = dot(x, &self.g2) / 2.0;
        let e3 = dot(x, &self.g3) / 3.0;
        let force_dot_x = -(2.0 * e2 + 3.0 * e3);
        Ok(Observables {
            m: self.inst.overlap(x)?,
            energy_per_spin: (e2 + e3) / n,
            mu: force_dot_x / n + self.temperature,
        })
    }

    /// Observables at `x` without stepping.
    pub fn observables(&mut self, x: &Configuration) -> Result<Observables> {
        self.observe(x)
    }

    /// Advances `x` by one step; returns the observables at the *starting* point.
    pub fn step(&mut self, x: &mut Configuration) -> Result<Observables> {
        let obs = self.observe(x)?;
        let dt = self.dt;
        let amp = libm::sqrt(2.0 * self.temperature * dt);
        let v = x.as_mut_vec();
        let shrink = 1.0 - dt * obs.mu;
        match self.noise.as_mut() {
            Some(r) if amp > 0.0 => {
                for ((xi, a), b) in v.iter_mut().zip(&self.g2).zip(&self.g3) {
                    *xi = shrink * *xi - dt * (a + b) + amp * rng::normal(r);
                }
            }
            _ => {
                for ((xi, a), b) in v.iter_mut().zip(&self.g2).zip(&self.g3) {
                    *xi = shrink * *xi - dt * (a + b);
                }
            }
        }
        self.steps_taken += 1;
        let n2 = project_to_sphere(v);
        if !n2.is_finite() || n2 <= 0.0 || v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence {
                step: self.steps_taken,
            });
        }
        Ok(obs)
    }
}

/// Single step from `x`. Passing `noise = None` is the gradient-flow step.
pub fn langevin_step(
    x: &Configuration,
    inst: &Instance,
    dt: f64,
    noise: Option<&mut StreamRng>,
) -> Result<Configuration> {
    let rng_copy = noise.as_ref().map(|r| (*r).clone());
    let mut it = Integrator::new(inst, dt, rng_copy);
    let mut y = x.clone();
    it.step(&mut y)?;
    if let (Some(r), Some(after)) = (noise, it.noise) {
        *r = after;
    }
    Ok(y)
}

/// Runs from a uniformly random start drawn from `sim.seed`.
pub fn run_dynamics(inst: &Instance, sim: &SimConfig) -> Result<Trajectory> {
    let x0 = Configuration::random(inst.n(), sim.seed);
    run_dynamics_from(inst, sim, x0)
}

pub fn run_dynamics_from(inst: &Instance, sim: &SimConfig, x0: Configuration) -> Result<Trajectory> {
    sim.validate(inst.params())?;
    Error::check_len(inst.n(), x0.len())?;
    let mut it = Integrator::for_config(inst, sim);
    let mut x = x0;
    let steps = sim.steps();
    let mut traj = Trajectory::default();
    for k in 0..steps {
        let obs = it.step(&mut x)?;
        if k % sim.record_stride == 0 {
            traj.push(k as f64 * sim.dt, obs);
        }
        if sim.stop_at_overlap.is_some_and(|lvl| obs.m >= lvl) {
            return Ok(traj);
        }
    }
    if steps.is_multiple_of(sim.record_stride) {
        let obs = it.observables(&x)?;
        traj.push(steps as f64 * sim.dt, obs);
    }
    Ok(traj)
}

/// Median with censored entries (`None`) ranked above every finite value.
pub fn censored_median(times: &[Option<f64>]) -> Option<f64> {
    if times.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let med = if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    };
    med.is_finite().then_some(med)
}

/// Success time of one ensemble member.
pub fn success_time(inst: &Instance, sim: &SimConfig) -> Result<Option<f64>> {
    let sim = SimConfig {
        stop_at_overlap: Some(SUCCESS_OVERLAP),
        ..*sim
    };
    let traj = run_dynamics(inst, &sim)?;
    Ok(traj.first_crossing(SUCCESS_OVERLAP).filter(|&t| t <= sim.t_max))
}

#[derive(Debug, Clone)]
pub struct EmpiricalThreshold {
    pub params: ModelParams,
    /// Median success time per `delta3`.
    pub points: Vec<SuccessTime>,
    /// Individual success times, `[delta3 index][member]`.
    pub samples: Vec<Vec<Option<f64>>>,
    pub fit: ThresholdFit,
}

/// Member `k` of an ensemble uses instance seed `instance_seed + k` and
/// dynamics seed `sim.seed + k`.
pub fn ensemble_member(sim: &SimConfig, instance_seed: u64, k: u64) -> (u64, SimConfig) {
    (
        instance_seed.wrapping_add(k),
        SimConfig {
            seed: sim.seed.wrapping_add(k),
            ..*sim
        },
    )
}

/// Median success times over `ensemble` members per `delta3`, then the extrapolated threshold.
pub fn empirical_threshold(
    params: ModelParams,
    delta3_grid: &[f64],
    sim: &SimConfig,
    ensemble: usize,
    instance_seed: u64,
    fit: &FitOptions,
) -> Result<EmpiricalThreshold> {
    if ensemble == 0 {
        return Err(Error::domain("ensemble must have at least one member"));
    }
    let mut samples = Vec::with_capacity(delta3_grid.len());
    for &d3 in delta3_grid {
        let p = params.with_delta3(d3);
        let mut row = Vec::with_capacity(ensemble);
        for k in 0..ensemble as u64 {
            let (iseed, member) = ensemble_member(sim, instance_seed, k);
            let inst = crate::model::generate_instance(p, iseed)?;
            row.push(success_time(&inst, &member)?);
        }
        samples.push(row);
    }
    threshold_from_samples(params, delta3_grid, samples, fit)
}

/// Reduces per-member success times to medians and fits the threshold.
pub fn threshold_from_samples(
    params: ModelParams,
    delta3_grid: &[f64],
    samples: Vec<Vec<Option<f64>>>,
    fit: &FitOptions,
) -> Result<EmpiricalThreshold> {
    let points: Vec<SuccessTime> = delta3_grid
        .iter()
        .zip(&samples)
        .map(|(&delta3, s)| SuccessTime {
            delta3,
            t_star: censored_median(s),
        })
        .collect();
    let fit = extrapolate::extrapolate(&points, fit)?;
    Ok(EmpiricalThreshold {
        params,
        points,
        samples,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, norm_sq, Channels};

    fn params(n: usize, beta: f64) -> ModelParams {
        ModelParams::new(n, 0.7, 1.5, beta).unwrap()
    }

    #[test]
    fn langevin_rejects_infinite_beta() {
        let p = params(16, f64::INFINITY);
        let sim = SimConfig::new(Algorithm::Langevin, 0.01, 1.0, 0);
        assert!(sim.validate(&p).is_err());
        let sim = SimConfig::new(Algorithm::GradientFlow, 0.01, 1.0, 0);
        assert!(sim.validate(&p).is_ok());
        assert!(SimConfig::new(Algorithm::GradientFlow, 0.1, 1.0, 0).validate(&p).is_err());
    }

    #[test]
    fn step_preserves_sphere() {
        let inst = generate_instance(params(48, 1.0), 1).unwrap();
        let mut r = rng::stream(3, Stream::Thermal, 0, 0);
        let mut x = Configuration::random(48, 2);
        for _ in 0..50 {
            x = langevin_step(&x, &inst, 0.02, Some(&mut r)).unwrap();
            let ratio = norm_sq(&x) / 48.0;
            assert!((ratio - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn noiseless_step_is_gradient_flow_step() {
        let inst = generate_instance(params(24, 1.0), 4).unwrap();
        let x = Configuration::random(24, 5);
        let a = langevin_step(&x, &inst, 0.01, None).unwrap();
        let mut it = Integrator::for_config(&inst, &SimConfig::new(Algorithm::GradientFlow, 0.01, 1.0, 0));
        let mut b = x.clone();
        it.step(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn free_landscape_keeps_zero_energy() {
        let inst = Instance::builder(params(32, 1e6), 1)
            .channels(Channels::EMPTY)
            .build()
            .unwrap();
        let sim = SimConfig::new(Algorithm::Langevin, 0.01, 2.0, 3);
        let traj = run_dynamics(&inst, &sim).unwrap();
        assert!(traj.energy_per_spin.iter().all(|&e| e == 0.0));
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(traj.len(), 201);
    }

    #[test]
    fn gradient_flow_fixed_at_noiseless_signal() {
        let p = params(40, f64::INFINITY);
        let inst = Instance::builder(p, 2).channels(Channels::NOISELESS).build().unwrap();
        let sim = SimConfig::new(Algorithm::GradientFlow, 0.01, 2.0, 0);
        let x0 = Configuration::new(inst.signal().to_vec()).unwrap();
        let traj = run_dynamics_from(&inst, &sim, x0).unwrap();
        // The excluded diagonal terms move the stationary point by O(1/N).
        assert!(traj.m.iter().all(|&m| (m - 1.0).abs() < 2.0 / 40.0), "{:?}", traj.m.last());
    }

    #[test]
    fn gradient_flow_energy_non_increasing() {
        let p = params(40, f64::INFINITY);
        let inst = generate_instance(p, 8).unwrap();
        let sim = SimConfig::new(Algorithm::GradientFlow, 0.01, 5.0, 1);
        let traj = run_dynamics(&inst, &sim).unwrap();
        for w in traj.energy_per_spin.windows(2) {
            assert!(w[1] <= w[0] + 1e-4 * sim.dt * sim.dt, "{w:?}");
        }
    }

    #[test]
    fn stride_and_overlap_bounds() {
        let inst = generate_instance(params(30, 1.0), 9).unwrap();
        let mut sim = SimConfig::new(Algorithm::Langevin, 0.01, 1.0, 2);
        sim.record_stride = 10;
        let traj = run_dynamics(&inst, &sim).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.m.iter().all(|m| m.abs() <= 1.0 + 1e-6));
    }

    #[test]
    fn median_with_censoring() {
        assert_eq!(censored_median(&[Some(3.0), None, Some(1.0)]), Some(3.0));
        assert_eq!(censored_median(&[Some(3.0), None, None]), None);
        assert_eq!(censored_median(&[Some(2.0), Some(4.0)]), Some(3.0));
        assert_eq!(censored_median(&[]), None);
    }

    #[test]
    fn trajectory_crossing() {
        let t = Trajectory {
            times: vec![0.0, 1.0, 2.0],
            m: vec![0.0, 0.4, 0.8],
            energy_per_spin: vec![0.0; 3],
            mu: vec![0.0; 3],
        };
        assert!((t.first_crossing(0.5).unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(t.first_crossing(0.9), None);
    }
}
