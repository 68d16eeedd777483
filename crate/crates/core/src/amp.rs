//! Approximate message passing, its state evolution, and a phase proxy.
//!
//! With the spherical prior treated as a standard Gaussian per component, the
//! iteration reads
//!
//! ```text
//! B      = -grad H(xhat) - b xhat_prev,     b = sigma (1/delta2 + 2 qc/delta3)
//! A      = Q'(q),                           q = |xhat|^2 / N,  qc = xhat . xhat_prev / N
//! xhat'  = B / (1 + A)
//! sigma' = 1 / (1 + A)
//! ```
//!
//! `-grad H` contains exactly the two contractions `Y xhat / (delta2 sqrt N)` and
//! `sqrt 2 T[xhat, xhat] / (delta3 N)`. In the large-`N` limit `B` is a scalar
//! Gaussian channel with signal `Q'(m)` and equal noise variance, which gives
//! the state evolution `m' = Q'(m) / (1 + Q'(m))`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{dot, norm_sq, Instance};
use crate::rng::{self, Stream};
use crate::{Error, KernelQ, ModelParams, Result};

/// Default residual tolerance for [`run_amp`].
pub const AMP_TOL: f64 = 1e-7;
/// Default iteration cap.
pub const MAX_ITER: usize = 1000;
/// Seed overlap of the uninformed state-evolution start.
pub const SE_M0_UNINFORMED: f64 = 1e-8;
/// Fixed points below this count as uninformative.
pub const INFORMATIVE_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub xhat: Vec<f64>,
    pub xhat_prev: Vec<f64>,
    pub sigma: f64,
    pub iter: usize,
}

/// How the first estimate is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum AmpInit {
    /// `scale` times a uniform point on the sphere, `sigma = 1`.
    Random { scale: f64 },
    /// `m0 x* + sqrt(m0 - m0^2) z`, so that `q = m = m0` and `sigma = 1 - m0`.
    Informed { m0: f64 },
    /// The planted signal, `sigma = 0`.
    Signal,
    Given { xhat: Vec<f64>, sigma: f64 },
}

impl AmpInit {
    pub fn label(&self) -> &'static str {
        match self {
            AmpInit::Random { .. } => "random",
            AmpInit::Informed { .. } => "informed",
            AmpInit::Signal => "signal",
            AmpInit::Given { .. } => "given",
        }
    }
}

impl AmpState {
    /// Draws the initial state; randomness comes from the AMP stream of `seed`.
    pub fn init(inst: &Instance, init: &AmpInit, seed: u64) -> Result<Self> {
        let n = inst.n();
        let mut r = rng::stream(seed, Stream::Amp, 0, 0);
        let (xhat, sigma) = match init {
            AmpInit::Random { scale } => {
                if !(*scale >= 0.0 && *scale <= 1.0) {
                    return Err(Error::Domain(format!("random scale {scale} outside [0, 1]")));
                }
                let mut x = vec![0.0; n];
                rng::sphere_point(&mut r, &mut x);
                x.iter_mut().for_each(|v| *v *= scale);
                (x, 1.0)
            }
            AmpInit::Informed { m0 } => {
                if !(*m0 >= 0.0 && *m0 <= 1.0) {
                    return Err(Error::Domain(format!("m0 = {m0} outside [0, 1]")));
                }
                let mut z = vec![0.0; n];
                rng::sphere_point(&mut r, &mut z);
                let a = libm::sqrt(m0 - m0 * m0);
                let x = inst.signal().iter().zip(&z).map(|(s, z)| m0 * s + a * z).collect();
                (x, 1.0 - m0)
            }
            AmpInit::Signal => (inst.signal().to_vec(), 0.0),
            AmpInit::Given { xhat, sigma } => {
                Error::check_len(n, xhat.len())?;
                if !(*sigma >= 0.0 && *sigma <= 1.0 + 1e-6) {
                    return Err(Error::Domain(format!("sigma = {sigma} outside [0, 1]")));
                }
                (xhat.clone(), *sigma)
            }
        };
        Ok(AmpState {
            xhat,
            xhat_prev: vec![0.0; n],
            sigma,
            iter: 0,
        })
    }

    /// `|xhat|^2 / N`.
    pub fn q(&self) -> f64 {
        norm_sq(&self.xhat) / self.xhat.len() as f64
    }
}

/// Onsager coefficient for the current state.
pub fn onsager(kernel: &KernelQ, state: &AmpState) -> f64 {
    let n = state.xhat.len() as f64;
    let qc = dot(&state.xhat, &state.xhat_prev) / n;
    state.sigma * (kernel.inv_delta2() + 2.0 * qc * kernel.inv_delta3())
}

/// One AMP iteration.
pub fn amp_step(state: &AmpState, inst: &Instance) -> Result<AmpState> {
    let n = inst.n();
    Error::check_len(n, state.xhat.len())?;
    Error::check_len(n, state.xhat_prev.len())?;
    let kernel = inst.params().kernel();
    let b = onsager(&kernel, state);
    let big_a = kernel.dq(state.q());
    let mut g2 = vec![0.0; n];
    let mut g3 = vec![0.0; n];
    inst.gradient_parts_into(&state.xhat, &mut g2, &mut g3)?;
    let scale = 1.0 / (1.0 + big_a);
    let mut xhat = g2;
    for ((v, t), p) in xhat.iter_mut().zip(&g3).zip(&state.xhat_prev) {
        *v = (-*v - t - b * p) * scale;
    }
    if xhat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step: state.iter + 1,
        });
    }
    Ok(AmpState {
        xhat,
        xhat_prev: state.xhat.clone(),
        sigma: scale,
        iter: state.iter + 1,
    })
}

/// Per-iteration record of an AMP run. Index 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpTrajectory {
    pub init: &'static str,
    pub m: Vec<f64>,
    /// `|xhat_t - xhat_{t-1}| / sqrt N`; entry 0 is NaN.
    pub residual: Vec<f64>,
    /// First iteration with residual below tolerance.
    pub converged_at: Option<usize>,
    pub final_state: AmpState,
}

impl AmpTrajectory {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    pub fn final_overlap(&self) -> f64 {
        *self.m.last().unwrap_or(&0.0)
    }
}

pub fn run_amp(
    inst: &Instance,
    init: &AmpInit,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<AmpTrajectory> {
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let mut state = AmpState::init(inst, init, seed)?;
    let n = inst.n() as f64;
    let mut m = vec![inst.overlap(&state.xhat)?];
    let mut residual = vec![f64::NAN];
    let mut converged_at = None;
    for _ in 0..max_iter {
        let next = amp_step(&state, inst)?;
        let diff: f64 = next
            .xhat
            .iter()
            .zip(&state.xhat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let res = libm::sqrt(diff / n);
        m.push(inst.overlap(&next.xhat)?);
        residual.push(res);
        state = next;
        if res < tol {
            converged_at = Some(state.iter);
            break;
        }
    }
    Ok(AmpTrajectory {
        init: init.label(),
        m,
        residual,
        converged_at,
        final_state: state,
    })
}

/// `m' = Q'(m) / (1 + Q'(m))`.
pub fn se_step(m: f64, kernel: &KernelQ) -> f64 {
    let d = kernel.dq(m);
    d / (1.0 + d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeResult {
    /// Iterates, starting with `m0`.
    pub trajectory: Vec<f64>,
    pub converged: bool,
}

impl SeResult {
    pub fn fixed_point(&self) -> f64 {
        *self.trajectory.last().unwrap()
    }

    pub fn iterations(&self) -> usize {
        self.trajectory.len() - 1
    }
}

/// Iterates the state evolution until `|m' - m| <= tol * m'`.
///
/// The test is relative so that a start at `m0 = 1e-8` is not mistaken for
/// convergence; an exact zero also stops.
pub fn run_se(kernel: &KernelQ, m0: f64, tol: f64, max_iter: usize) -> Result<SeResult> {
    if !(0.0..=1.0).contains(&m0) {
        return Err(Error::Domain(format!("m0 = {m0} outside [0, 1]")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let mut trajectory = vec![m0];
    let mut m = m0;
    for _ in 0..max_iter {
        let next = se_step(m, kernel);
        trajectory.push(next);
        let done = next == 0.0 || (next - m).abs() <= tol * next;
        m = next;
        if done {
            return Ok(SeResult {
                trajectory,
                converged: true,
            });
        }
    }
    Ok(SeResult {
        trajectory,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Easy,
    HardOrImpossible,
    ImpossibleProxy,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Easy => "easy",
            Phase::HardOrImpossible => "hard_or_impossible",
            Phase::ImpossibleProxy => "impossible_proxy",
        }
    }
}

impl core::fmt::Display for Phase {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub delta2: f64,
    pub delta3: f64,
    pub phase: Phase,
    pub m_uninformed: f64,
    pub m_informed: f64,
}

const SE_TOL: f64 = 1e-12;
const SE_MAX_ITER: usize = 1_000_000;

/// State evolution from `1e-8` and from `1`: both informative and equal is
/// easy, both uninformative is the impossible proxy, anything else is
/// hard-or-impossible.
pub fn classify_phase(delta2: f64, delta3: f64) -> Result<PhasePoint> {
    let kernel = KernelQ::new(delta2, delta3);
    crate::params::check_variance("delta2", delta2)?;
    crate::params::check_variance("delta3", delta3)?;
    let lo = run_se(&kernel, SE_M0_UNINFORMED, SE_TOL, SE_MAX_ITER)?.fixed_point();
    let hi = run_se(&kernel, 1.0, SE_TOL, SE_MAX_ITER)?.fixed_point();
    let phase = match (lo > INFORMATIVE_LEVEL, hi > INFORMATIVE_LEVEL) {
        (true, true) if (lo - hi).abs() <= 1e-6 * hi.max(1.0) => Phase::Easy,
        (false, false) => Phase::ImpossibleProxy,
        _ => Phase::HardOrImpossible,
    };
    Ok(PhasePoint {
        delta2,
        delta3,
        phase,
        m_uninformed: lo,
        m_informed: hi,
    })
}

/// Convenience for a parameter set.
pub fn classify_params(params: &ModelParams) -> Result<PhasePoint> {
    classify_phase(params.delta2, params.delta3)
}
