//! Two-time dynamical mean-field equations.
//!
//! For `t > t'` the correlation `C(t,t')`, response `R(t,t')`, overlap `m(t)`
//! and Lagrange multiplier `mu(t)` obey
//!
//! ```text
//! d/dt C(t,t') = -mu(t) C(t,t') + Q'(m(t)) m(t')
//!                + int_0^t  R(t,s)  Q''(C(t,s)) C(t',s) ds
//!                + int_0^t' R(t',s) Q'(C(t,s))          ds
//! d/dt R(t,t') = -mu(t) R(t,t') + int_t'^t R(t,s) Q''(C(t,s)) R(s,t') ds
//! d/dt m(t)    = -mu(t) m(t) + Q'(m(t)) + int_0^t R(t,s) m(s) Q''(C(t,s)) ds
//! mu(t)        = T + Q'(m(t)) m(t) + int_0^t R(t,s) [Q''(C(t,s)) C(t,s) + Q'(C(t,s))] ds
//! ```
//!
//! with `C(t,t) = 1`, `R(t,t^-) = 1` and `R(t,t') = 0` for `t < t'`. The last
//! line follows from `d/dt C(t,t) = 0` including the thermal contribution
//! `2T`. `T = 1/beta` and vanishes for gradient flow.
//!
//! The solver propagates rows `t_i -> t_{i+1}` on a uniform grid with a Heun
//! (explicit trapezoidal) step; memory integrals use the trapezoidal rule on
//! the recorded history. The diagonal `C(t,t)` is integrated like any other
//! entry, through `d/dt C(t,t) = 2 dC(t,t')/dt|_{t'=t^-} + 2T`, so its drift
//! from 1 measures how well the multiplier closes the equations.

use alloc::vec;
use alloc::vec::Vec;

use crate::extrapolate::{self, FitOptions, SuccessTime, ThresholdFit};
use crate::model::dot;
use crate::params::{check_beta, check_variance, temperature};
use crate::{Error, KernelQ, Result, SUCCESS_OVERLAP};

/// Largest accepted step.
pub const MAX_STEP: f64 = 0.1;
/// Drift of `C(t,t)` that aborts the integration.
pub const DRIFT_TOL: f64 = 1e-3;
/// Default seed overlap, standing in for the `O(N^{-1/2})` overlap of a random start.
pub const DEFAULT_M0: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmftConfig {
    pub kernel: KernelQ,
    pub beta: f64,
    pub h: f64,
    pub t_max: f64,
    pub m0: f64,
    /// Stop as soon as `m(t)` reaches this value.
    pub stop_at_overlap: Option<f64>,
}

impl DmftConfig {
    pub fn new(delta2: f64, delta3: f64, beta: f64, h: f64, t_max: f64) -> Self {
        DmftConfig {
            kernel: KernelQ::new(delta2, delta3),
            beta,
            h,
            t_max,
            m0: DEFAULT_M0,
            stop_at_overlap: None,
        }
    }

    pub fn with_m0(self, m0: f64) -> Self {
        DmftConfig { m0, ..self }
    }

    pub fn with_kernel(self, kernel: KernelQ) -> Self {
        DmftConfig { kernel, ..self }
    }

    pub fn stopping_at(self, overlap: f64) -> Self {
        DmftConfig {
            stop_at_overlap: Some(overlap),
            ..self
        }
    }

    /// Number of steps to cover `[0, t_max]`.
    pub fn steps(&self) -> usize {
        libm::ceil(self.t_max / self.h - 1e-9) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.kernel.inv_delta2(), self.kernel.inv_delta3());
        check_variance("delta2", 1.0 / a)?;
        check_variance("delta3", 1.0 / b)?;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::domain("delta2 and delta3 must be positive"));
        }
        check_beta(self.beta)?;
        if !(self.h > 0.0 && self.h <= MAX_STEP) {
            return Err(Error::Domain(alloc::format!(
                "step h = {} outside (0, {MAX_STEP}]",
                self.h
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::domain("t_max must be positive and finite"));
        }
        if !(self.m0.abs() <= 1.0) {
            return Err(Error::domain("m0 must lie in [-1, 1]"));
        }
        Ok(())
    }

    /// Bytes needed for the two `(steps+1)^2` arrays.
    pub fn memory_bytes(&self) -> usize {
        let s = self.steps() + 1;
        2 * s * s * core::mem::size_of::<f64>()
    }
}

/// Discretised `C`, `R`, `m`, `mu` on `t_i = i h`.
#[derive(Debug, Clone)]
pub struct TwoTimeGrid {
    h: f64,
    stride: usize,
    len: usize,
    beta: f64,
    kernel: KernelQ,
    /// Symmetric: `c[i*stride + j] = C(t_i, t_j)` for all `i, j < len`.
    c: Vec<f64>,
    /// `R(t_i, t_j)` for `i >= j`, mirrored into the upper triangle.
    r: Vec<f64>,
    m: Vec<f64>,
    mu: Vec<f64>,
}

impl TwoTimeGrid {
    fn with_capacity(cfg: &DmftConfig) -> Self {
        let stride = cfg.steps() + 1;
        TwoTimeGrid {
            h: cfg.h,
            stride,
            len: 0,
            beta: cfg.beta,
            kernel: cfg.kernel,
            c: vec![0.0; stride * stride],
            r: vec![0.0; stride * stride],
            m: Vec::with_capacity(stride),
            mu: Vec::with_capacity(stride),
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kernel(&self) -> KernelQ {
        self.kernel
    }

    /// Number of recorded times.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Steps taken; the last recorded time is `steps() * h`.
    pub fn steps(&self) -> usize {
        self.len.saturating_sub(1)
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn c(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.len && j < self.len);
        self.c[i * self.stride + j]
    }

    /// `R(t_i, t_j)`; exactly zero for `i < j`.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.len && j < self.len);
        if i >= j {
            self.r[i * self.stride + j]
        } else {
            0.0
        }
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `max_i |C(t_i, t_i) - 1|`.
    pub fn diagonal_drift(&self) -> f64 {
        (0..self.len)
            .map(|i| (self.c(i, i) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// First time `m(t) >= level`, linearly interpolated between grid points.
    pub fn first_crossing(&self, level: f64) -> Option<f64> {
        first_crossing(&self.m, self.h, level)
    }

    fn set_row(&mut self, i: usize, cs: &[f64], rs: &[f64]) {
        let s = self.stride;
        for (j, (&cv, &rv)) in cs.iter().zip(rs).enumerate() {
            self.c[i * s + j] = cv;
            self.c[j * s + i] = cv;
            self.r[i * s + j] = rv;
            self.r[j * s + i] = rv;
        }
    }

    /// Row `i` of `C`, entries `0..=upto`.
    fn c_row(&self, i: usize, upto: usize) -> &[f64] {
        &self.c[i * self.stride..i * self.stride + upto + 1]
    }

    /// Row `i` of the mirrored `R` storage, entries `from..=upto`.
    /// For `k <= i` these are `R(t_i, t_k)`; for `k >= i` they are `R(t_k, t_i)`.
    fn r_row(&self, i: usize, from: usize, upto: usize) -> &[f64] {
        &self.r[i * self.stride + from..i * self.stride + upto + 1]
    }
}

pub(crate) fn first_crossing(series: &[f64], h: f64, level: f64) -> Option<f64> {
    if series.first().is_some_and(|&v| v >= level) {
        return Some(0.0);
    }
    series.windows(2).enumerate().find_map(|(i, w)| {
        (w[1] >= level).then(|| (i as f64 + (level - w[0]) / (w[1] - w[0])) * h)
    })
}

/// `int f g` by the trapezoidal rule on `len` equally spaced samples.
#[inline]
fn trapz_dot(f: &[f64], g: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    h * (dot(f, g) - 0.5 * (f[0] * g[0] + f[n - 1] * g[n - 1]))
}

/// Right-hand sides at one time row.
#[derive(Debug, Default)]
struct RowRates {
    /// `d/dt C(t_i, t_j)` for `j <= i` (one-sided at `j = i`).
    c: Vec<f64>,
    r: Vec<f64>,
    m: f64,
    mu: f64,
}

/// Scratch buffers reused across rows.
#[derive(Debug, Default)]
struct Scratch {
    /// `R(t_i,t_k) Q''(C(t_i,t_k))`.
    a: Vec<f64>,
    /// `Q'(C(t_i,t_k))`.
    b: Vec<f64>,
    /// `a_k C(t_i,t_k) + R(t_i,t_k) b_k`, the closure integrand.
    w: Vec<f64>,
}

impl Scratch {
    fn load(&mut self, g: &TwoTimeGrid, i: usize) {
        let k = g.kernel;
        let c = g.c_row(i, i);
        let r = g.r_row(i, 0, i);
        self.a.clear();
        self.b.clear();
        self.w.clear();
        for (&cv, &rv) in c.iter().zip(r) {
            let a = rv * k.d2q(cv);
            let b = k.dq(cv);
            self.a.push(a);
            self.b.push(b);
            self.w.push(a * cv + rv * b);
        }
    }
}

/// `mu(t_i)` from the closure, given rows `0..=i` of `C`, `R` and `m`.
pub fn mu_closure(grid: &TwoTimeGrid, i: usize) -> f64 {
    let mut s = Scratch::default();
    s.load(grid, i);
    closure_from(grid, i, &s)
}

fn closure_from(g: &TwoTimeGrid, i: usize, s: &Scratch) -> f64 {
    let m = g.m[i];
    temperature(g.beta) + g.kernel.dq(m) * m + trapz_sum(&s.w, g.h)
}

#[inline]
fn trapz_sum(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
}

fn rates(g: &TwoTimeGrid, i: usize, s: &mut Scratch, out: &mut RowRates) {
    s.load(g, i);
    let h = g.h;
    let k = g.kernel;
    let mu = closure_from(g, i, s);
    let mi = g.m[i];
    let dqm = k.dq(mi);
    out.mu = mu;
    out.c.clear();
    out.r.clear();
    for j in 0..=i {
        let cij = g.c[i * g.stride + j];
        let rij = g.r[i * g.stride + j];
        let first = trapz_dot(&s.a, g.c_row(j, i), h);
        let second = trapz_dot(g.r_row(j, 0, j), &s.b[..=j], h);
        out.c.push(-mu * cij + dqm * g.m[j] + first + second);
        let resp = trapz_dot(&s.a[j..=i], g.r_row(j, j, i), h);
        out.r.push(-mu * rij + resp);
    }
    out.m = -mu * mi + dqm + trapz_dot(&s.a, &g.m[..=i], h);
}

/// Integrates the equations on `[0, t_max]` (or until `stop_at_overlap`).
pub fn integrate(cfg: &DmftConfig) -> Result<TwoTimeGrid> {
    cfg.validate()?;
    let temp = temperature(cfg.beta);
    let h = cfg.h;
    let steps = cfg.steps();
    let mut g = TwoTimeGrid::with_capacity(cfg);
    g.len = 1;
    g.set_row(0, &[1.0], &[1.0]);
    g.m.push(cfg.m0);
    g.mu.push(mu_closure(&g, 0));

    let mut s = Scratch::default();
    let mut now = RowRates::default();
    let mut next = RowRates::default();
    let mut c_row = Vec::with_capacity(steps + 1);
    let mut r_row = Vec::with_capacity(steps + 1);
    for i in 0..steps {
        if cfg.stop_at_overlap.is_some_and(|lvl| g.m[i] >= lvl) {
            break;
        }
        rates(&g, i, &mut s, &mut now);
        let diag_now = 2.0 * now.c[i] + 2.0 * temp;

        // Predictor.
        c_row.clear();
        r_row.clear();
        for j in 0..=i {
            c_row.push(g.c(i, j) + h * now.c[j]);
            r_row.push(g.r(i, j) + h * now.r[j]);
        }
        c_row.push(g.c(i, i) + h * diag_now);
        r_row.push(1.0);
        g.len = i + 2;
        g.set_row(i + 1, &c_row, &r_row);
        g.m.push(g.m[i] + h * now.m);

        // Corrector.
        rates(&g, i + 1, &mut s, &mut next);
        let diag_next = 2.0 * next.c[i + 1] + 2.0 * temp;
        for j in 0..=i {
            c_row[j] = g.c(i, j) + 0.5 * h * (now.c[j] + next.c[j]);
            r_row[j] = g.r(i, j) + 0.5 * h * (now.r[j] + next.r[j]);
        }
        c_row[i + 1] = g.c(i, i) + 0.5 * h * (diag_now + diag_next);
        g.set_row(i + 1, &c_row, &r_row);
        g.m[i + 1] = g.m[i] + 0.5 * h * (now.m + next.m);
        let mu = mu_closure(&g, i + 1);
        g.mu.push(mu);

        let drift = (c_row[i + 1] - 1.0).abs();
        if !drift.is_finite() || !g.m[i + 1].is_finite() || !mu.is_finite() {
            return Err(Error::Divergence { step: i + 1 });
        }
        if drift > DRIFT_TOL {
            return Err(Error::Instability {
                t: g.time(i + 1),
                drift,
                suggested_h: h / 2.0,
            });
        }
    }
    Ok(g)
}

/// `max |R(t,t') - beta dC(t,t')/dt'|` over `t > t' >= t0`.
///
/// The derivative is a forward difference, so the result carries an `O(h)`
/// discretisation floor. Only meaningful at finite `beta`.
pub fn fdt_check(grid: &TwoTimeGrid, t0: f64) -> Result<f64> {
    if grid.beta.is_infinite() {
        return Err(Error::domain("fluctuation-dissipation check needs finite beta"));
    }
    let j0 = libm::ceil(t0 / grid.h - 1e-9).max(0.0) as usize;
    let mut worst: f64 = 0.0;
    for i in j0 + 1..grid.len {
        for j in j0..i {
            let dc = (grid.c(i, j + 1) - grid.c(i, j)) / grid.h;
            worst = worst.max((grid.r(i, j) - grid.beta * dc).abs());
        }
    }
    Ok(worst)
}

/// Per-`delta3` success times from the mean-field overlap, and the extrapolated threshold.
#[derive(Debug, Clone)]
pub struct DmftThreshold {
    pub delta2: f64,
    pub beta: f64,
    pub h: f64,
    pub t_max: f64,
    pub m0: f64,
    pub points: Vec<SuccessTime>,
    pub fit: ThresholdFit,
}

/// Integrates at each `delta3` until `m >= 0.5` (censored at `t_max`) and extrapolates `1/t* -> 0`.
pub fn dmft_threshold(
    delta2: f64,
    beta: f64,
    h: f64,
    t_max: f64,
    m0: f64,
    delta3_grid: &[f64],
    fit: &FitOptions,
) -> Result<DmftThreshold> {
    let mut points = Vec::with_capacity(delta3_grid.len());
    for &d3 in delta3_grid {
        let cfg = DmftConfig::new(delta2, d3, beta, h, t_max)
            .with_m0(m0)
            .stopping_at(SUCCESS_OVERLAP);
        let g = integrate(&cfg)?;
        points.push(SuccessTime {
            delta3: d3,
            t_star: g.first_crossing(SUCCESS_OVERLAP).filter(|&t| t <= t_max),
        });
    }
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
