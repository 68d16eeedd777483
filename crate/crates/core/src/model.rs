//! The spiked matrix-tensor generative model.
//!
//! Observations are
//!
//! ```text
//! Y_ij  = x*_i x*_j / sqrt(N)          + xi_ij,   xi_ij  ~ N(0, delta2),  i < j
//! T_ijk = sqrt(2) x*_i x*_j x*_k / N   + xi_ijk,  xi_ijk ~ N(0, delta3),  i < j < k
//! ```
//!
//! and the Hamiltonian is the negative log-likelihood up to constants,
//!
//! ```text
//! H(x) = -1/(delta2 sqrt(N)) sum_{i<j} Y_ij x_i x_j - sqrt(2)/(delta3 N) sum_{i<j<k} T_ijk x_i x_j x_k
//! ```
//!
//! whose signal part is `-N m^2/(2 delta2) - N m^3/(3 delta3)` up to the
//! excluded diagonal terms. Only the strictly ordered entries are stored.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::rng::{self, Stream};
use crate::{Error, ModelParams, Result};

/// Relative tolerance on `|x|^2 = N` for a [`Configuration`].
pub const SPHERE_TOL: f64 = 1e-9;

#[inline]
fn sorted2(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn matrix_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

pub fn tensor_len(n: usize) -> usize {
    n * n.saturating_sub(1) * n.saturating_sub(2) / 6
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Eight accumulators so the reduction vectorises; fixed order keeps it deterministic.
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

/// Rescales `x` onto the sphere `|x|^2 = len(x)`; returns the previous squared norm.
pub fn project_to_sphere(x: &mut [f64]) -> f64 {
    let n2 = norm_sq(x);
    let scale = libm::sqrt(x.len() as f64 / n2);
    for v in x.iter_mut() {
        *v *= scale;
    }
    n2
}

/// `m = (1/N) sum_i x_i x*_i`.
pub fn overlap(x: &[f64], signal: &[f64]) -> Result<f64> {
    Error::check_len(signal.len(), x.len())?;
    Ok(dot(x, signal) / x.len() as f64)
}

/// A point on the sphere `|x|^2 = N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration(Vec<f64>);

impl Configuration {
    /// Wraps `x`, checking the spherical constraint.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        let n = x.len() as f64;
        let r = norm_sq(&x) / n;
        if x.is_empty() || !((r - 1.0).abs() <= SPHERE_TOL) {
            return Err(Error::domain(format!(
                "configuration violates |x|^2 = N: |x|^2/N = {r}"
            )));
        }
        Ok(Configuration(x))
    }

    /// Projects `x` onto the sphere.
    pub fn projected(mut x: Vec<f64>) -> Self {
        project_to_sphere(&mut x);
        Configuration(x)
    }

    /// Uniformly random point, drawn from the initialisation stream of `seed`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut x = vec![0.0; n];
        rng::sphere_point(&mut rng::stream(seed, Stream::Init, 0, 0), &mut x);
        Configuration(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Mutable access for in-place integrators; callers must restore the constraint.
    pub(crate) fn as_mut_vec(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl Deref for Configuration {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Which parts of the observations are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channels {
    pub spike: bool,
    pub noise: bool,
}

impl Channels {
    pub const FULL: Channels = Channels {
        spike: true,
        noise: true,
    };
    pub const NOISELESS: Channels = Channels {
        spike: true,
        noise: false,
    };
    pub const NOISE_ONLY: Channels = Channels {
        spike: false,
        noise: true,
    };
    pub const EMPTY: Channels = Channels {
        spike: false,
        noise: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorStorage {
    /// All `i < j < k` entries held in memory (`N^3/6` reals).
    Packed,
    /// Tensor rows regenerated from their seeded streams on every contraction.
    Implicit,
}

/// Ground truth and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    params: ModelParams,
    seed: u64,
    channels: Channels,
    signal: Vec<f64>,
    /// `Y_ij`, `i < j`, row-major.
    y: Vec<f64>,
    /// `T_ijk`, `i < j < k`, lexicographic; `None` when regenerated on demand.
    t3: Option<Vec<f64>>,
}

/// Matrix and tensor contributions to `H`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTerms {
    pub matrix: f64,
    pub tensor: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.matrix + self.tensor
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceBuilder {
    params: ModelParams,
    seed: u64,
    channels: Channels,
    storage: TensorStorage,
}

impl InstanceBuilder {
    pub fn channels(mut self, channels: Channels) -> Self {
        self.channels = channels;
        self
    }

    pub fn storage(mut self, storage: TensorStorage) -> Self {
        self.storage = storage;
        self
    }

    pub fn build(self) -> Result<Instance> {
        let p = self.params;
        p.validate()?;
        let n = p.n;
        let mut signal = vec![0.0; n];
        rng::sphere_point(&mut rng::stream(self.seed, Stream::Signal, 0, 0), &mut signal);
        let src = RowSource {
            params: &p,
            seed: self.seed,
            channels: self.channels,
            signal: &signal,
        };
        let mut y = vec![0.0; matrix_len(n)];
        let mut off = 0;
        for i in 0..n {
            let len = n - i - 1;
            src.matrix_row(i, &mut y[off..off + len]);
            off += len;
        }
        let t3 = (self.storage == TensorStorage::Packed).then(|| {
            let mut t3 = vec![0.0; tensor_len(n)];
            let mut off = 0;
            for i in 0..n {
                for j in i + 1..n {
                    let len = n - j - 1;
                    src.tensor_row(i, j, &mut t3[off..off + len]);
                    off += len;
                }
            }
            t3
        });
        let inst = Instance {
            params: p,
            seed: self.seed,
            channels: self.channels,
            signal,
            y,
            t3,
        };
        Ok(inst)
    }
}

/// Deterministic row generator shared by packed generation and on-demand regeneration.
struct RowSource<'a> {
    params: &'a ModelParams,
    seed: u64,
    channels: Channels,
    signal: &'a [f64],
}

impl RowSource<'_> {
    fn matrix_row(&self, i: usize, out: &mut [f64]) {
        let n = self.params.n;
        let sd = libm::sqrt(self.params.delta2);
        let spike = self.channels.spike;
        let noise = self.channels.noise && sd.is_finite();
        let mut r = rng::stream(self.seed, Stream::Matrix, i as u64, 0);
        let a = self.signal[i] / libm::sqrt(n as f64);
        for (off, v) in out.iter_mut().enumerate() {
            let j = i + 1 + off;
            let mut val = if spike { a * self.signal[j] } else { 0.0 };
            if noise {
                val += sd * rng::normal(&mut r);
            }
            *v = val;
        }
    }

    fn tensor_row(&self, i: usize, j: usize, out: &mut [f64]) {
        let n = self.params.n;
        let sd = libm::sqrt(self.params.delta3);
        let spike = self.channels.spike;
        let noise = self.channels.noise && sd.is_finite();
        let mut r = rng::stream(self.seed, Stream::Tensor, i as u64, j as u64);
        let a = core::f64::consts::SQRT_2 * self.signal[i] * self.signal[j] / n as f64;
        let tail = &self.signal[j + 1..];
        match (spike, noise) {
            (true, true) => {
                for (v, s) in out.iter_mut().zip(tail) {
                    *v = a * s + sd * rng::normal(&mut r);
                }
            }
            (true, false) => {
                for (v, s) in out.iter_mut().zip(tail) {
                    *v = a * s;
                }
            }
            (false, true) => {
                for v in out.iter_mut() {
                    *v = sd * rng::normal(&mut r);
                }
            }
            (false, false) => out.fill(0.0),
        }
    }

}

/// Draws an instance with both channels and packed storage.
pub fn generate_instance(params: ModelParams, seed: u64) -> Result<Instance> {
    Instance::builder(params, seed).build()
}

impl Instance {
    pub fn builder(params: ModelParams, seed: u64) -> InstanceBuilder {
        InstanceBuilder {
            params,
            seed,
            channels: Channels::FULL,
            storage: TensorStorage::Packed,
        }
    }

    /// Assembles an instance from explicit arrays (packed layouts as documented on the fields).
    pub fn from_parts(
        params: ModelParams,
        seed: u64,
        channels: Channels,
        signal: Vec<f64>,
        y: Vec<f64>,
        t3: Vec<f64>,
    ) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        Error::check_len(n, signal.len())?;
        Error::check_len(matrix_len(n), y.len())?;
        Error::check_len(tensor_len(n), t3.len())?;
        Ok(Instance {
            params,
            seed,
            channels,
            signal,
            y,
            t3: Some(t3),
        })
    }

    /// Regenerated-tensor instance described by its seed (used when importing compact dumps).
    pub fn implicit(params: ModelParams, seed: u64, channels: Channels) -> Result<Self> {
        Instance::builder(params, seed)
            .channels(channels)
            .storage(TensorStorage::Implicit)
            .build()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn matrix(&self) -> &[f64] {
        &self.y
    }

    /// Packed tensor, or `None` for regenerated storage.
    pub fn tensor(&self) -> Option<&[f64]> {
        self.t3.as_deref()
    }

    pub fn storage(&self) -> TensorStorage {
        if self.t3.is_some() {
            TensorStorage::Packed
        } else {
            TensorStorage::Implicit
        }
    }

    /// Same observations, with the tensor materialised in memory.
    pub fn to_packed(&self) -> Instance {
        let mut out = self.clone();
        if out.t3.is_none() {
            let mut t3 = Vec::with_capacity(tensor_len(self.n()));
            self.for_each_tensor_row(|_, _, row| t3.extend_from_slice(row));
            out.t3 = Some(t3);
        }
        out
    }

    /// Relabels coordinates so that new index `perm[i]` carries old index `i`.
    ///
    /// The result is packed. `H(x)` on `self` equals `H(Px)` on the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Instance> {
        let n = self.n();
        Error::check_len(n, perm.len())?;
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || core::mem::replace(&mut seen[p], true) {
                return Err(Error::domain("perm is not a permutation"));
            }
        }
        let mut signal = vec![0.0; n];
        for (i, &p) in perm.iter().enumerate() {
            signal[p] = self.signal[i];
        }
        let row_start = |i: usize| i * (2 * n - i - 1) / 2;
        let mut y = vec![0.0; matrix_len(n)];
        self.for_each_matrix_row(|i, row| {
            for (off, &v) in row.iter().enumerate() {
                let j = i + 1 + off;
                let (a, b) = sorted2(perm[i], perm[j]);
                y[row_start(a) + b - a - 1] = v;
            }
        });
        // Offset of T[a, b, b+1] in the lexicographic layout.
        let mut plane = vec![0usize; n + 1];
        for a in 0..n {
            let m = n - a - 1;
            plane[a + 1] = plane[a] + m * m.saturating_sub(1) / 2;
        }
        let t_index = |a: usize, b: usize, c: usize| {
            let m = n - a - 1;
            let r = b - a - 1;
            plane[a] + r * (2 * m - r - 1) / 2 + (c - b - 1)
        };
        let mut t3 = vec![0.0; tensor_len(n)];
        self.for_each_tensor_row(|i, j, row| {
            for (off, &v) in row.iter().enumerate() {
                let k = j + 1 + off;
                let mut idx = [perm[i], perm[j], perm[k]];
                idx.sort_unstable();
                t3[t_index(idx[0], idx[1], idx[2])] = v;
            }
        });
        Instance::from_parts(self.params, self.seed, self.channels, signal, y, t3)
    }

    fn source(&self) -> RowSource<'_> {
        RowSource {
            params: &self.params,
            seed: self.seed,
            channels: self.channels,
            signal: &self.signal,
        }
    }

    /// Visits `(i, j, T[i, j, j+1..])` in lexicographic order.
    pub fn for_each_tensor_row(&self, mut f: impl FnMut(usize, usize, &[f64])) {
        let n = self.params.n;
        match &self.t3 {
            Some(t3) => {
                let mut off = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        let len = n - j - 1;
                        f(i, j, &t3[off..off + len]);
                        off += len;
                    }
                }
            }
            None => {
                let src = self.source();
                let mut buf = vec![0.0; n];
                for i in 0..n {
                    for j in i + 1..n {
                        let len = n - j - 1;
                        src.tensor_row(i, j, &mut buf[..len]);
                        f(i, j, &buf[..len]);
                    }
                }
            }
        }
    }

    /// Visits `(i, Y[i, i+1..])`.
    pub fn for_each_matrix_row(&self, mut f: impl FnMut(usize, &[f64])) {
        let n = self.params.n;
        let mut off = 0;
        for i in 0..n {
            let len = n - i - 1;
            f(i, &self.y[off..off + len]);
            off += len;
        }
    }

    fn matrix_prefactor(&self) -> f64 {
        1.0 / (self.params.delta2 * libm::sqrt(self.params.n as f64))
    }

    fn tensor_prefactor(&self) -> f64 {
        core::f64::consts::SQRT_2 / (self.params.delta3 * self.params.n as f64)
    }

    /// Direct summation of both energy terms.
    pub fn energy_terms(&self, x: &[f64]) -> Result<EnergyTerms> {
        Error::check_len(self.n(), x.len())?;
        let mut terms = EnergyTerms::default();
        let c2 = self.matrix_prefactor();
        if c2 != 0.0 {
            let mut s = 0.0;
            self.for_each_matrix_row(|i, row| s += x[i] * dot(row, &x[i + 1..]));
            terms.matrix = -c2 * s;
        }
        let c3 = self.tensor_prefactor();
        if c3 != 0.0 {
            let mut s = 0.0;
            self.for_each_tensor_row(|i, j, row| s += x[i] * x[j] * dot(row, &x[j + 1..]));
            terms.tensor = -c3 * s;
        }
        Ok(terms)
    }

    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.energy_terms(x)?.total())
    }

    /// Writes the matrix and tensor parts of `dH/dx` into `g2` and `g3`.
    pub fn gradient_parts_into(&self, x: &[f64], g2: &mut [f64], g3: &mut [f64]) -> Result<()> {
        let n = self.n();
        Error::check_len(n, x.len())?;
        Error::check_len(n, g2.len())?;
        Error::check_len(n, g3.len())?;
        g2.fill(0.0);
        g3.fill(0.0);
        let c2 = self.matrix_prefactor();
        if c2 != 0.0 {
            self.for_each_matrix_row(|i, row| {
                let tail = &x[i + 1..];
                g2[i] += dot(row, tail);
                let xi = x[i];
                for (g, y) in g2[i + 1..].iter_mut().zip(row) {
                    *g += y * xi;
                }
            });
            for g in g2.iter_mut() {
                *g *= -c2;
            }
        }
        let c3 = self.tensor_prefactor();
        if c3 != 0.0 {
            self.for_each_tensor_row(|i, j, row| {
                let tail = &x[j + 1..];
                let s = dot(row, tail);
                g3[i] += s * x[j];
                g3[j] += s * x[i];
                let xij = x[i] * x[j];
                for (g, t) in g3[j + 1..].iter_mut().zip(row) {
                    *g += t * xij;
                }
            });
            for g in g3.iter_mut() {
                *g *= -c3;
            }
        }
        Ok(())
    }

    /// `dH/dx_i` for every `i`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let mut g2 = vec![0.0; n];
        let mut g3 = vec![0.0; n];
        self.gradient_parts_into(x, &mut g2, &mut g3)?;
        for (a, b) in g2.iter_mut().zip(&g3) {
            *a += b;
        }
        Ok(g2)
    }

    pub fn overlap(&self, x: &[f64]) -> Result<f64> {
        overlap(x, &self.signal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(n, 0.7, 1.5, 1.0).unwrap()
    }

    /// Full symmetric arrays; sums over all ordered index tuples divided by the symmetry factor.
    fn full_sum_energy(inst: &Instance, x: &[f64]) -> f64 {
        let n = inst.n();
        let mut ym = vec![0.0; n * n];
        inst.for_each_matrix_row(|i, row| {
            for (o, &v) in row.iter().enumerate() {
                let j = i + 1 + o;
                ym[i * n + j] = v;
                ym[j * n + i] = v;
            }
        });
        let mut tm = vec![0.0; n * n * n];
        inst.for_each_tensor_row(|i, j, row| {
            for (o, &v) in row.iter().enumerate() {
                let k = j + 1 + o;
                for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                    tm[(a * n + b) * n + c] = v;
                }
            }
        });
        let p = inst.params();
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                s2 += ym[a * n + b] * x[a] * x[b];
                for c in 0..n {
                    if c != a && c != b {
                        s3 += tm[(a * n + b) * n + c] * x[a] * x[b] * x[c];
                    }
                }
            }
        }
        let nf = n as f64;
        -s2 / 2.0 / (p.delta2 * nf.sqrt()) - core::f64::consts::SQRT_2 * s3 / 6.0 / (p.delta3 * nf)
    }

    #[test]
    fn zero_variance_is_rejected() {
        let p = ModelParams {
            n: 16,
            delta2: 0.0,
            delta3: 1.0,
            beta: 1.0,
        };
        assert!(generate_instance(p, 1).is_err());
    }

    #[test]
    fn generation_is_bit_exact() {
        let p = ModelParams::new(64, 0.7, 1.5, 1.0).unwrap();
        let a = generate_instance(p, 1).unwrap();
        let b = generate_instance(p, 1).unwrap();
        assert_eq!(a, b);
        let c = generate_instance(p, 2).unwrap();
        assert_ne!(a.matrix()[0].to_bits(), c.matrix()[0].to_bits());
    }

    #[test]
    fn signal_on_sphere() {
        let inst = generate_instance(params(50), 3).unwrap();
        let r = norm_sq(inst.signal()) / 50.0;
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn implicit_rows_equal_packed_rows() {
        let p = params(20);
        let packed = generate_instance(p, 9).unwrap();
        let implicit = Instance::implicit(p, 9, Channels::FULL).unwrap();
        assert_eq!(implicit.to_packed(), packed);
        let x = Configuration::random(20, 4);
        assert_eq!(
            packed.hamiltonian(&x).unwrap().to_bits(),
            implicit.hamiltonian(&x).unwrap().to_bits()
        );
        assert_eq!(packed.gradient(&x).unwrap(), implicit.gradient(&x).unwrap());
    }

    #[test]
    fn empty_observations_give_zero_energy_and_gradient() {
        let inst = Instance::builder(params(12), 1)
            .channels(Channels::EMPTY)
            .build()
            .unwrap();
        let x = Configuration::random(12, 2);
        assert_eq!(inst.hamiltonian(&x).unwrap(), 0.0);
        assert!(inst.gradient(&x).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn triangle_sum_matches_full_sum() {
        for seed in 0..3 {
            let inst = generate_instance(params(14), seed).unwrap();
            let x = Configuration::random(14, 100 + seed);
            let h = inst.hamiltonian(&x).unwrap();
            let oracle = full_sum_energy(&inst, &x);
            assert!(((h - oracle) / oracle).abs() < 1e-9, "{h} vs {oracle}");
        }
    }

    #[test]
    fn noiseless_energy_at_signal() {
        let n = 128;
        let p = ModelParams::new(n, 0.7, 1.5, 1.0).unwrap();
        let inst = Instance::builder(p, 5)
            .channels(Channels::NOISELESS)
            .build()
            .unwrap();
        let h = inst.hamiltonian(inst.signal()).unwrap();
        let expected = -1.0 / (2.0 * p.delta2) - 1.0 / (3.0 * p.delta3);
        assert!((h / n as f64 - expected).abs() <= 5.0 / n as f64);
    }

    #[test]
    fn spike_energy_matches_elementary_symmetric_polynomials() {
        // a_i = x*_i x_i; sum_{i<j} a_i a_j = e2, sum_{i<j<k} a_i a_j a_k = e3 via power sums.
        let n = 40;
        let p = params(n);
        let inst = Instance::builder(p, 8)
            .channels(Channels::NOISELESS)
            .build()
            .unwrap();
        let x = Configuration::random(n, 1);
        let a: Vec<f64> = x.iter().zip(inst.signal()).map(|(u, v)| u * v).collect();
        let p1: f64 = a.iter().sum();
        let p2: f64 = a.iter().map(|v| v * v).sum();
        let p3: f64 = a.iter().map(|v| v * v * v).sum();
        let e2 = (p1 * p1 - p2) / 2.0;
        let e3 = (p1 * p1 * p1 - 3.0 * p1 * p2 + 2.0 * p3) / 6.0;
        let nf = n as f64;
        let expected = EnergyTerms {
            matrix: -e2 / (p.delta2 * nf),
            tensor: -2.0 * e3 / (p.delta3 * nf * nf),
        };
        let got = inst.energy_terms(&x).unwrap();
        assert!(((got.matrix - expected.matrix) / expected.matrix).abs() < 1e-9);
        assert!(((got.tensor - expected.tensor) / expected.tensor).abs() < 1e-9);
    }

    #[test]
    fn energy_splits_into_noise_and_spike() {
        let p = params(24);
        let full = generate_instance(p, 6).unwrap();
        let spike = Instance::builder(p, 6).channels(Channels::NOISELESS).build().unwrap();
        let noise = Instance::builder(p, 6).channels(Channels::NOISE_ONLY).build().unwrap();
        let x = Configuration::random(24, 7);
        let h = full.hamiltonian(&x).unwrap();
        let sum = spike.hamiltonian(&x).unwrap() + noise.hamiltonian(&x).unwrap();
        assert!(((h - sum) / h).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let n = 32;
        let inst = generate_instance(params(n), 11).unwrap();
        let x = Configuration::random(n, 12).into_inner();
        let g = inst.gradient(&x).unwrap();
        let eps = 1e-5;
        let mut xp = x.clone();
        for i in 0..n {
            xp[i] = x[i] + eps;
            let hp = inst.hamiltonian(&xp).unwrap();
            xp[i] = x[i] - eps;
            let hm = inst.hamiltonian(&xp).unwrap();
            xp[i] = x[i];
            let fd = (hp - hm) / (2.0 * eps);
            assert!((g[i] - fd).abs() <= 1e-5, "i={i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn euler_homogeneity() {
        let n = 30;
        let inst = generate_instance(params(n), 13).unwrap();
        let x = Configuration::random(n, 14);
        let g = inst.gradient(&x).unwrap();
        let terms = inst.energy_terms(&x).unwrap();
        let lhs = dot(&x, &g);
        let rhs = 2.0 * terms.matrix + 3.0 * terms.tensor;
        assert!(((lhs - rhs) / rhs).abs() < 1e-9);
    }

    #[test]
    fn overlap_cases() {
        let inst = generate_instance(params(10), 1).unwrap();
        let s = inst.signal().to_vec();
        assert!((inst.overlap(&s).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((inst.overlap(&neg).unwrap() + 1.0).abs() < 1e-12);
        // Gram-Schmidt a random vector against the signal.
        let mut r = Configuration::random(10, 2).into_inner();
        let c = dot(&r, &s) / dot(&s, &s);
        for (v, w) in r.iter_mut().zip(&s) {
            *v -= c * w;
        }
        project_to_sphere(&mut r);
        assert!(inst.overlap(&r).unwrap().abs() < 1e-12);
        assert!(inst.overlap(&s[..5]).is_err());
    }

    #[test]
    fn configuration_checks_constraint() {
        assert!(Configuration::new(vec![1.0, 1.0, 1.0]).is_ok());
        assert!(Configuration::new(vec![1.0, 1.0, 1.1]).is_err());
        let c = Configuration::projected(vec![3.0, 4.0, 0.0]);
        assert!((norm_sq(&c) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let inst = generate_instance(params(8), 1).unwrap();
        assert!(matches!(
            inst.hamiltonian(&[1.0; 7]),
            Err(Error::Shape { expected: 8, actual: 7 })
        ));
        assert!(inst.gradient(&[1.0; 9]).is_err());
    }
}
