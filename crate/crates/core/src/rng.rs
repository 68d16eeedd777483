//! Seeded random streams.
//!
//! Every random quantity is drawn from a Xoshiro256++ generator whose seed is
//! derived from `(seed, tag, a, b)` with the SplitMix64 finaliser. Instances
//! use one stream per row, which keeps a tensor row reproducible in isolation:
//!
//! | quantity                 | tag              | a   | b   |
//! |--------------------------|------------------|-----|-----|
//! | signal `x*`              | [`Stream::Signal`] | 0 | 0   |
//! | matrix row `Y[i, i+1..]` | [`Stream::Matrix`] | `i` | 0 |
//! | tensor row `T[i, j, j+1..]` | [`Stream::Tensor`] | `i` | `j` |
//! | initial configuration    | [`Stream::Init`]   | 0 | 0   |
//! | thermal noise            | [`Stream::Thermal`] | 0 | 0  |
//!
//! Within a row, entries are drawn in increasing column order with the
//! ziggurat standard normal sampler of `rand_distr`.

use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Signal = 1,
    Matrix = 2,
    Tensor = 3,
    Init = 4,
    Thermal = 5,
    Amp = 6,
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for stream `(seed, tag, a, b)`.
pub fn stream(seed: u64, tag: Stream, a: u64, b: u64) -> StreamRng {
    let mut s = splitmix(seed);
    s = splitmix(s ^ tag as u64);
    s = splitmix(s ^ a);
    s = splitmix(s ^ b.rotate_left(32));
    Xoshiro256PlusPlus::seed_from_u64(s)
}

#[inline]
pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Fills `out` with i.i.d. standard normals.
pub fn fill_normal(rng: &mut StreamRng, out: &mut [f64]) {
    for v in out {
        *v = normal(rng);
    }
}

/// Uniform point on the sphere of radius `sqrt(n)`.
pub fn sphere_point(rng: &mut StreamRng, out: &mut [f64]) {
    fill_normal(rng, out);
    crate::model::project_to_sphere(out);
}
