//! On-disk formats. Column schemas and the instance layout are described in `FORMAT.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spiked_core::amp::{AmpTrajectory, PhasePoint};
use spiked_core::dmft::TwoTimeGrid;
use spiked_core::dynamics::Trajectory;
use spiked_core::model::{matrix_len, tensor_len, Channels, Instance, TensorStorage};
use spiked_core::theory::ThresholdLine;
use spiked_core::ModelParams;

pub const INSTANCE_MAGIC: &[u8; 8] = b"SPKINST\0";
pub const INSTANCE_VERSION: u32 = 1;

const FLAG_SPIKE: u32 = 1;
const FLAG_NOISE: u32 = 1 << 1;
const FLAG_PAYLOAD: u32 = 1 << 2;

/// Fixed-size header of an instance dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceHeader {
    pub version: u32,
    pub params: ModelParams,
    pub seed: u64,
    pub channels: Channels,
    /// Signal and observations follow the header.
    pub payload: bool,
}

impl InstanceHeader {
    fn flags(&self) -> u32 {
        let mut f = 0;
        if self.channels.spike {
            f |= FLAG_SPIKE;
        }
        if self.channels.noise {
            f |= FLAG_NOISE;
        }
        if self.payload {
            f |= FLAG_PAYLOAD;
        }
        f
    }
}

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn get_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Writes an instance. Regenerated-tensor instances are stored as the header only,
/// since their observations follow from the seed.
pub fn write_instance(w: &mut impl Write, inst: &Instance) -> Result<()> {
    let header = InstanceHeader {
        version: INSTANCE_VERSION,
        params: *inst.params(),
        seed: inst.seed(),
        channels: inst.channels(),
        payload: inst.storage() == TensorStorage::Packed,
    };
    w.write_all(INSTANCE_MAGIC)?;
    w.write_all(&header.version.to_le_bytes())?;
    w.write_all(&header.flags().to_le_bytes())?;
    w.write_all(&(header.params.n as u64).to_le_bytes())?;
    put_f64s(w, &[header.params.delta2, header.params.delta3, header.params.beta])?;
    w.write_all(&header.seed.to_le_bytes())?;
    if header.payload {
        put_f64s(w, inst.signal())?;
        put_f64s(w, inst.matrix())?;
        put_f64s(w, inst.tensor().expect("packed instance has a tensor"))?;
    }
    Ok(())
}

pub fn read_header(r: &mut impl Read) -> Result<InstanceHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).context("reading magic")?;
    if &magic != INSTANCE_MAGIC {
        bail!("not an instance dump (bad magic)");
    }
    let version = get_u32(r)?;
    if version != INSTANCE_VERSION {
        bail!("unsupported instance format version {version}");
    }
    let flags = get_u32(r)?;
    let n = get_u64(r)? as usize;
    let v = get_f64s(r, 3)?;
    let seed = get_u64(r)?;
    Ok(InstanceHeader {
        version,
        params: ModelParams::new(n, v[0], v[1], v[2])?,
        seed,
        channels: Channels {
            spike: flags & FLAG_SPIKE != 0,
            noise: flags & FLAG_NOISE != 0,
        },
        payload: flags & FLAG_PAYLOAD != 0,
    })
}

pub fn read_instance(r: &mut impl Read) -> Result<Instance> {
    let h = read_header(r)?;
    if !h.payload {
        return Ok(Instance::implicit(h.params, h.seed, h.channels)?);
    }
    let n = h.params.n;
    let signal = get_f64s(r, n).context("reading signal")?;
    let y = get_f64s(r, matrix_len(n)).context("reading matrix")?;
    let t3 = get_f64s(r, tensor_len(n)).context("reading tensor")?;
    Ok(Instance::from_parts(h.params, h.seed, h.channels, signal, y, t3)?)
}

pub fn save_instance(path: &Path, inst: &Instance) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_instance(&mut w, inst)?;
    w.flush()?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    read_instance(&mut r)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    m: f64,
    energy_per_spin: f64,
    mu: f64,
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    for i in 0..traj.len() {
        w.serialize(TrajectoryRow {
            t: traj.times[i],
            m: traj.m[i],
            energy_per_spin: traj.energy_per_spin[i],
            mu: traj.mu[i],
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LongTrajectoryRow {
    delta3: f64,
    seed: String,
    t: f64,
    m: f64,
    energy_per_spin: f64,
    mu: f64,
}

/// Joined long format: one block per `(delta3, seed)`; `seed = "mean"` marks ensemble means.
pub fn write_long_trajectories<'a>(
    path: &Path,
    blocks: impl IntoIterator<Item = (f64, String, &'a Trajectory)>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (delta3, seed, traj) in blocks {
        for i in 0..traj.len() {
            w.serialize(LongTrajectoryRow {
                delta3,
                seed: seed.clone(),
                t: traj.times[i],
                m: traj.m[i],
                energy_per_spin: traj.energy_per_spin[i],
                mu: traj.mu[i],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `iter,m,residual`; the residual of iteration 0 is empty.
pub fn write_amp(path: &Path, m: &[f64], residual: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iter", "m", "residual"])?;
    for (i, (m, r)) in m.iter().zip(residual).enumerate() {
        let r = if r.is_nan() { String::new() } else { r.to_string() };
        w.write_record([i.to_string(), m.to_string(), r])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_amp_trajectory(path: &Path, traj: &AmpTrajectory) -> Result<()> {
    write_amp(path, &traj.m, &traj.residual)
}

#[derive(Serialize)]
struct LongAmpRow {
    delta3: f64,
    seed: String,
    iter: usize,
    m: f64,
    residual: Option<f64>,
}

pub fn write_long_amp<'a>(
    path: &Path,
    blocks: impl IntoIterator<Item = (f64, String, &'a [f64], &'a [f64])>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (delta3, seed, m, res) in blocks {
        for (iter, (&m, &r)) in m.iter().zip(res).enumerate() {
            w.serialize(LongAmpRow {
                delta3,
                seed: seed.clone(),
                iter,
                m,
                residual: (!r.is_nan()).then_some(r),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PhaseRow<'a> {
    delta2: f64,
    delta3: f64,
    phase: &'a str,
}

pub fn write_phase(path: &Path, points: &[PhasePoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for p in points {
        w.serialize(PhaseRow {
            delta2: p.delta2,
            delta3: p.delta3,
            phase: p.phase.as_str(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `beta` is written as `inf` for gradient flow.
pub fn fmt_beta(beta: f64) -> String {
    if beta.is_infinite() {
        "inf".into()
    } else {
        beta.to_string()
    }
}

pub fn write_theory_lines(path: &Path, lines: &[ThresholdLine]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["delta2", "delta3_c", "beta"])?;
    for line in lines {
        for &(d2, d3) in &line.samples {
            w.write_record([d2.to_string(), d3.to_string(), fmt_beta(line.beta)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,m,mu` for every grid time.
pub fn write_dmft_series(path: &Path, g: &TwoTimeGrid) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "m", "mu"])?;
    for i in 0..g.len() {
        w.write_record([g.time(i).to_string(), g.m()[i].to_string(), g.mu()[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,tw,C,R` for `t >= tw` at each waiting time, snapped to the grid.
pub fn write_dmft_slices(path: &Path, g: &TwoTimeGrid, waiting: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "tw", "C", "R"])?;
    for &tw in waiting {
        let j = (tw / g.h()).round() as usize;
        if j >= g.len() {
            bail!("waiting time {tw} beyond the integrated horizon {}", g.time(g.len() - 1));
        }
        for i in j..g.len() {
            w.write_record([
                g.time(i).to_string(),
                g.time(j).to_string(),
                g.c(i, j).to_string(),
                g.r(i, j).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct PackRow {
    /// `phase`, `line`, `dmft_mark` or `finite_n_mark`.
    pub kind: &'static str,
    pub delta2: f64,
    pub delta3: f64,
    /// Empty for phase rows.
    pub beta: String,
    /// Phase label for phase rows, empty otherwise.
    pub phase: String,
}

pub fn write_pack(path: &Path, rows: &[PackRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
