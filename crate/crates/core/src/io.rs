//! Trajectory, result and manifest files.
//!
//! Binary trajectories use the `HBTR` layout: magic, `u32` version,
//! `u64` model hash, `u32` column count, `u64` row count, then row-major
//! little-endian `f64` values. Columns are `tau, x…, p…, energy`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ehrenfest::FrictionEstimate;
use crate::harness::{EnsembleResult, SeedLedger};
use crate::zwanzig::{TrajectoryMeta, TrajectoryRecord};
use crate::{Error, ExperimentConfig, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"HBTR";
pub const BINARY_VERSION: u32 = 1;

/// First eight bytes of the SHA-256 of `bytes`, little-endian.
pub fn model_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn trajectory_header(dof: usize) -> Vec<String> {
    let mut cols = vec!["tau".to_string()];
    cols.extend((0..dof).map(|k| format!("x{k}")));
    cols.extend((0..dof).map(|k| format!("p{k}")));
    cols.push("energy".into());
    cols
}

fn rows(record: &TrajectoryRecord) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..record.times.len()).map(|i| {
        let mut row = vec![record.times[i]];
        row.extend(record.x[i].iter());
        row.extend(record.p[i].iter());
        row.push(record.energy[i]);
        row
    })
}

fn dof_of(record: &TrajectoryRecord) -> usize {
    record.x.first().map_or(0, |x| x.len())
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_trajectory_csv(out: &mut impl Write, record: &TrajectoryRecord) -> Result<()> {
    writeln!(out, "{}", trajectory_header(dof_of(record)).join(","))?;
    for row in rows(record) {
        writeln!(out, "{}", join(row))?;
    }
    Ok(())
}

pub fn write_trajectory_binary(out: &mut impl Write, record: &TrajectoryRecord) -> Result<()> {
    let dof = dof_of(record);
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&record.meta.model_hash.unwrap_or(0).to_le_bytes())?;
    out.write_all(&((2 * dof + 2) as u32).to_le_bytes())?;
    out.write_all(&(record.times.len() as u64).to_le_bytes())?;
    for row in rows(record) {
        for v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

/// Reads an `HBTR` stream back into a record (without waves).
pub fn read_trajectory_binary(input: &mut impl Read) -> Result<TrajectoryRecord> {
    if &read_array::<4>(input)? != BINARY_MAGIC {
        return Err(Error::InternalConsistency("not an HBTR trajectory".into()));
    }
    let version = u32::from_le_bytes(read_array(input)?);
    if version != BINARY_VERSION {
        return Err(Error::InternalConsistency(format!("unsupported HBTR version {version}")));
    }
    let hash = u64::from_le_bytes(read_array(input)?);
    let cols = u32::from_le_bytes(read_array(input)?) as usize;
    let n = u64::from_le_bytes(read_array(input)?) as usize;
    if cols < 2 || cols % 2 != 0 {
        return Err(Error::InternalConsistency(format!("bad HBTR column count {cols}")));
    }
    let dof = (cols - 2) / 2;
    let mut record = TrajectoryRecord {
        meta: TrajectoryMeta {
            model_hash: Some(hash),
            ..Default::default()
        },
        ..Default::default()
    };
    let mut row = vec![0.0; cols];
    for _ in 0..n {
        for v in row.iter_mut() {
            *v = f64::from_le_bytes(read_array(input)?);
        }
        record.times.push(row[0]);
        record.x.push(DVector::from_column_slice(&row[1..1 + dof]));
        record.p.push(DVector::from_column_slice(&row[1 + dof..1 + 2 * dof]));
        record.energy.push(row[cols - 1]);
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(Error::InternalConsistency("trailing bytes after HBTR rows".into()));
    }
    Ok(record)
}

fn flat(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

/// One row per position: both friction estimators, the projected matrix
/// and the spectral bandwidth.
pub fn write_friction_csv(out: &mut impl Write, rows: &[(DVector<f64>, FrictionEstimate)]) -> Result<()> {
    let Some((x0, e0)) = rows.first() else {
        return Ok(());
    };
    let d = e0.k.nrows();
    let mut header: Vec<String> = (0..x0.len()).map(|k| format!("x{k}")).collect();
    for name in ["k_time", "k_spec", "k"] {
        for i in 0..d {
            for j in 0..d {
                header.push(format!("{name}_{i}{j}"));
            }
        }
    }
    header.extend(["bandwidth".into(), "clamped_fraction".into()]);
    writeln!(out, "{}", header.join(","))?;
    for (x, e) in rows {
        let values = x
            .iter()
            .copied()
            .chain(flat(&e.k_time))
            .chain(flat(&e.k_spec))
            .chain(flat(&e.k))
            .chain([e.bandwidth, e.clamped_fraction]);
        writeln!(out, "{}", join(values))?;
    }
    Ok(())
}

/// Mean and standard error of every observable at every recorded time.
pub fn write_series_csv(out: &mut impl Write, result: &EnsembleResult) -> Result<()> {
    writeln!(out, "observable,tau,mean,stderr,samples")?;
    for o in &result.observables {
        for s in &o.series {
            writeln!(out, "{},{},{},{},{}", o.name, s.tau, s.mean, s.stderr, s.stats.count)?;
        }
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Provenance of one output directory. `created` is the only field that
/// changes between identical reruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub code_version: String,
    pub command: String,
    pub seed_ledger: Option<SeedLedger>,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, command: &str, seed_ledger: Option<SeedLedger>, files: Vec<String>) -> Self {
        Self {
            config_sha256: config.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed_ledger,
            files,
            config: config.clone(),
            created: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}
