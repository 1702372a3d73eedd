//! Dataset generation and on-disk snapshot storage.
//!
//! A dataset directory holds one CSV per parameter instance (first column
//! time, one column per state entry thereafter), an initial-state file, and
//! a manifest tying instances to their parameter values. Floats are written
//! in shortest round-trip form, so loading reproduces the solver output bit
//! for bit.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lando::SnapshotSet;
use crate::scalar::{real, to_f64, Scalar};
use crate::systems::sampling::lhs_sample;
use crate::systems::{allen_cahn, heat, lotka_volterra};

use super::config::{Benchmark, ExperimentConfig};

/// Which split of the dataset a file belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Valid,
    Test,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Valid => "valid",
            Role::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub mu: Vec<f64>,
    pub file: String,
}

/// Index of a dataset directory: the config that produced it plus the
/// per-role instance lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataManifest {
    pub config: ExperimentConfig,
    /// "continuous" or "discrete"; decides how snapshots are interpreted.
    pub mode: String,
    pub state_dim: usize,
    pub x0_file: String,
    pub train: Vec<InstanceEntry>,
    pub valid: Vec<InstanceEntry>,
    pub test: Vec<InstanceEntry>,
}

impl DataManifest {
    pub fn entries(&self, role: Role) -> &[InstanceEntry] {
        match role {
            Role::Train => &self.train,
            Role::Valid => &self.valid,
            Role::Test => &self.test,
        }
    }
}

const MANIFEST_FILE: &str = "manifest.json";
const X0_FILE: &str = "x0.csv";

fn instance_file(role: Role, index: usize) -> String {
    format!("{}_{index:04}.csv", role.as_str())
}

/// Solves one benchmark instance on a time grid. Predator–prey snapshots
/// carry finite-difference derivative targets (the measurement-only path);
/// the PDE benchmarks use their discrete flow maps directly.
pub fn solve_instance(
    benchmark: Benchmark,
    cfg: &ExperimentConfig,
    mu: &DVector<f64>,
    x0: &DVector<f64>,
    grid: &[f64],
) -> Result<SnapshotSet<f64>> {
    match benchmark {
        Benchmark::LotkaVolterra => {
            let p = lotka_volterra::LotkaVolterraParams::new(mu[0], 0.002);
            lotka_volterra::solve_fd(&p, x0, grid)
        }
        Benchmark::LotkaVolterra2 => {
            let p = lotka_volterra::LotkaVolterraParams::new(mu[0], mu[1]);
            lotka_volterra::solve_fd(&p, x0, grid)
        }
        Benchmark::Heat => {
            let mut p = heat::HeatParams::new(mu[0]);
            p.nx = cfg.nx.expect("validated config has nx");
            p.ny = cfg.ny.expect("validated config has ny");
            if let Some(dt) = cfg.solver_dt {
                p.dt = dt;
            }
            heat::solve_with_ic(&p, x0, grid)
        }
        Benchmark::AllenCahn => {
            let mut p = allen_cahn::AllenCahnParams::new(mu[0], mu[1]);
            p.nx = cfg.nx.expect("validated config has nx");
            if let Some(dt) = cfg.solver_dt {
                p.dt = dt;
            }
            allen_cahn::solve_with_ic(&p, x0, grid)
        }
    }
}

/// The full initial state for a config: the explicit x0 when given,
/// otherwise the system's standard initial condition.
pub fn initial_state(benchmark: Benchmark, cfg: &ExperimentConfig) -> Result<DVector<f64>> {
    let expected = match benchmark {
        Benchmark::LotkaVolterra | Benchmark::LotkaVolterra2 => 2,
        Benchmark::Heat => {
            let (nx, ny) = (cfg.nx.unwrap_or(0), cfg.ny.unwrap_or(0));
            nx * ny
        }
        Benchmark::AllenCahn => cfg.nx.unwrap_or(0).saturating_sub(2),
    };
    match &cfg.x0 {
        Some(values) => {
            if values.len() != expected {
                return Err(Error::DimensionMismatch {
                    context: "configured initial state",
                    expected,
                    got: values.len(),
                });
            }
            Ok(DVector::from_column_slice(values))
        }
        None => match benchmark {
            Benchmark::LotkaVolterra | Benchmark::LotkaVolterra2 => Err(Error::Config(
                "predator–prey configs need an explicit x0".into(),
            )),
            Benchmark::Heat => {
                let mut p = heat::HeatParams::new(1.0);
                p.nx = cfg.nx.expect("validated config has nx");
                p.ny = cfg.ny.expect("validated config has ny");
                Ok(heat::default_initial_condition(&p))
            }
            Benchmark::AllenCahn => {
                let mut p = allen_cahn::AllenCahnParams::new(1e-4, 1.0);
                p.nx = cfg.nx.expect("validated config has nx");
                Ok(allen_cahn::default_initial_condition(&p))
            }
        },
    }
}

/// Samples the parameter design, solves every instance, and writes the
/// dataset directory: per-instance CSVs, the initial state, and the
/// manifest. Training and validation instances are solved on the training
/// grid, test instances on the (typically longer) test grid.
pub fn generate_dataset(cfg: &ExperimentConfig, out_dir: &Path) -> Result<DataManifest> {
    cfg.validate()?;
    let benchmark = cfg.benchmark()?;
    fs::create_dir_all(out_dir)?;
    let samples = lhs_sample::<f64>(&cfg.design())?;
    let x0 = initial_state(benchmark, cfg)?;
    let train_grid: Vec<f64> = cfg.train_grid()?;
    let test_grid: Vec<f64> = cfg.test_grid()?;

    let mode = match benchmark {
        Benchmark::LotkaVolterra | Benchmark::LotkaVolterra2 => "continuous",
        Benchmark::Heat | Benchmark::AllenCahn => "discrete",
    };

    write_vector_csv(&out_dir.join(X0_FILE), &x0)?;

    let mut manifest = DataManifest {
        config: cfg.clone(),
        mode: mode.into(),
        state_dim: x0.nrows(),
        x0_file: X0_FILE.into(),
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };

    for (role, mus) in [
        (Role::Train, &samples.train),
        (Role::Valid, &samples.valid),
        (Role::Test, &samples.test),
    ] {
        let grid = match role {
            Role::Test => &test_grid,
            _ => &train_grid,
        };
        let solved: Vec<SnapshotSet<f64>> = mus
            .par_iter()
            .enumerate()
            .map(|(i, mu)| {
                solve_instance(benchmark, cfg, mu, &x0, grid)
                    .map_err(|e| instance_error_f64(i, mu, e))
            })
            .collect::<Result<Vec<_>>>()?;
        let entries = match role {
            Role::Train => &mut manifest.train,
            Role::Valid => &mut manifest.valid,
            Role::Test => &mut manifest.test,
        };
        for (i, (mu, snaps)) in mus.iter().zip(&solved).enumerate() {
            let file = instance_file(role, i);
            write_snapshot_csv(&out_dir.join(&file), snaps.times(), snaps.states())?;
            entries.push(InstanceEntry {
                mu: mu.iter().copied().collect(),
                file,
            });
        }
    }

    fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DataManifest> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: DataManifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
    Ok(manifest)
}

/// Loads one split as (µ, snapshots) pairs, rebuilding snapshot sets in the
/// mode the manifest records.
pub fn load_dataset<T: Scalar>(
    dir: &Path,
    role: Role,
) -> Result<Vec<(DVector<T>, SnapshotSet<T>)>> {
    let manifest = load_manifest(dir)?;
    manifest
        .entries(role)
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let (times, states) = read_snapshot_csv(&dir.join(&entry.file))?;
            let set = snapshot_set_from_parts(&manifest, times, states)
                .map_err(|e| Error::for_instance(i, &entry.mu, e))?;
            let mu = DVector::from_iterator(entry.mu.len(), entry.mu.iter().map(|&v| real(v)));
            Ok((mu, set))
        })
        .collect()
}

fn snapshot_set_from_parts<T: Scalar>(
    manifest: &DataManifest,
    times: Vec<f64>,
    states: DMatrix<f64>,
) -> Result<SnapshotSet<T>> {
    if states.nrows() != manifest.state_dim {
        return Err(Error::DimensionMismatch {
            context: "stored state dimension",
            expected: manifest.state_dim,
            got: states.nrows(),
        });
    }
    let x = states.map(|v| real::<T>(v));
    let t: Vec<T> = times.iter().map(|&v| real(v)).collect();
    match manifest.mode.as_str() {
        "continuous" => SnapshotSet::continuous_fd(x, t),
        "discrete" => SnapshotSet::discrete(x, t),
        other => Err(Error::DataFormat(format!(
            "unknown dynamics mode '{other}' in manifest"
        ))),
    }
}

pub fn load_x0<T: Scalar>(dir: &Path) -> Result<DVector<T>> {
    let manifest = load_manifest(dir)?;
    let values = read_vector_csv(&dir.join(&manifest.x0_file))?;
    Ok(DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| real(v)),
    ))
}

/// Reference states of every test instance at each requested time, read in
/// one pass per file. `states[k]` belongs to `t_stars[k]`; a requested time
/// more than 1e-6 (relative) off the stored grid is an error.
pub struct ReferenceSet<T: Scalar> {
    pub mu: DVector<T>,
    pub states: Vec<DVector<T>>,
}

pub fn load_references<T: Scalar>(dir: &Path, t_stars: &[T]) -> Result<Vec<ReferenceSet<T>>> {
    if t_stars.is_empty() {
        return Err(Error::Empty("reference time list"));
    }
    let manifest = load_manifest(dir)?;
    manifest
        .test
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let (times, states) = read_snapshot_csv(&dir.join(&entry.file))?;
            let columns = t_stars
                .iter()
                .map(|&t| {
                    let j = reference_column(&times, to_f64(t))
                        .map_err(|e| Error::for_instance(i, &entry.mu, e))?;
                    Ok(DVector::from_iterator(
                        states.nrows(),
                        states.column(j).iter().map(|&v| real(v)),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let mu = DVector::from_iterator(entry.mu.len(), entry.mu.iter().map(|&v| real(v)));
            Ok(ReferenceSet {
                mu,
                states: columns,
            })
        })
        .collect()
}

fn reference_column(times: &[f64], t_star: f64) -> Result<usize> {
    let (best, dist) = times
        .iter()
        .enumerate()
        .map(|(j, &t)| (j, (t - t_star).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::Empty("snapshot times"))?;
    if dist > 1e-6 * t_star.abs().max(1.0) {
        return Err(Error::DataFormat(format!(
            "no stored snapshot at t = {t_star}; closest instant is {}",
            times[best]
        )));
    }
    Ok(best)
}

fn write_snapshot_csv(path: &PathBuf, times: &[f64], states: &DMatrix<f64>) -> Result<()> {
    let n = states.nrows();
    let mut out = String::with_capacity(times.len() * (n + 1) * 20);
    out.push('t');
    for i in 0..n {
        out.push_str(&format!(",x{}", i + 1));
    }
    out.push('\n');
    for (j, &t) in times.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for i in 0..n {
            out.push_str(&format!(",{}", states[(i, j)]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_snapshot_csv(path: &Path) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let text = fs::read_to_string(path)?;
    let name = path.display();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        // header rows carry non-numeric fields
        if lineno == 0 && line.split(',').next().unwrap_or("").parse::<f64>().is_err() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::DataFormat(format!(
                        "{name}: line {}: cannot parse '{field}'",
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::DataFormat(format!(
                    "{name}: line {}: expected {} fields, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        if row.len() < 2 {
            return Err(Error::DataFormat(format!(
                "{name}: line {}: need a time and at least one state entry",
                lineno + 1
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::DataFormat(format!("{name}: no data rows")));
    }
    let (count, n) = (rows.len(), rows[0].len() - 1);
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let states = DMatrix::from_fn(n, count, |i, j| rows[j][i + 1]);
    Ok((times, states))
}

fn write_vector_csv(path: &PathBuf, v: &DVector<f64>) -> Result<()> {
    let line: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    fs::write(path, line.join(",") + "\n")?;
    Ok(())
}

fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let name = path.display();
    text.split([',', '\n', ' '])
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .map(|field| {
            field
                .parse::<f64>()
                .map_err(|_| Error::DataFormat(format!("{name}: cannot parse '{field}'")))
        })
        .collect()
}

fn instance_error_f64(index: usize, mu: &DVector<f64>, source: Error) -> Error {
    let values: Vec<f64> = mu.iter().copied().collect();
    Error::for_instance(index, &values, source)
}
