//! Experiment configuration: benchmark selection, the JSON schema behind
//! data generation, and per-system defaults.
//!
//! A config file fixes everything a run depends on: the parameter box, the
//! dataset split, the snapshot windows, solver settings, the kernel, and
//! network overrides. Every random choice downstream derives from `seed`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::neural::{Activation, MlpConfig};
use crate::scalar::{real, Scalar};
use crate::systems::sampling::ParameterDesign;
use crate::systems::time_grid;

/// The benchmark systems the data generator knows how to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    /// Predator–prey with varying prey growth rate α.
    LotkaVolterra,
    /// Predator–prey with (α, β) varying jointly.
    LotkaVolterra2,
    /// 2-D heat equation with varying diffusivity.
    Heat,
    /// 1-D Allen–Cahn equation with varying (λ, ε).
    AllenCahn,
}

impl Benchmark {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lv" => Ok(Benchmark::LotkaVolterra),
            "lv2" => Ok(Benchmark::LotkaVolterra2),
            "heat" => Ok(Benchmark::Heat),
            "allen-cahn" => Ok(Benchmark::AllenCahn),
            other => Err(Error::Config(format!(
                "unknown system '{other}'; expected lv, lv2, heat, or allen-cahn"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::LotkaVolterra => "lv",
            Benchmark::LotkaVolterra2 => "lv2",
            Benchmark::Heat => "heat",
            Benchmark::AllenCahn => "allen-cahn",
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Benchmark::LotkaVolterra | Benchmark::Heat => 1,
            Benchmark::LotkaVolterra2 | Benchmark::AllenCahn => 2,
        }
    }

    /// The standard setup for each benchmark: parameter box, dataset split,
    /// snapshot windows, solver resolution, kernel, and threshold.
    pub fn default_config(&self) -> ExperimentConfig {
        let base = ExperimentConfig {
            system: self.name().into(),
            bounds: Vec::new(),
            train: 0,
            valid: 0,
            test: 0,
            seed: 2024,
            train_window: (0.0, 0.0),
            train_snapshots: 0,
            test_window: (0.0, 0.0),
            test_snapshots: 0,
            x0: None,
            nx: None,
            ny: None,
            solver_dt: None,
            kernel: String::new(),
            nu: 0.0,
            mlp: MlpSettings::default(),
        };
        match self {
            Benchmark::LotkaVolterra => ExperimentConfig {
                bounds: vec![(0.015, 0.1)],
                train: 150,
                valid: 30,
                test: 100,
                train_window: (0.0, 400.0),
                train_snapshots: 601,
                test_window: (0.0, 600.0),
                test_snapshots: 901,
                x0: Some(vec![80.0, 20.0]),
                kernel: "quadratic".into(),
                nu: 1e-6,
                ..base
            },
            Benchmark::LotkaVolterra2 => ExperimentConfig {
                bounds: vec![(0.015, 0.1), (0.0012, 0.0022)],
                train: 560,
                valid: 60,
                test: 1200,
                train_window: (0.0, 400.0),
                train_snapshots: 601,
                test_window: (0.0, 600.0),
                test_snapshots: 901,
                x0: Some(vec![80.0, 20.0]),
                kernel: "quadratic".into(),
                nu: 1e-6,
                ..base
            },
            Benchmark::Heat => ExperimentConfig {
                bounds: vec![(0.5, 1.0)],
                train: 150,
                valid: 50,
                test: 100,
                train_window: (0.0, 2.0),
                train_snapshots: 201,
                test_window: (0.0, 4.0),
                test_snapshots: 401,
                nx: Some(32),
                ny: Some(32),
                solver_dt: Some(0.01),
                kernel: "linear".into(),
                nu: 1e-5,
                ..base
            },
            Benchmark::AllenCahn => ExperimentConfig {
                bounds: vec![(1e-4, 1e-3), (0.5, 4.0)],
                train: 400,
                valid: 150,
                test: 550,
                train_window: (0.0, 0.6),
                train_snapshots: 61,
                test_window: (0.0, 1.0),
                test_snapshots: 101,
                nx: Some(250),
                solver_dt: Some(1e-4),
                kernel: "linear".into(),
                nu: 1e-6,
                ..base
            },
        }
    }
}

/// Optional overrides for the network trainer, applied on top of a preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSettings {
    pub hidden_layers: Option<Vec<usize>>,
    /// "snake", "snake:<frequency>", "relu", or "tanh".
    pub activation: Option<String>,
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
}

impl MlpSettings {
    pub fn is_empty(&self) -> bool {
        *self == MlpSettings::default()
    }

    /// Overwrites the set fields of `cfg` and revalidates it.
    pub fn apply<T: Scalar>(&self, cfg: &mut MlpConfig<T>) -> Result<()> {
        if let Some(h) = &self.hidden_layers {
            cfg.hidden_layers = h.clone();
        }
        if let Some(a) = &self.activation {
            cfg.activation = parse_activation(a)?;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = real(lr);
        }
        if let Some(e) = self.max_epochs {
            cfg.max_epochs = e;
        }
        if let Some(p) = self.patience {
            cfg.patience = p;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()
    }
}

/// Everything one experiment depends on, as stored in a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of "lv", "lv2", "heat", "allen-cahn".
    pub system: String,
    /// Parameter box, one (low, high) pair per dimension.
    pub bounds: Vec<(f64, f64)>,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Base seed for sampling, dictionaries, and network init.
    pub seed: u64,
    /// Time window the surrogates are fitted on.
    pub train_window: (f64, f64),
    /// Snapshot instants in the training window, endpoints included.
    pub train_snapshots: usize,
    /// Window the reference trajectories cover for evaluation.
    pub test_window: (f64, f64),
    pub test_snapshots: usize,
    /// Initial state; defaults to the system's standard initial condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Spatial resolution for the PDE benchmarks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    /// Internal solver step for the PDE benchmarks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_dt: Option<f64>,
    /// "linear", "quadratic", "poly:<degree>:<offset>", or
    /// "gauss:<lengthscale>".
    pub kernel: String,
    /// Dictionary sparsity threshold.
    pub nu: f64,
    #[serde(default, skip_serializing_if = "MlpSettings::is_empty")]
    pub mlp: MlpSettings,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn benchmark(&self) -> Result<Benchmark> {
        Benchmark::parse(&self.system)
    }

    pub fn validate(&self) -> Result<()> {
        let benchmark = self.benchmark()?;
        if self.bounds.len() != benchmark.param_dim() {
            return Err(Error::Config(format!(
                "system '{}' has {} parameters, config lists {} bounds",
                self.system,
                benchmark.param_dim(),
                self.bounds.len()
            )));
        }
        for &(lo, hi) in &self.bounds {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Config(format!(
                    "parameter bounds ({lo}, {hi}) must be finite with low < high"
                )));
            }
        }
        if self.train == 0 || self.test == 0 {
            return Err(Error::Config(
                "train and test counts must be at least 1".into(),
            ));
        }
        for (name, (t0, t1), count) in [
            ("train", self.train_window, self.train_snapshots),
            ("test", self.test_window, self.test_snapshots),
        ] {
            if !t0.is_finite() || !t1.is_finite() || t0 >= t1 {
                return Err(Error::Config(format!(
                    "{name} window ({t0}, {t1}) must be finite with start < end"
                )));
            }
            if count < 2 {
                return Err(Error::Config(format!(
                    "{name} window needs at least 2 snapshot instants"
                )));
            }
        }
        match benchmark {
            Benchmark::LotkaVolterra | Benchmark::LotkaVolterra2 => {
                let x0 = self.x0.as_ref().ok_or_else(|| {
                    Error::Config("predator–prey configs need a 2-entry x0".into())
                })?;
                if x0.len() != 2 || x0.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                    return Err(Error::Config(
                        "x0 must hold two finite positive populations".into(),
                    ));
                }
            }
            Benchmark::Heat | Benchmark::AllenCahn => {
                if self.nx.is_none() {
                    return Err(Error::Config("PDE configs need a spatial resolution nx".into()));
                }
                if benchmark == Benchmark::Heat && self.ny.is_none() {
                    return Err(Error::Config("the heat benchmark needs ny".into()));
                }
                if let Some(dt) = self.solver_dt {
                    if !dt.is_finite() || dt <= 0.0 {
                        return Err(Error::Config("solver_dt must be finite and > 0".into()));
                    }
                }
            }
        }
        if !self.nu.is_finite() || self.nu <= 0.0 {
            return Err(Error::Config("nu must be finite and > 0".into()));
        }
        parse_kernel::<f64>(&self.kernel)?;
        Ok(())
    }

    /// The sampling plan this config describes.
    pub fn design(&self) -> ParameterDesign {
        ParameterDesign {
            bounds: self.bounds.clone(),
            train: self.train,
            valid: self.valid,
            test: self.test,
            seed: self.seed,
        }
    }

    pub fn train_grid<T: Scalar>(&self) -> Result<Vec<T>> {
        time_grid(self.train_window.0, self.train_window.1, self.train_snapshots)
    }

    pub fn test_grid<T: Scalar>(&self) -> Result<Vec<T>> {
        time_grid(self.test_window.0, self.test_window.1, self.test_snapshots)
    }
}

/// Parses a kernel description: "linear", "quadratic",
/// "poly:<degree>:<offset>", or "gauss:<lengthscale>".
pub fn parse_kernel<T: Scalar>(s: &str) -> Result<KernelSpec<T>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad_number = |what: &str, v: &str| {
        Error::Config(format!("kernel '{s}': cannot parse {what} '{v}'"))
    };
    match parts.as_slice() {
        ["linear"] => Ok(KernelSpec::linear()),
        ["quadratic"] => Ok(KernelSpec::quadratic()),
        ["poly", d, c] => {
            let degree: u32 = d.parse().map_err(|_| bad_number("degree", d))?;
            let offset: f64 = c.parse().map_err(|_| bad_number("offset", c))?;
            KernelSpec::polynomial(degree, real(offset))
        }
        ["gauss", l] => {
            let ls: f64 = l.parse().map_err(|_| bad_number("lengthscale", l))?;
            KernelSpec::gaussian(real(ls))
        }
        _ => Err(Error::Config(format!(
            "unrecognized kernel '{s}'; expected linear, quadratic, \
             poly:<degree>:<offset>, or gauss:<lengthscale>"
        ))),
    }
}

/// Parses an activation description: "snake", "snake:<frequency>", "relu",
/// or "tanh".
pub fn parse_activation<T: Scalar>(s: &str) -> Result<Activation<T>> {
    match s {
        "snake" => Ok(Activation::Snake { a: T::one() }),
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        _ => {
            if let Some(rest) = s.strip_prefix("snake:") {
                let a: f64 = rest.parse().map_err(|_| {
                    Error::Config(format!("cannot parse snake frequency '{rest}'"))
                })?;
                if !a.is_finite() || a <= 0.0 {
                    return Err(Error::Config("snake frequency must be > 0".into()));
                }
                Ok(Activation::Snake { a: real(a) })
            } else {
                Err(Error::Config(format!(
                    "unknown activation '{s}'; expected snake, snake:<frequency>, or tanh"
                )))
            }
        }
    }
}
