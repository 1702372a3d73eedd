//! Two-stage orchestration: offline per-parameter surrogate fitting, online
//! data generation at a query time, optional POD compression, network
//! training, prediction, and error reporting.
//!
//! The offline stage fits one kernel surrogate per training parameter
//! instance. The online stage advances every surrogate to the query time t*,
//! optionally projects the resulting states onto a POD basis, and trains a
//! network mapping parameters to (reduced) states at t*. Predictions for new
//! parameters are a single network forward pass plus basis reconstruction.

pub mod config;
pub mod dataio;
pub mod persist;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::lando::{DynamicsMode, LandoModel, SnapshotSet};
use crate::neural::{MlpConfig, NeuralMap};
use crate::pod::PodBasis;
use crate::scalar::{real, to_f64, Scalar};
use crate::systems::sampling::SEED_STRIDE;

/// What the offline stage was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingManifest<T: Scalar> {
    /// Per-dimension envelope of the training parameter instances.
    pub bounds: Vec<(T, T)>,
    /// Base seed; instance i fits with seed + i·SEED_STRIDE.
    pub seed: u64,
    pub kernel: KernelSpec<T>,
    pub nu: T,
}

/// One fitted surrogate per training parameter instance.
#[derive(Debug, Clone)]
pub struct OfflineBundle<T: Scalar> {
    instances: Vec<(DVector<T>, LandoModel<T>)>,
    manifest: TrainingManifest<T>,
    mode: DynamicsMode,
    /// Snapshot spacing shared by every instance.
    dt: T,
    /// End of the training time window; later query times are extrapolation.
    t_end: T,
}

impl<T: Scalar> OfflineBundle<T> {
    pub fn instances(&self) -> &[(DVector<T>, LandoModel<T>)] {
        &self.instances
    }

    pub fn manifest(&self) -> &TrainingManifest<T> {
        &self.manifest
    }

    pub fn mode(&self) -> DynamicsMode {
        self.mode
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.instances[0].1.state_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.instances[0].0.nrows()
    }

    /// Parameter instances as columns of a d×N_µ matrix.
    pub fn parameter_matrix(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.param_dim(), self.len(), |d, i| self.instances[i].0[d])
    }

    /// Rebuilds a bundle from stored parts, enforcing that every model
    /// shares the manifest's kernel and the bundle mode.
    pub fn from_parts(
        instances: Vec<(DVector<T>, LandoModel<T>)>,
        manifest: TrainingManifest<T>,
        mode: DynamicsMode,
        dt: T,
        t_end: T,
    ) -> Result<Self> {
        let (mu0, m0) = instances.first().ok_or(Error::Empty("offline bundle"))?;
        let param_dim = mu0.nrows();
        let state_dim = m0.state_dim();
        if manifest.bounds.len() != param_dim {
            return Err(Error::DimensionMismatch {
                context: "manifest bounds vs parameter dimension",
                expected: param_dim,
                got: manifest.bounds.len(),
            });
        }
        for (i, (mu, model)) in instances.iter().enumerate() {
            if mu.nrows() != param_dim || model.state_dim() != state_dim {
                return Err(instance_error(
                    i,
                    mu,
                    Error::InvalidArgument(
                        "instances disagree on parameter or state dimension".into(),
                    ),
                ));
            }
            if model.mode() != mode {
                return Err(instance_error(
                    i,
                    mu,
                    Error::InvalidArgument("model mode differs from bundle mode".into()),
                ));
            }
            if model.kernel() != &manifest.kernel {
                return Err(instance_error(
                    i,
                    mu,
                    Error::InvalidArgument("model kernel differs from manifest kernel".into()),
                ));
            }
        }
        Ok(OfflineBundle {
            instances,
            manifest,
            mode,
            dt,
            t_end,
        })
    }
}

/// Fits one surrogate per (µᵢ, snapshots) pair. Instance i uses dictionary
/// seed `seed + i·SEED_STRIDE`, so a one-instance bundle reproduces a direct
/// fit exactly. Instances fit in parallel.
pub fn offline<T: Scalar>(
    dataset: &[(DVector<T>, SnapshotSet<T>)],
    kernel: KernelSpec<T>,
    nu: T,
    seed: u64,
) -> Result<OfflineBundle<T>> {
    let (mu0, s0) = dataset.first().ok_or(Error::Empty("offline dataset"))?;
    let param_dim = mu0.nrows();
    let state_dim = s0.state_dim();
    let mode = s0.mode();
    let dt = s0.dt();
    if param_dim == 0 {
        return Err(Error::Empty("parameter vector"));
    }
    let mut t_end = T::zero();
    for (i, (mu, snaps)) in dataset.iter().enumerate() {
        if mu.nrows() != param_dim {
            return Err(instance_error(
                i,
                mu,
                Error::DimensionMismatch {
                    context: "parameter dimension",
                    expected: param_dim,
                    got: mu.nrows(),
                },
            ));
        }
        if snaps.state_dim() != state_dim {
            return Err(instance_error(
                i,
                mu,
                Error::DimensionMismatch {
                    context: "snapshot state dimension",
                    expected: state_dim,
                    got: snaps.state_dim(),
                },
            ));
        }
        if snaps.mode() != mode {
            return Err(instance_error(
                i,
                mu,
                Error::InvalidArgument("all instances must share the dynamics mode".into()),
            ));
        }
        if (snaps.dt() - dt).abs() > real::<T>(1e-9) * dt.abs() {
            return Err(instance_error(
                i,
                mu,
                Error::InvalidArgument("all instances must share the snapshot spacing".into()),
            ));
        }
        let last = *snaps.times().last().expect("snapshot sets are non-empty");
        if last > t_end {
            t_end = last;
        }
    }

    let models: Vec<LandoModel<T>> = dataset
        .par_iter()
        .enumerate()
        .map(|(i, (mu, snaps))| {
            let s = seed.wrapping_add((i as u64).wrapping_mul(SEED_STRIDE));
            LandoModel::fit(snaps, kernel, nu, s).map_err(|e| instance_error(i, mu, e))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut bounds: Vec<(T, T)> = (0..param_dim).map(|d| (mu0[d], mu0[d])).collect();
    for (mu, _) in dataset {
        for d in 0..param_dim {
            if mu[d] < bounds[d].0 {
                bounds[d].0 = mu[d];
            }
            if mu[d] > bounds[d].1 {
                bounds[d].1 = mu[d];
            }
        }
    }
    let instances = dataset
        .iter()
        .map(|(mu, _)| mu.clone())
        .zip(models)
        .collect();
    Ok(OfflineBundle {
        instances,
        manifest: TrainingManifest {
            bounds,
            seed,
            kernel,
            nu,
        },
        mode,
        dt,
        t_end,
    })
}

/// States at the query time, one column per training instance: continuous
/// models integrate from x0 with the given step, discrete models roll out
/// `round(t_star / Δt)` steps (off-grid query times are rounded with a
/// warning; `step` is ignored). `t_star = 0` returns x0 in every column.
pub fn generate_at<T: Scalar>(
    bundle: &OfflineBundle<T>,
    t_star: T,
    x0: &DVector<T>,
    step: T,
) -> Result<DMatrix<T>> {
    if !t_star.is_finite() || t_star < T::zero() {
        return Err(Error::InvalidArgument(
            "query time must be finite and ≥ 0".into(),
        ));
    }
    if x0.nrows() != bundle.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "initial state dimension",
            expected: bundle.state_dim(),
            got: x0.nrows(),
        });
    }
    if t_star == T::zero() {
        return Ok(DMatrix::from_fn(x0.nrows(), bundle.len(), |i, _| x0[i]));
    }

    let steps = match bundle.mode {
        DynamicsMode::Continuous => 0,
        DynamicsMode::Discrete => {
            let ratio = to_f64(t_star / bundle.dt);
            let rounded = ratio.round();
            if (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
                log::warn!(
                    "query time {} is not a multiple of the snapshot spacing {}; \
                     rounding to {} steps",
                    to_f64(t_star),
                    to_f64(bundle.dt),
                    rounded
                );
            }
            rounded as usize
        }
    };

    let columns: Vec<DVector<T>> = bundle
        .instances
        .par_iter()
        .enumerate()
        .map(|(i, (mu, model))| {
            let traj = match bundle.mode {
                DynamicsMode::Continuous => model.integrate(x0, t_star, step),
                DynamicsMode::Discrete => model.rollout(x0, steps),
            };
            traj.map(|t| t.final_state())
                .map_err(|e| instance_error(i, mu, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// POD stage settings: truncate at an energy fraction, or force a fixed
/// mode count when `rank` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PodConfig<T: Scalar> {
    pub energy_threshold: T,
    pub rank: Option<usize>,
}

impl<T: Scalar> PodConfig<T> {
    pub fn threshold(energy_threshold: T) -> Self {
        PodConfig {
            energy_threshold,
            rank: None,
        }
    }
}

/// Parameter-to-state surrogate for one query time.
#[derive(Debug, Clone)]
pub struct OnlineModel<T: Scalar> {
    t_star: T,
    pod: Option<PodBasis<T>>,
    map: NeuralMap<T>,
    /// Integration step used for data generation (snapshot spacing for
    /// discrete bundles).
    step: T,
    x0: DVector<T>,
    /// Query time lies beyond the training window.
    extrapolated: bool,
}

/// Builds the online surrogate: generates states at t* from every offline
/// model, optionally compresses them with POD, and trains the network on
/// (µᵢ, state) pairs. Validation pairs for early stopping come from a second
/// bundle fitted on held-out instances and pushed through the same
/// generation path; without one the training loss is monitored.
///
/// The network's input and output dimensions are taken from the data
/// (parameter dimension and reduced/full state dimension); the corresponding
/// fields of `mlp_cfg` are overwritten.
pub fn online<T: Scalar>(
    bundle: &OfflineBundle<T>,
    t_star: T,
    x0: &DVector<T>,
    step: T,
    pod_cfg: Option<PodConfig<T>>,
    mut mlp_cfg: MlpConfig<T>,
    valid: Option<&OfflineBundle<T>>,
) -> Result<OnlineModel<T>> {
    let x_train = generate_at(bundle, t_star, x0, step)?;
    let mu_train = bundle.parameter_matrix();

    let (mu_valid, x_valid) = match valid {
        Some(vb) => {
            if vb.state_dim() != bundle.state_dim()
                || vb.param_dim() != bundle.param_dim()
                || vb.mode() != bundle.mode()
            {
                return Err(Error::InvalidArgument(
                    "validation bundle is incompatible with the training bundle".into(),
                ));
            }
            (vb.parameter_matrix(), generate_at(vb, t_star, x0, step)?)
        }
        None => (
            DMatrix::zeros(bundle.param_dim(), 0),
            DMatrix::zeros(bundle.state_dim(), 0),
        ),
    };

    let (pod, z_train, z_valid) = match pod_cfg {
        Some(cfg) => {
            let basis = match cfg.rank {
                Some(r) => PodBasis::compute_with_rank(&x_train, r)?,
                None => PodBasis::compute(&x_train, cfg.energy_threshold)?,
            };
            let zt = basis.project_columns(&x_train)?;
            let zv = if x_valid.ncols() > 0 {
                basis.project_columns(&x_valid)?
            } else {
                DMatrix::zeros(basis.rank(), 0)
            };
            (Some(basis), zt, zv)
        }
        None => (None, x_train, x_valid),
    };

    mlp_cfg.input_dim = bundle.param_dim();
    mlp_cfg.output_dim = z_train.nrows();
    let map = NeuralMap::train(&mu_train, &z_train, &mu_valid, &z_valid, mlp_cfg, t_star)?;

    Ok(OnlineModel {
        t_star,
        pod,
        map,
        step,
        x0: x0.clone(),
        extrapolated: t_star > bundle.t_end,
    })
}

impl<T: Scalar> OnlineModel<T> {
    /// Full-state prediction for one parameter vector: network forward pass,
    /// then basis reconstruction when POD is present. Parameters outside the
    /// training box are allowed but logged as extrapolation.
    pub fn predict(&self, mu: &DVector<T>) -> Result<DVector<T>> {
        if mu.nrows() == self.map.input_scaler().dim()
            && self.map.input_scaler().is_outside_unit_box(mu)
        {
            log::warn!(
                "parameter [{}] lies outside the training box; extrapolating",
                join_f64(mu)
            );
        }
        let y = self.map.forward(mu)?;
        match &self.pod {
            Some(basis) => basis.reconstruct(&y),
            None => Ok(y),
        }
    }

    /// Relative L2 errors against reference states, aggregated with
    /// population statistics. Test instances evaluate in parallel.
    pub fn evaluate(&self, test: &[(DVector<T>, DVector<T>)]) -> Result<ErrorReport<T>> {
        if test.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let errors: Vec<(DVector<T>, T)> = test
            .par_iter()
            .enumerate()
            .map(|(i, (mu, reference))| {
                let prediction = self.predict(mu).map_err(|e| instance_error(i, mu, e))?;
                let eps =
                    relative_l2(reference, &prediction).map_err(|e| instance_error(i, mu, e))?;
                Ok((mu.clone(), eps))
            })
            .collect::<Result<Vec<_>>>()?;
        ErrorReport::from_errors(self.t_star, self.extrapolated, errors)
    }

    pub fn t_star(&self) -> T {
        self.t_star
    }

    pub fn pod(&self) -> Option<&PodBasis<T>> {
        self.pod.as_ref()
    }

    pub fn map(&self) -> &NeuralMap<T> {
        &self.map
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn x0(&self) -> &DVector<T> {
        &self.x0
    }

    pub fn extrapolated(&self) -> bool {
        self.extrapolated
    }

    /// Dimension of predicted states (full state, after any reconstruction).
    pub fn state_dim(&self) -> usize {
        match &self.pod {
            Some(basis) => basis.state_dim(),
            None => self.map.config().output_dim,
        }
    }

    /// Rebuilds an online model from stored parts, enforcing that the network
    /// output feeds the basis: with POD present `map.output_dim` must equal
    /// the basis rank, otherwise it is the full state dimension.
    pub fn from_parts(
        t_star: T,
        pod: Option<PodBasis<T>>,
        map: NeuralMap<T>,
        step: T,
        x0: DVector<T>,
        extrapolated: bool,
    ) -> Result<Self> {
        let expected = match &pod {
            Some(basis) => basis.rank(),
            None => map.config().output_dim,
        };
        if map.config().output_dim != expected {
            return Err(Error::DimensionMismatch {
                context: "network output vs POD rank",
                expected,
                got: map.config().output_dim,
            });
        }
        let full = match &pod {
            Some(basis) => basis.state_dim(),
            None => map.config().output_dim,
        };
        if x0.nrows() != full {
            return Err(Error::DimensionMismatch {
                context: "stored initial state dimension",
                expected: full,
                got: x0.nrows(),
            });
        }
        Ok(OnlineModel {
            t_star,
            pod,
            map,
            step,
            x0,
            extrapolated,
        })
    }
}

/// Relative L2 error ‖x − x̂‖₂ / ‖x‖₂ of a prediction against a reference.
pub fn relative_l2<T: Scalar>(reference: &DVector<T>, prediction: &DVector<T>) -> Result<T> {
    if reference.nrows() != prediction.nrows() {
        return Err(Error::DimensionMismatch {
            context: "prediction vs reference dimension",
            expected: reference.nrows(),
            got: prediction.nrows(),
        });
    }
    let denom = reference.norm();
    if !(denom > T::zero()) || !denom.is_finite() {
        return Err(Error::InvalidArgument(
            "reference state must be finite with nonzero norm".into(),
        ));
    }
    Ok((reference - prediction).norm() / denom)
}

/// Per-instance relative errors at one query time with their population
/// mean and standard deviation.
#[derive(Debug, Clone)]
pub struct ErrorReport<T: Scalar> {
    pub t_star: T,
    pub extrapolated: bool,
    /// (µᵢ, εᵢ), one entry per test instance.
    pub errors: Vec<(DVector<T>, T)>,
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> ErrorReport<T> {
    /// Aggregates a per-instance error list; both moments divide by the
    /// instance count (population statistics).
    pub fn from_errors(
        t_star: T,
        extrapolated: bool,
        errors: Vec<(DVector<T>, T)>,
    ) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Empty("error report"));
        }
        if errors.iter().any(|(_, e)| !e.is_finite() || *e < T::zero()) {
            return Err(Error::NonFinite("relative errors"));
        }
        let (mean, std) = population_stats(errors.iter().map(|(_, e)| *e));
        Ok(ErrorReport {
            t_star,
            extrapolated,
            errors,
            mean,
            std,
        })
    }

    pub fn count(&self) -> usize {
        self.errors.len()
    }

    /// Mean and standard deviation recomputed from the per-instance list;
    /// must match the stored aggregates.
    pub fn recompute(&self) -> (T, T) {
        population_stats(self.errors.iter().map(|(_, e)| *e))
    }
}

fn population_stats<T: Scalar>(errors: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = real::<T>(errors.clone().count() as f64);
    let mean = errors.clone().fold(T::zero(), |a, e| a + e) / n;
    let var = errors.fold(T::zero(), |a, e| a + (e - mean) * (e - mean)) / n;
    (mean, var.sqrt())
}

fn instance_error<T: Scalar>(index: usize, mu: &DVector<T>, source: Error) -> Error {
    let values: Vec<f64> = mu.iter().map(|&v| to_f64(v)).collect();
    Error::for_instance(index, &values, source)
}

fn join_f64<T: Scalar>(v: &DVector<T>) -> String {
    v.iter()
        .map(|&x| format!("{}", to_f64(x)))
        .collect::<Vec<_>>()
        .join(", ")
}
