//! JSON persistence for offline bundles, online models, and error reports.
//!
//! Files store plain f64 values with matrices in row-major order and explicit
//! dimensions, so they can be read without this library. Loading rebuilds
//! every structure through its validating constructor and re-derives the
//! aggregates it can check (report moments must match their instance list).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::SparseDictionary;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::lando::{DynamicsMode, LandoModel};
use crate::neural::{Activation, AffineScaler, Layer, MlpConfig, NeuralMap};
use crate::pod::PodBasis;
use crate::scalar::{real, to_f64, Scalar};

use super::{ErrorReport, OfflineBundle, OnlineModel, TrainingManifest};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixDto {
    rows: usize,
    cols: usize,
    /// Row-major entries, rows·cols of them.
    data: Vec<f64>,
}

fn matrix_dto<T: Scalar>(m: &DMatrix<T>) -> MatrixDto {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(to_f64(m[(i, j)]));
        }
    }
    MatrixDto {
        rows: m.nrows(),
        cols: m.ncols(),
        data,
    }
}

fn matrix_from_dto<T: Scalar>(dto: &MatrixDto, what: &str) -> Result<DMatrix<T>> {
    if dto.data.len() != dto.rows * dto.cols {
        return Err(Error::DataFormat(format!(
            "{what}: a {}x{} matrix needs {} entries, found {}",
            dto.rows,
            dto.cols,
            dto.rows * dto.cols,
            dto.data.len()
        )));
    }
    Ok(DMatrix::from_fn(dto.rows, dto.cols, |i, j| {
        real(dto.data[i * dto.cols + j])
    }))
}

fn vector_dto<T: Scalar>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|&x| to_f64(x)).collect()
}

fn vector_from_dto<T: Scalar>(data: &[f64]) -> DVector<T> {
    DVector::from_iterator(data.len(), data.iter().map(|&x| real(x)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KernelDto {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    degree: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lengthscale: Option<f64>,
}

fn kernel_dto<T: Scalar>(k: &KernelSpec<T>) -> KernelDto {
    let mut dto = KernelDto {
        kind: String::new(),
        degree: None,
        offset: None,
        lengthscale: None,
    };
    match *k {
        KernelSpec::Linear => dto.kind = "linear".into(),
        KernelSpec::Polynomial { degree, offset } => {
            dto.kind = "polynomial".into();
            dto.degree = Some(degree);
            dto.offset = Some(to_f64(offset));
        }
        KernelSpec::Gaussian { lengthscale } => {
            dto.kind = "gaussian".into();
            dto.lengthscale = Some(to_f64(lengthscale));
        }
    }
    dto
}

fn kernel_from_dto<T: Scalar>(dto: &KernelDto) -> Result<KernelSpec<T>> {
    match dto.kind.as_str() {
        "linear" => Ok(KernelSpec::linear()),
        "polynomial" => {
            let degree = dto
                .degree
                .ok_or_else(|| Error::DataFormat("polynomial kernel needs a degree".into()))?;
            let offset = dto
                .offset
                .ok_or_else(|| Error::DataFormat("polynomial kernel needs an offset".into()))?;
            KernelSpec::polynomial(degree, real(offset))
        }
        "gaussian" => {
            let ls = dto.lengthscale.ok_or_else(|| {
                Error::DataFormat("gaussian kernel needs a lengthscale".into())
            })?;
            KernelSpec::gaussian(real(ls))
        }
        other => Err(Error::DataFormat(format!("unknown kernel kind '{other}'"))),
    }
}

fn mode_str(mode: DynamicsMode) -> &'static str {
    match mode {
        DynamicsMode::Continuous => "continuous",
        DynamicsMode::Discrete => "discrete",
    }
}

fn mode_from_str(s: &str) -> Result<DynamicsMode> {
    match s {
        "continuous" => Ok(DynamicsMode::Continuous),
        "discrete" => Ok(DynamicsMode::Discrete),
        other => Err(Error::DataFormat(format!("unknown dynamics mode '{other}'"))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DictionaryDto {
    columns: MatrixDto,
    nu: f64,
    jitter: f64,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SurrogateDto {
    kernel: KernelDto,
    mode: String,
    dictionary: DictionaryDto,
    weights: MatrixDto,
    fit_residual: f64,
    state_dim: usize,
    scaling: Vec<f64>,
}

fn surrogate_dto<T: Scalar>(model: &LandoModel<T>) -> SurrogateDto {
    let d = model.dictionary();
    SurrogateDto {
        kernel: kernel_dto(model.kernel()),
        mode: mode_str(model.mode()).into(),
        dictionary: DictionaryDto {
            columns: matrix_dto(d.columns()),
            nu: to_f64(d.threshold()),
            jitter: to_f64(d.jitter()),
            seed: d.seed(),
        },
        weights: matrix_dto(model.weights()),
        fit_residual: to_f64(model.fit_residual()),
        state_dim: model.state_dim(),
        scaling: vector_dto(model.scaling()),
    }
}

fn surrogate_from_dto<T: Scalar>(dto: &SurrogateDto) -> Result<LandoModel<T>> {
    let kernel = kernel_from_dto(&dto.kernel)?;
    let columns = matrix_from_dto(&dto.dictionary.columns, "dictionary columns")?;
    let dictionary = SparseDictionary::from_parts(
        kernel,
        columns,
        real(dto.dictionary.nu),
        real(dto.dictionary.jitter),
        dto.dictionary.seed,
    )?;
    if dictionary.state_dim() != dto.state_dim {
        return Err(Error::DataFormat(format!(
            "stored state dimension {} disagrees with dictionary rows {}",
            dto.state_dim,
            dictionary.state_dim()
        )));
    }
    let weights = matrix_from_dto(&dto.weights, "weight matrix")?;
    LandoModel::from_parts(
        dictionary,
        weights,
        mode_from_str(&dto.mode)?,
        real(dto.fit_residual),
        vector_from_dto(&dto.scaling),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestDto {
    bounds: Vec<(f64, f64)>,
    seed: u64,
    kernel: KernelDto,
    nu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceDto {
    mu: Vec<f64>,
    model: SurrogateDto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleDto {
    manifest: ManifestDto,
    mode: String,
    dt: f64,
    t_end: f64,
    instances: Vec<InstanceDto>,
}

fn bundle_dto<T: Scalar>(bundle: &OfflineBundle<T>) -> BundleDto {
    let m = bundle.manifest();
    BundleDto {
        manifest: ManifestDto {
            bounds: m
                .bounds
                .iter()
                .map(|&(lo, hi)| (to_f64(lo), to_f64(hi)))
                .collect(),
            seed: m.seed,
            kernel: kernel_dto(&m.kernel),
            nu: to_f64(m.nu),
        },
        mode: mode_str(bundle.mode()).into(),
        dt: to_f64(bundle.dt()),
        t_end: to_f64(bundle.t_end()),
        instances: bundle
            .instances()
            .iter()
            .map(|(mu, model)| InstanceDto {
                mu: vector_dto(mu),
                model: surrogate_dto(model),
            })
            .collect(),
    }
}

fn bundle_from_dto<T: Scalar>(dto: &BundleDto) -> Result<OfflineBundle<T>> {
    let manifest = TrainingManifest {
        bounds: dto
            .manifest
            .bounds
            .iter()
            .map(|&(lo, hi)| (real(lo), real(hi)))
            .collect(),
        seed: dto.manifest.seed,
        kernel: kernel_from_dto(&dto.manifest.kernel)?,
        nu: real(dto.manifest.nu),
    };
    let mut instances = Vec::with_capacity(dto.instances.len());
    for (i, inst) in dto.instances.iter().enumerate() {
        let model = surrogate_from_dto(&inst.model)
            .map_err(|e| Error::for_instance(i, &inst.mu, e))?;
        instances.push((vector_from_dto(&inst.mu), model));
    }
    OfflineBundle::from_parts(
        instances,
        manifest,
        mode_from_str(&dto.mode)?,
        real(dto.dt),
        real(dto.t_end),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleFileDto {
    train: BundleDto,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid: Option<BundleDto>,
}

/// Serializes a training bundle (and its optional validation companion).
pub fn bundles_to_json<T: Scalar>(
    train: &OfflineBundle<T>,
    valid: Option<&OfflineBundle<T>>,
) -> Result<String> {
    let dto = BundleFileDto {
        train: bundle_dto(train),
        valid: valid.map(bundle_dto),
    };
    Ok(serde_json::to_string(&dto)?)
}

pub fn bundles_from_json<T: Scalar>(
    json: &str,
) -> Result<(OfflineBundle<T>, Option<OfflineBundle<T>>)> {
    let dto: BundleFileDto = serde_json::from_str(json)?;
    let train = bundle_from_dto(&dto.train)?;
    let valid = dto.valid.as_ref().map(bundle_from_dto).transpose()?;
    Ok((train, valid))
}

pub fn save_bundles<T: Scalar>(
    path: &Path,
    train: &OfflineBundle<T>,
    valid: Option<&OfflineBundle<T>>,
) -> Result<()> {
    fs::write(path, bundles_to_json(train, valid)?)?;
    Ok(())
}

pub fn load_bundles<T: Scalar>(path: &Path) -> Result<(OfflineBundle<T>, Option<OfflineBundle<T>>)> {
    bundles_from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ActivationDto {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
}

fn activation_dto<T: Scalar>(activation: &Activation<T>) -> ActivationDto {
    match *activation {
        Activation::Snake { a } => ActivationDto {
            kind: "snake".into(),
            a: Some(to_f64(a)),
        },
        Activation::Relu => ActivationDto {
            kind: "relu".into(),
            a: None,
        },
        Activation::Tanh => ActivationDto {
            kind: "tanh".into(),
            a: None,
        },
    }
}

fn activation_from_dto<T: Scalar>(dto: &ActivationDto) -> Result<Activation<T>> {
    match dto.kind.as_str() {
        "snake" => {
            let a = dto
                .a
                .ok_or_else(|| Error::DataFormat("snake activation needs a frequency".into()))?;
            Ok(Activation::Snake { a: real(a) })
        }
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(Error::DataFormat(format!(
            "unknown activation kind '{other}'"
        ))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MlpConfigDto {
    input_dim: usize,
    output_dim: usize,
    hidden_layers: Vec<usize>,
    activation: ActivationDto,
    learning_rate: f64,
    max_epochs: usize,
    patience: usize,
    batch_size: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScalerDto {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerDto {
    weight: MatrixDto,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDto {
    config: MlpConfigDto,
    input_scaler: ScalerDto,
    output_scaler: ScalerDto,
    layers: Vec<LayerDto>,
    best_validation_loss: f64,
    t_star: f64,
}

fn scaler_dto<T: Scalar>(s: &AffineScaler<T>) -> ScalerDto {
    ScalerDto {
        shift: vector_dto(s.shift()),
        scale: vector_dto(s.scale()),
    }
}

fn scaler_from_dto<T: Scalar>(dto: &ScalerDto) -> Result<AffineScaler<T>> {
    AffineScaler::from_parts(vector_from_dto(&dto.shift), vector_from_dto(&dto.scale))
}

fn network_dto<T: Scalar>(map: &NeuralMap<T>) -> NetworkDto {
    let c = map.config();
    NetworkDto {
        config: MlpConfigDto {
            input_dim: c.input_dim,
            output_dim: c.output_dim,
            hidden_layers: c.hidden_layers.clone(),
            activation: activation_dto(&c.activation),
            learning_rate: to_f64(c.learning_rate),
            max_epochs: c.max_epochs,
            patience: c.patience,
            batch_size: c.batch_size,
            seed: c.seed,
        },
        input_scaler: scaler_dto(map.input_scaler()),
        output_scaler: scaler_dto(map.output_scaler()),
        layers: map
            .layers()
            .iter()
            .map(|l| LayerDto {
                weight: matrix_dto(&l.weight),
                bias: vector_dto(&l.bias),
            })
            .collect(),
        best_validation_loss: to_f64(map.best_validation_loss()),
        t_star: to_f64(map.t_star()),
    }
}

fn network_from_dto<T: Scalar>(dto: &NetworkDto) -> Result<NeuralMap<T>> {
    let c = &dto.config;
    let config = MlpConfig {
        input_dim: c.input_dim,
        output_dim: c.output_dim,
        hidden_layers: c.hidden_layers.clone(),
        activation: activation_from_dto(&c.activation)?,
        learning_rate: real(c.learning_rate),
        max_epochs: c.max_epochs,
        patience: c.patience,
        batch_size: c.batch_size,
        seed: c.seed,
    };
    let layers = dto
        .layers
        .iter()
        .map(|l| {
            Ok(Layer {
                weight: matrix_from_dto(&l.weight, "layer weight")?,
                bias: vector_from_dto(&l.bias),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NeuralMap::from_parts(
        config,
        layers,
        scaler_from_dto(&dto.input_scaler)?,
        scaler_from_dto(&dto.output_scaler)?,
        real(dto.best_validation_loss),
        real(dto.t_star),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PodDto {
    phi: MatrixDto,
    singular_values: Vec<f64>,
    energy_threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OnlineDto {
    t_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pod: Option<PodDto>,
    map: NetworkDto,
    step: f64,
    x0: Vec<f64>,
    extrapolated: bool,
}

pub fn online_model_to_json<T: Scalar>(model: &OnlineModel<T>) -> Result<String> {
    let dto = OnlineDto {
        t_star: to_f64(model.t_star()),
        pod: model.pod().map(|b| PodDto {
            phi: matrix_dto(b.phi()),
            singular_values: vector_dto(b.singular_values()),
            energy_threshold: to_f64(b.energy_threshold()),
        }),
        map: network_dto(model.map()),
        step: to_f64(model.step()),
        x0: vector_dto(model.x0()),
        extrapolated: model.extrapolated(),
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

pub fn online_model_from_json<T: Scalar>(json: &str) -> Result<OnlineModel<T>> {
    let dto: OnlineDto = serde_json::from_str(json)?;
    let pod = dto
        .pod
        .as_ref()
        .map(|p| {
            PodBasis::from_parts(
                matrix_from_dto(&p.phi, "basis matrix")?,
                vector_from_dto(&p.singular_values),
                real(p.energy_threshold),
            )
        })
        .transpose()?;
    OnlineModel::from_parts(
        real(dto.t_star),
        pod,
        network_from_dto(&dto.map)?,
        real(dto.step),
        vector_from_dto(&dto.x0),
        dto.extrapolated,
    )
}

pub fn save_online_model<T: Scalar>(path: &Path, model: &OnlineModel<T>) -> Result<()> {
    fs::write(path, online_model_to_json(model)?)?;
    Ok(())
}

pub fn load_online_model<T: Scalar>(path: &Path) -> Result<OnlineModel<T>> {
    online_model_from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportInstanceDto {
    mu: Vec<f64>,
    error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportDto {
    t_star: f64,
    extrapolated: bool,
    count: usize,
    mean: f64,
    std: f64,
    instances: Vec<ReportInstanceDto>,
}

pub fn report_to_json<T: Scalar>(report: &ErrorReport<T>) -> Result<String> {
    let dto = ReportDto {
        t_star: to_f64(report.t_star),
        extrapolated: report.extrapolated,
        count: report.count(),
        mean: to_f64(report.mean),
        std: to_f64(report.std),
        instances: report
            .errors
            .iter()
            .map(|(mu, e)| ReportInstanceDto {
                mu: vector_dto(mu),
                error: to_f64(*e),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

/// Loads a report and re-derives its aggregates from the instance list;
/// stored mean and standard deviation must agree to 1e-14.
pub fn report_from_json<T: Scalar>(json: &str) -> Result<ErrorReport<T>> {
    let dto: ReportDto = serde_json::from_str(json)?;
    if dto.instances.len() != dto.count {
        return Err(Error::DataFormat(format!(
            "report lists {} instances but claims {}",
            dto.instances.len(),
            dto.count
        )));
    }
    let errors = dto
        .instances
        .iter()
        .map(|i| (vector_from_dto(&i.mu), real(i.error)))
        .collect();
    let report = ErrorReport::from_errors(real(dto.t_star), dto.extrapolated, errors)?;
    let tol = |x: f64| 1e-14 * x.abs().max(1.0);
    if (to_f64(report.mean) - dto.mean).abs() > tol(dto.mean)
        || (to_f64(report.std) - dto.std).abs() > tol(dto.std)
    {
        return Err(Error::DataFormat(
            "stored report moments disagree with the per-instance errors".into(),
        ));
    }
    Ok(report)
}

pub fn save_report<T: Scalar>(path: &Path, report: &ErrorReport<T>) -> Result<()> {
    fs::write(path, report_to_json(report)?)?;
    Ok(())
}

pub fn load_report<T: Scalar>(path: &Path) -> Result<ErrorReport<T>> {
    report_from_json(&fs::read_to_string(path)?)
}
