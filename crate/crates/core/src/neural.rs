//! From-scratch multilayer perceptron mapping parameters to states.
//!
//! The network is a plain composition of affine layers with an elementwise
//! activation on every hidden layer and a linear output layer. Training is
//! mini-batch Adam on the mean squared error, with validation-based early
//! stopping that returns the parameters of the best validation epoch.
//!
//! Inputs are scaled onto [−1,1] per dimension using the training-parameter
//! box; outputs are standardized per dimension. All recorded losses live in
//! that scaled space, which keeps loss magnitudes comparable across systems
//! whose states differ by orders of magnitude.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Snake activation x + sin²(a·x)/a; strictly monotone for every a > 0, with
/// derivative 1 + sin(2ax).
pub fn snake<T: Scalar>(a: T, x: T) -> T {
    let s = (a * x).sin();
    x + s * s / a
}

/// Hidden-layer activation choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation<T: Scalar> {
    Snake { a: T },
    Relu,
    Tanh,
}

impl<T: Scalar> Activation<T> {
    pub fn snake_default() -> Self {
        Activation::Snake { a: T::one() }
    }

    fn validate(&self) -> Result<()> {
        if let Activation::Snake { a } = self {
            if !(*a > T::zero()) || !a.is_finite() {
                return Err(Error::InvalidArgument(
                    "snake activation frequency must be finite and > 0".into(),
                ));
            }
        }
        Ok(())
    }

    fn apply(&self, z: T) -> T {
        match *self {
            Activation::Snake { a } => snake(a, z),
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(&self, z: T) -> T {
        match *self {
            Activation::Snake { a } => T::one() + (real::<T>(2.0) * a * z).sin(),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
        }
    }
}

/// Architecture and optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig<T: Scalar> {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation<T>,
    pub learning_rate: T,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl<T: Scalar> MlpConfig<T> {
    /// Defaults: snake(1) activation, Adam at 1e-3, batch 32, up to 5000
    /// epochs with patience 200.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            output_dim,
            hidden_layers: Vec::new(),
            activation: Activation::snake_default(),
            learning_rate: real(1e-3),
            max_epochs: 5000,
            patience: 200,
            batch_size: 32,
            seed: 0,
        }
    }

    /// Three snake hidden layers of 32 neurons: the predator–prey preset.
    pub fn preset_lv(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        MlpConfig {
            hidden_layers: vec![32, 32, 32],
            activation: Activation::snake_default(),
            seed,
            ..MlpConfig::new(input_dim, output_dim)
        }
    }

    /// Four tanh hidden layers of 110 neurons: the PDE preset.
    pub fn preset_pde(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        MlpConfig {
            hidden_layers: vec![110, 110, 110, 110],
            activation: Activation::Tanh,
            seed,
            ..MlpConfig::new(input_dim, output_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "network input and output dimensions must be ≥ 1".into(),
            ));
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument(
                "hidden layer widths must be ≥ 1".into(),
            ));
        }
        self.activation.validate()?;
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(
                "learning rate must be finite and > 0".into(),
            ));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "max_epochs and batch_size must be ≥ 1".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument(
                "patience cannot exceed max_epochs".into(),
            ));
        }
        Ok(())
    }
}

/// Per-dimension affine map y = (x − shift) / scale, with exact inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineScaler<T: Scalar> {
    shift: DVector<T>,
    scale: DVector<T>,
}

impl<T: Scalar> AffineScaler<T> {
    pub fn identity(dim: usize) -> Self {
        AffineScaler {
            shift: DVector::zeros(dim),
            scale: DVector::from_element(dim, T::one()),
        }
    }

    /// Maps the per-dimension [min, max] box of the samples onto [−1, 1].
    /// Degenerate dimensions (max = min) map to 0.
    pub fn fit_minmax(samples: &DMatrix<T>) -> Self {
        let dim = samples.nrows();
        let mut shift = DVector::zeros(dim);
        let mut scale = DVector::from_element(dim, T::one());
        let half = real::<T>(0.5);
        for i in 0..dim {
            let row = samples.row(i);
            let mut lo = row[0];
            let mut hi = row[0];
            for &v in row.iter() {
                if v < lo {
                    lo = v;
                }
                if v > hi {
                    hi = v;
                }
            }
            shift[i] = (lo + hi) * half;
            let s = (hi - lo) * half;
            scale[i] = if s > T::zero() { s } else { T::one() };
        }
        AffineScaler { shift, scale }
    }

    /// Standardizes each dimension to zero mean and unit (population) standard
    /// deviation. Constant dimensions keep unit scale.
    pub fn fit_standardize(samples: &DMatrix<T>) -> Self {
        let dim = samples.nrows();
        let n = real::<T>(samples.ncols() as f64);
        let mut shift = DVector::zeros(dim);
        let mut scale = DVector::from_element(dim, T::one());
        for i in 0..dim {
            let row = samples.row(i);
            let mean = row.iter().fold(T::zero(), |a, &b| a + b) / n;
            let var = row
                .iter()
                .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean))
                / n;
            shift[i] = mean;
            let sd = var.sqrt();
            scale[i] = if sd > T::zero() { sd } else { T::one() };
        }
        AffineScaler { shift, scale }
    }

    pub fn from_parts(shift: DVector<T>, scale: DVector<T>) -> Result<Self> {
        if shift.nrows() != scale.nrows() {
            return Err(Error::DimensionMismatch {
                context: "scaler shift/scale length",
                expected: shift.nrows(),
                got: scale.nrows(),
            });
        }
        if shift.iter().any(|v| !v.is_finite())
            || scale.iter().any(|v| !v.is_finite() || *v == T::zero())
        {
            return Err(Error::NonFinite("scaler parameters"));
        }
        Ok(AffineScaler { shift, scale })
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_fn(x.nrows(), |i, _| (x[i] - self.shift[i]) / self.scale[i])
    }

    pub fn apply_matrix(&self, x: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.shift[i]) / self.scale[i]
        })
    }

    pub fn invert(&self, y: &DVector<T>) -> DVector<T> {
        DVector::from_fn(y.nrows(), |i, _| y[i] * self.scale[i] + self.shift[i])
    }

    pub fn dim(&self) -> usize {
        self.shift.nrows()
    }

    pub fn shift(&self) -> &DVector<T> {
        &self.shift
    }

    pub fn scale(&self) -> &DVector<T> {
        &self.scale
    }

    /// True when x lies outside the fitted box by more than a relative slack.
    pub fn is_outside_unit_box(&self, x: &DVector<T>) -> bool {
        let limit = T::one() + real::<T>(1e-9);
        self.apply(x).iter().any(|v| v.abs() > limit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Scalar> {
    /// out×in weight matrix.
    pub weight: DMatrix<T>,
    pub bias: DVector<T>,
}

/// Losses recorded for one epoch, in scaled space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss<T: Scalar> {
    pub train: T,
    pub valid: T,
}

/// Trained parameter-to-state map, tagged with the time instant it serves.
#[derive(Debug, Clone)]
pub struct NeuralMap<T: Scalar> {
    config: MlpConfig<T>,
    layers: Vec<Layer<T>>,
    input_scaler: AffineScaler<T>,
    output_scaler: AffineScaler<T>,
    train_history: Vec<EpochLoss<T>>,
    best_validation_loss: T,
    t_star: T,
}

impl<T: Scalar> NeuralMap<T> {
    /// Trains on column-sample matrices (inputs N_p×N, targets N_out×N).
    ///
    /// The validation pair steers early stopping; when it is empty the
    /// training loss is monitored instead. Returns the parameters of the
    /// epoch with the lowest monitored loss.
    pub fn train(
        inputs: &DMatrix<T>,
        targets: &DMatrix<T>,
        valid_inputs: &DMatrix<T>,
        valid_targets: &DMatrix<T>,
        config: MlpConfig<T>,
        t_star: T,
    ) -> Result<Self> {
        config.validate()?;
        let n = inputs.ncols();
        if n == 0 {
            return Err(Error::Empty("training data"));
        }
        if inputs.nrows() != config.input_dim {
            return Err(Error::DimensionMismatch {
                context: "training input dimension",
                expected: config.input_dim,
                got: inputs.nrows(),
            });
        }
        if targets.nrows() != config.output_dim || targets.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "training target shape",
                expected: config.output_dim,
                got: targets.nrows(),
            });
        }
        let has_valid = valid_inputs.ncols() > 0;
        if has_valid
            && (valid_inputs.nrows() != config.input_dim
                || valid_targets.nrows() != config.output_dim
                || valid_targets.ncols() != valid_inputs.ncols())
        {
            return Err(Error::DimensionMismatch {
                context: "validation data shape",
                expected: config.input_dim,
                got: valid_inputs.nrows(),
            });
        }
        if inputs.iter().any(|v| !v.is_finite())
            || targets.iter().any(|v| !v.is_finite())
            || valid_inputs.iter().any(|v| !v.is_finite())
            || valid_targets.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("training data"));
        }

        let input_scaler = AffineScaler::fit_minmax(inputs);
        let output_scaler = AffineScaler::fit_standardize(targets);
        let x = input_scaler.apply_matrix(inputs);
        let y = output_scaler.apply_matrix(targets);
        let (xv, yv) = if has_valid {
            (
                input_scaler.apply_matrix(valid_inputs),
                output_scaler.apply_matrix(valid_targets),
            )
        } else {
            (DMatrix::zeros(config.input_dim, 0), DMatrix::zeros(config.output_dim, 0))
        };

        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let mut layers = initialize_layers(&config, &mut rng);
        let mut adam = AdamState::new(&layers);
        let activation = config.activation;

        let mut history = Vec::new();
        let mut best_loss = T::max_value().unwrap_or_else(T::one);
        let mut best_layers = layers.clone();
        let mut epochs_since_best = 0usize;
        let mut order: Vec<usize> = (0..n).collect();

        for epoch in 0..config.max_epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = T::zero();
            for chunk in order.chunks(config.batch_size) {
                let xb = gather_columns(&x, chunk);
                let yb = gather_columns(&y, chunk);
                let batch_loss =
                    adam.step(&mut layers, &activation, &xb, &yb, config.learning_rate);
                loss_sum += batch_loss * real::<T>(chunk.len() as f64);
            }
            let train_loss = loss_sum / real::<T>(n as f64);
            let valid_loss = if has_valid {
                batch_mse(&layers, &activation, &xv, &yv)
            } else {
                train_loss
            };
            if !train_loss.is_finite() || !valid_loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            history.push(EpochLoss {
                train: train_loss,
                valid: valid_loss,
            });
            if valid_loss < best_loss {
                best_loss = valid_loss;
                best_layers.clone_from(&layers);
                epochs_since_best = 0;
            } else {
                epochs_since_best += 1;
                if epochs_since_best >= config.patience {
                    break;
                }
            }
        }

        Ok(NeuralMap {
            config,
            layers: best_layers,
            input_scaler,
            output_scaler,
            train_history: history,
            best_validation_loss: best_loss,
            t_star,
        })
    }

    /// Evaluates the map: scale input, run the layer composition, unscale.
    pub fn forward(&self, mu: &DVector<T>) -> Result<DVector<T>> {
        if mu.nrows() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                context: "network input dimension",
                expected: self.config.input_dim,
                got: mu.nrows(),
            });
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let mut a = self.input_scaler.apply(mu);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weight * a + &layer.bias;
            if l < last {
                z.apply(|v| *v = self.config.activation.apply(*v));
            }
            a = z;
        }
        Ok(self.output_scaler.invert(&a))
    }

    /// Mean squared error in the scaled space, the quantity recorded in
    /// `train_history`.
    pub fn scaled_mse(&self, inputs: &DMatrix<T>, targets: &DMatrix<T>) -> Result<T> {
        if inputs.ncols() == 0 || inputs.ncols() != targets.ncols() {
            return Err(Error::Empty("evaluation data"));
        }
        let x = self.input_scaler.apply_matrix(inputs);
        let y = self.output_scaler.apply_matrix(targets);
        Ok(batch_mse(&self.layers, &self.config.activation, &x, &y))
    }

    pub fn config(&self) -> &MlpConfig<T> {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_scaler(&self) -> &AffineScaler<T> {
        &self.input_scaler
    }

    pub fn output_scaler(&self) -> &AffineScaler<T> {
        &self.output_scaler
    }

    pub fn train_history(&self) -> &[EpochLoss<T>] {
        &self.train_history
    }

    pub fn best_validation_loss(&self) -> T {
        self.best_validation_loss
    }

    pub fn t_star(&self) -> T {
        self.t_star
    }

    /// Rebuilds a map from stored parts, checking the layer shape chain.
    pub fn from_parts(
        config: MlpConfig<T>,
        layers: Vec<Layer<T>>,
        input_scaler: AffineScaler<T>,
        output_scaler: AffineScaler<T>,
        best_validation_loss: T,
        t_star: T,
    ) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![config.input_dim];
        dims.extend_from_slice(&config.hidden_layers);
        dims.push(config.output_dim);
        if layers.len() != dims.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: "network layer count",
                expected: dims.len() - 1,
                got: layers.len(),
            });
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weight.nrows() != dims[l + 1]
                || layer.weight.ncols() != dims[l]
                || layer.bias.nrows() != dims[l + 1]
            {
                return Err(Error::DimensionMismatch {
                    context: "network layer shape",
                    expected: dims[l + 1],
                    got: layer.weight.nrows(),
                });
            }
            if layer.weight.iter().any(|v| !v.is_finite())
                || layer.bias.iter().any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        if input_scaler.dim() != config.input_dim || output_scaler.dim() != config.output_dim {
            return Err(Error::DimensionMismatch {
                context: "network scaler dimensions",
                expected: config.input_dim,
                got: input_scaler.dim(),
            });
        }
        Ok(NeuralMap {
            config,
            layers,
            input_scaler,
            output_scaler,
            train_history: Vec::new(),
            best_validation_loss,
            t_star,
        })
    }
}

/// Xavier-uniform weights, zero biases.
fn initialize_layers<T: Scalar>(config: &MlpConfig<T>, rng: &mut ChaCha12Rng) -> Vec<Layer<T>> {
    let mut dims = vec![config.input_dim];
    dims.extend_from_slice(&config.hidden_layers);
    dims.push(config.output_dim);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        // sample in f64 so f32 and f64 builds draw identical streams
        let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| {
            real::<T>(rng.random_range(-bound..bound))
        });
        layers.push(Layer {
            weight,
            bias: DVector::zeros(fan_out),
        });
    }
    layers
}

fn gather_columns<T: Scalar>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// Forward pass keeping pre-activations; returns (pre-activations, activations).
/// `activations[0]` is the input batch; the final activation is linear.
fn forward_batch<T: Scalar>(
    layers: &[Layer<T>],
    activation: &Activation<T>,
    x: &DMatrix<T>,
) -> (Vec<DMatrix<T>>, Vec<DMatrix<T>>) {
    let last = layers.len() - 1;
    let mut pre = Vec::with_capacity(layers.len());
    let mut act = Vec::with_capacity(layers.len() + 1);
    act.push(x.clone());
    for (l, layer) in layers.iter().enumerate() {
        let mut z = &layer.weight * act.last().unwrap();
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        pre.push(z.clone());
        if l < last {
            z.apply(|v| *v = activation.apply(*v));
        }
        act.push(z);
    }
    (pre, act)
}

fn batch_mse<T: Scalar>(
    layers: &[Layer<T>],
    activation: &Activation<T>,
    x: &DMatrix<T>,
    y: &DMatrix<T>,
) -> T {
    let (_, act) = forward_batch(layers, activation, x);
    let diff = act.last().unwrap() - y;
    diff.norm_squared() / real::<T>(x.ncols() as f64)
}

/// Loss and parameter gradients for one batch: L = (1/B)Σ‖ŷ−y‖².
///
/// The reverse-mode counterpart of a layer-stack forward pass, exposed so the
/// backpropagated gradients can be verified against finite differences and so
/// external training loops can drive the same primitive the built-in trainer
/// uses. Inputs and targets live in the scaled space.
pub fn loss_and_gradients<T: Scalar>(
    layers: &[Layer<T>],
    activation: &Activation<T>,
    x: &DMatrix<T>,
    y: &DMatrix<T>,
) -> (T, Vec<Layer<T>>) {
    let batch = real::<T>(x.ncols() as f64);
    let (pre, act) = forward_batch(layers, activation, x);
    let diff = act.last().unwrap() - y;
    let loss = diff.norm_squared() / batch;

    let mut grads: Vec<Layer<T>> = Vec::with_capacity(layers.len());
    let mut delta = diff * (real::<T>(2.0) / batch);
    for l in (0..layers.len()).rev() {
        let grad_w = &delta * act[l].transpose();
        let grad_b = DVector::from_fn(delta.nrows(), |i, _| {
            let mut s = T::zero();
            for j in 0..delta.ncols() {
                s += delta[(i, j)];
            }
            s
        });
        grads.push(Layer {
            weight: grad_w,
            bias: grad_b,
        });
        if l > 0 {
            let mut back = layers[l].weight.tr_mul(&delta);
            for i in 0..back.nrows() {
                for j in 0..back.ncols() {
                    back[(i, j)] *= activation.derivative(pre[l - 1][(i, j)]);
                }
            }
            delta = back;
        }
    }
    grads.reverse();
    (loss, grads)
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct AdamState<T: Scalar> {
    m: Vec<Layer<T>>,
    v: Vec<Layer<T>>,
    t: i32,
}

impl<T: Scalar> AdamState<T> {
    fn new(layers: &[Layer<T>]) -> Self {
        let zeros = |l: &Layer<T>| Layer {
            weight: DMatrix::zeros(l.weight.nrows(), l.weight.ncols()),
            bias: DVector::zeros(l.bias.nrows()),
        };
        AdamState {
            m: layers.iter().map(zeros).collect(),
            v: layers.iter().map(zeros).collect(),
            t: 0,
        }
    }

    /// One Adam update on a batch; returns the pre-update batch loss.
    fn step(
        &mut self,
        layers: &mut [Layer<T>],
        activation: &Activation<T>,
        x: &DMatrix<T>,
        y: &DMatrix<T>,
        lr: T,
    ) -> T {
        let (loss, grads) = loss_and_gradients(layers, activation, x, y);
        self.t += 1;
        let b1 = real::<T>(ADAM_BETA1);
        let b2 = real::<T>(ADAM_BETA2);
        let eps = real::<T>(ADAM_EPS);
        let corr1 = T::one() - real::<T>(ADAM_BETA1.powi(self.t));
        let corr2 = T::one() - real::<T>(ADAM_BETA2.powi(self.t));
        for l in 0..layers.len() {
            update_tensor(
                &mut layers[l].weight,
                &grads[l].weight,
                &mut self.m[l].weight,
                &mut self.v[l].weight,
                b1,
                b2,
                corr1,
                corr2,
                lr,
                eps,
            );
            let (mb, vb) = (&mut self.m[l].bias, &mut self.v[l].bias);
            for i in 0..layers[l].bias.nrows() {
                let g = grads[l].bias[i];
                mb[i] = b1 * mb[i] + (T::one() - b1) * g;
                vb[i] = b2 * vb[i] + (T::one() - b2) * g * g;
                let mhat = mb[i] / corr1;
                let vhat = vb[i] / corr2;
                layers[l].bias[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        loss
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor<T: Scalar>(
    param: &mut DMatrix<T>,
    grad: &DMatrix<T>,
    m: &mut DMatrix<T>,
    v: &mut DMatrix<T>,
    b1: T,
    b2: T,
    corr1: T,
    corr2: T,
    lr: T,
    eps: T,
) {
    for i in 0..param.nrows() {
        for j in 0..param.ncols() {
            let g = grad[(i, j)];
            m[(i, j)] = b1 * m[(i, j)] + (T::one() - b1) * g;
            v[(i, j)] = b2 * v[(i, j)] + (T::one() - b2) * g * g;
            let mhat = m[(i, j)] / corr1;
            let vhat = v[(i, j)] / corr2;
            param[(i, j)] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn snake_fixed_points() {
        assert_eq!(snake(1.0, 0.0), 0.0);
        assert_relative_eq!(snake(1.0, std::f64::consts::PI), std::f64::consts::PI, max_relative = 1e-15);
    }

    #[test]
    fn snake_derivative_matches_finite_differences() {
        let a = 1.0;
        let x = std::f64::consts::FRAC_PI_4;
        let h = 1e-6;
        let fd = (snake(a, x + h) - snake(a, x - h)) / (2.0 * h);
        let analytic = Activation::Snake { a }.derivative(x);
        assert_relative_eq!(analytic, 2.0, max_relative = 1e-12);
        assert_relative_eq!(fd, analytic, max_relative = 1e-6);
    }

    #[test]
    fn snake_is_monotone_on_a_grid() {
        for a in [0.5, 1.0, 3.0] {
            let mut prev = snake(a, -10.0);
            let mut x = -10.0 + 1e-3;
            while x <= 10.0 {
                let cur = snake(a, x);
                assert!(cur >= prev - 1e-12, "snake({a}, {x}) decreased");
                prev = cur;
                x += 1e-3;
            }
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut config = MlpConfig::<f64>::new(3, 2);
        config.hidden_layers = vec![4];
        let layers = vec![
            Layer {
                weight: DMatrix::zeros(4, 3),
                bias: DVector::zeros(4),
            },
            Layer {
                weight: DMatrix::zeros(2, 4),
                bias: DVector::zeros(2),
            },
        ];
        let map = NeuralMap::from_parts(
            config,
            layers,
            AffineScaler::identity(3),
            AffineScaler::identity(2),
            0.0,
            1.0,
        )
        .unwrap();
        let out = map
            .forward(&DVector::from_column_slice(&[5.0, -3.0, 0.2]))
            .unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let config = MlpConfig::<f64>::new(3, 3);
        let layers = vec![Layer {
            weight: DMatrix::identity(3, 3),
            bias: DVector::zeros(3),
        }];
        let map = NeuralMap::from_parts(
            config,
            layers,
            AffineScaler::identity(3),
            AffineScaler::identity(3),
            0.0,
            0.5,
        )
        .unwrap();
        let mu = DVector::from_column_slice(&[1.5, -2.0, 0.25]);
        assert_eq!(map.forward(&mu).unwrap(), mu);
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        // independent scalar-loop evaluation of the same 2-16-3 snake network
        let mut config = MlpConfig::<f64>::new(2, 3);
        config.hidden_layers = vec![16];
        config.seed = 31;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let layers = initialize_layers(&config, &mut rng);
        let map = NeuralMap::from_parts(
            config,
            layers.clone(),
            AffineScaler::identity(2),
            AffineScaler::identity(3),
            0.0,
            0.0,
        )
        .unwrap();

        let mu = DVector::from_column_slice(&[0.3, -0.8]);
        let got = map.forward(&mu).unwrap();

        let mut hidden = vec![0.0f64; 16];
        for i in 0..16 {
            let mut z = layers[0].bias[i];
            for j in 0..2 {
                z += layers[0].weight[(i, j)] * mu[j];
            }
            hidden[i] = z + (1.0 * z).sin().powi(2) / 1.0;
        }
        for i in 0..3 {
            let mut z = layers[1].bias[i];
            for j in 0..16 {
                z += layers[1].weight[(i, j)] * hidden[j];
            }
            assert_relative_eq!(got[i], z, max_relative = 1e-12);
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let mut config = MlpConfig::<f64>::new(2, 2);
        config.hidden_layers = vec![8, 8];
        config.seed = 5;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let mut layers = initialize_layers(&config, &mut rng);
        let x = random_matrix(2, 5, 99);
        let y = random_matrix(2, 5, 100);
        let act = config.activation;

        let (_, grads) = loss_and_gradients(&layers, &act, &x, &y);

        let h = 1e-5;
        let mut checked = 0;
        let mut pick = ChaCha12Rng::seed_from_u64(7);
        while checked < 20 {
            let l = pick.random_range(0..layers.len());
            let is_bias = pick.random_range(0..4) == 0;
            let (analytic, numeric) = if is_bias {
                let i = pick.random_range(0..layers[l].bias.nrows());
                let orig = layers[l].bias[i];
                layers[l].bias[i] = orig + h;
                let (lp, _) = loss_and_gradients(&layers, &act, &x, &y);
                layers[l].bias[i] = orig - h;
                let (lm, _) = loss_and_gradients(&layers, &act, &x, &y);
                layers[l].bias[i] = orig;
                (grads[l].bias[i], (lp - lm) / (2.0 * h))
            } else {
                let i = pick.random_range(0..layers[l].weight.nrows());
                let j = pick.random_range(0..layers[l].weight.ncols());
                let orig = layers[l].weight[(i, j)];
                layers[l].weight[(i, j)] = orig + h;
                let (lp, _) = loss_and_gradients(&layers, &act, &x, &y);
                layers[l].weight[(i, j)] = orig - h;
                let (lm, _) = loss_and_gradients(&layers, &act, &x, &y);
                layers[l].weight[(i, j)] = orig;
                (grads[l].weight[(i, j)], (lp - lm) / (2.0 * h))
            };
            assert!(
                (analytic - numeric).abs() <= 1e-4 * numeric.abs().max(1e-8),
                "param ({l}, bias={is_bias}): analytic {analytic} vs numeric {numeric}"
            );
            checked += 1;
        }
    }

    #[test]
    fn linear_data_is_fit_to_near_machine_precision() {
        // y = A·µ + c is realizable by the linear-only network; Adam's noise
        // floor scales like lr², so a small rate reaches the 1e-8 target
        let a = DMatrix::from_column_slice(3, 2, &[1.0, -0.5, 2.0, 0.7, 0.3, -1.2]);
        let c = DVector::from_column_slice(&[0.1, -0.2, 0.05]);
        let inputs = random_matrix(2, 40, 1);
        let targets = {
            let mut t = &a * &inputs;
            for mut col in t.column_iter_mut() {
                col += &c;
            }
            t
        };
        let vin = random_matrix(2, 10, 2);
        let vtg = {
            let mut t = &a * &vin;
            for mut col in t.column_iter_mut() {
                col += &c;
            }
            t
        };
        let mut config = MlpConfig::<f64>::new(2, 3);
        config.learning_rate = 5e-5;
        config.max_epochs = 100_000;
        config.patience = 100_000;
        config.seed = 3;
        let map = NeuralMap::train(&inputs, &targets, &vin, &vtg, config, 0.0).unwrap();
        assert!(
            map.best_validation_loss() <= 1e-8,
            "validation MSE = {}",
            map.best_validation_loss()
        );
    }

    #[test]
    fn single_pair_is_interpolated() {
        let mu = DMatrix::from_column_slice(1, 1, &[0.4]);
        let y = DMatrix::from_column_slice(1, 1, &[2.5]);
        let mut config = MlpConfig::<f64>::new(1, 1);
        config.hidden_layers = vec![8];
        config.learning_rate = 5e-6;
        config.max_epochs = 150_000;
        config.patience = 150_000;
        config.seed = 11;
        let map = NeuralMap::train(&mu, &y, &mu, &y, config, 0.0).unwrap();
        assert!(
            map.best_validation_loss() <= 1e-10,
            "training loss = {}",
            map.best_validation_loss()
        );
    }

    #[test]
    fn returned_parameters_achieve_the_recorded_best_validation_loss() {
        // unrealizable noisy targets force validation loss to wander
        let inputs = random_matrix(2, 30, 4);
        let targets = random_matrix(1, 30, 5);
        let vin = random_matrix(2, 10, 6);
        let vtg = random_matrix(1, 10, 7);
        let mut config = MlpConfig::<f64>::new(2, 1);
        config.hidden_layers = vec![6];
        config.max_epochs = 300;
        config.patience = 300;
        config.seed = 8;
        let map = NeuralMap::train(&inputs, &targets, &vin, &vtg, config, 0.0).unwrap();
        let recorded_min = map
            .train_history()
            .iter()
            .map(|e| e.valid)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(map.best_validation_loss(), recorded_min, max_relative = 1e-12);
        let recomputed = map.scaled_mse(&vin, &vtg).unwrap();
        assert_relative_eq!(recomputed, recorded_min, max_relative = 1e-12);
    }

    #[test]
    fn early_stopping_halts_after_patience_epochs_without_improvement() {
        let inputs = random_matrix(2, 20, 9);
        let targets = random_matrix(1, 20, 10);
        let vin = random_matrix(2, 8, 11);
        let vtg = random_matrix(1, 8, 12);
        let mut config = MlpConfig::<f64>::new(2, 1);
        config.hidden_layers = vec![4];
        config.max_epochs = 5000;
        config.patience = 25;
        config.seed = 13;
        let map = NeuralMap::train(&inputs, &targets, &vin, &vtg, config, 0.0).unwrap();
        assert!(map.train_history().len() < 5000, "early stopping never fired");
        // the last `patience` epochs recorded no new best
        let h = map.train_history();
        let best = map.best_validation_loss();
        for e in &h[h.len() - 25..] {
            assert!(e.valid >= best);
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let inputs = random_matrix(2, 25, 14);
        let targets = random_matrix(2, 25, 15);
        let mut config = MlpConfig::<f64>::new(2, 2);
        config.hidden_layers = vec![8];
        config.max_epochs = 50;
        config.patience = 50;
        config.seed = 21;
        let a = NeuralMap::train(&inputs, &targets, &inputs, &targets, config.clone(), 0.0)
            .unwrap();
        let b = NeuralMap::train(&inputs, &targets, &inputs, &targets, config, 0.0).unwrap();
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            assert_eq!(la.weight, lb.weight);
            assert_eq!(la.bias, lb.bias);
        }
        assert_eq!(a.train_history(), b.train_history());
    }

    #[test]
    fn input_scaler_maps_training_box_to_unit_interval() {
        let samples = DMatrix::from_column_slice(2, 3, &[0.0, 10.0, 1.0, 20.0, 0.5, 15.0]);
        let scaler = AffineScaler::fit_minmax(&samples);
        let lo = scaler.apply(&DVector::from_column_slice(&[0.0, 10.0]));
        let hi = scaler.apply(&DVector::from_column_slice(&[1.0, 20.0]));
        assert_relative_eq!(lo[0], -1.0, max_relative = 1e-14);
        assert_relative_eq!(lo[1], -1.0, max_relative = 1e-14);
        assert_relative_eq!(hi[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(hi[1], 1.0, max_relative = 1e-14);
        assert!(!scaler.is_outside_unit_box(&DVector::from_column_slice(&[0.5, 12.0])));
        assert!(scaler.is_outside_unit_box(&DVector::from_column_slice(&[1.5, 12.0])));
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let mut c = MlpConfig::<f64>::new(2, 2);
        c.hidden_layers = vec![0];
        assert!(c.validate().is_err());
        let mut c = MlpConfig::<f64>::new(2, 2);
        c.patience = c.max_epochs + 1;
        assert!(c.validate().is_err());
        let mut c = MlpConfig::<f64>::new(2, 2);
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = MlpConfig::<f64>::new(2, 2);
        c.activation = Activation::Snake { a: 0.0 };
        assert!(c.validate().is_err());
        assert!(MlpConfig::<f64>::new(0, 2).validate().is_err());
    }

    #[test]
    fn divergent_training_reports_the_epoch() {
        let inputs = random_matrix(1, 10, 16);
        let targets = random_matrix(1, 10, 17) * 1e3;
        let mut config = MlpConfig::<f64>::new(1, 1);
        config.hidden_layers = vec![4];
        // one update of this size overflows the second layer's product to inf
        config.learning_rate = 1e200;
        config.max_epochs = 50;
        config.patience = 50;
        let result = NeuralMap::train(&inputs, &targets, &inputs, &targets, config, 0.0);
        assert!(matches!(result, Err(Error::TrainingDiverged { .. })));
    }

    #[test]
    fn presets_match_published_architectures() {
        let lv = MlpConfig::<f64>::preset_lv(1, 2, 0);
        assert_eq!(lv.hidden_layers, vec![32, 32, 32]);
        assert_eq!(lv.activation, Activation::Snake { a: 1.0 });
        let pde = MlpConfig::<f64>::preset_pde(1, 4, 0);
        assert_eq!(pde.hidden_layers, vec![110, 110, 110, 110]);
        assert_eq!(pde.activation, Activation::Tanh);
    }

    #[test]
    fn works_in_f32() {
        let inputs = DMatrix::<f32>::from_fn(1, 8, |_, j| j as f32 / 8.0);
        let targets = inputs.map(|v| 2.0 * v);
        let mut config = MlpConfig::<f32>::new(1, 1);
        config.max_epochs = 20;
        config.patience = 20;
        let map = NeuralMap::train(&inputs, &targets, &inputs, &targets, config, 0.0).unwrap();
        assert_eq!(map.train_history().len(), 20);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scaler_round_trip_is_exact(
            seed in 0u64..500,
            dim in 1usize..6,
            n in 2usize..10,
        ) {
            let samples = random_matrix(dim, n, seed) * 10.0;
            for scaler in [
                AffineScaler::fit_minmax(&samples),
                AffineScaler::fit_standardize(&samples),
            ] {
                let x = random_matrix(dim, 1, seed ^ 0x55).column(0).into_owned() * 5.0;
                let back = scaler.invert(&scaler.apply(&x));
                prop_assert!((&back - &x).norm() <= 1e-12 * x.norm().max(1.0));
            }
        }

        #[test]
        fn snake_stays_monotone(a in 0.1f64..5.0, x in -20.0f64..20.0, dx in 1e-6f64..0.1) {
            prop_assert!(snake(a, x + dx) >= snake(a, x) - 1e-12);
        }
    }
}
