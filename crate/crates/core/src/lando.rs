//! Kernel surrogate of the dynamics: fit, evaluate, and simulate.
//!
//! A surrogate has the form f(x) = W̃·k(X̃, x) with X̃ the sparse dictionary
//! and W̃ = Y·k(X̃, X)† solved by SVD pseudoinverse. In continuous mode the
//! targets Y are time-derivative estimates and the surrogate is integrated
//! with classical RK4; in discrete mode the targets are next-step states and
//! the surrogate is applied as an iteration map.
//!
//! States are rescaled per dimension to max |xᵢ| = 1 before any kernel
//! evaluation. Without this the almost-linear-dependence test is swamped by
//! round-off whenever state components are large or differ in magnitude
//! (e.g. a quadratic kernel on populations ~10² puts self-kernel values near
//! 10⁸, so the δ of a dependent candidate floats at condition·ε·10⁸ ≫ ν).
//! The factors are stored in the model and applied to every query; targets
//! and predictions stay in original units.

use nalgebra::{DMatrix, DMatrixView, DVector, SVD};

use crate::dictionary::SparseDictionary;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::scalar::{real, to_f64, Scalar};

/// Relative singular-value cutoff for the pseudoinverse solve.
pub const PINV_RCOND: f64 = 1e-10;

/// Whether targets are derivative estimates or next-step states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsMode {
    Continuous,
    Discrete,
}

/// Time-ordered snapshot matrix with regression targets.
///
/// States are columns of `x`, sampled on a uniformly spaced time grid. In
/// `Continuous` mode `y` holds one derivative estimate per snapshot; in
/// `Discrete` mode `y[:,j] = x[:,j+1]` and the regression inputs are the
/// first Nt−1 columns of `x`.
#[derive(Debug, Clone)]
pub struct SnapshotSet<T: Scalar> {
    x: DMatrix<T>,
    times: Vec<T>,
    mode: DynamicsMode,
    y: DMatrix<T>,
    dt: T,
}

impl<T: Scalar> SnapshotSet<T> {
    /// Continuous-mode set with caller-supplied derivative targets (one per
    /// snapshot column). Use [`continuous_fd`] to derive them from the states
    /// by finite differences.
    ///
    /// [`continuous_fd`]: SnapshotSet::continuous_fd
    pub fn continuous(x: DMatrix<T>, times: Vec<T>, y: DMatrix<T>) -> Result<Self> {
        let dt = validate_grid(&x, &times, 1)?;
        if y.nrows() != x.nrows() || y.ncols() != x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "derivative target shape",
                expected: x.ncols(),
                got: y.ncols(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("derivative targets"));
        }
        Ok(SnapshotSet {
            x,
            times,
            mode: DynamicsMode::Continuous,
            y,
            dt,
        })
    }

    /// Continuous-mode set with second-order finite-difference targets.
    pub fn continuous_fd(x: DMatrix<T>, times: Vec<T>) -> Result<Self> {
        let dt = validate_grid(&x, &times, 3)?;
        let y = derivative_targets(&x, dt)?;
        Ok(SnapshotSet {
            x,
            times,
            mode: DynamicsMode::Continuous,
            y,
            dt,
        })
    }

    /// Discrete-mode set: targets are the next-step states.
    pub fn discrete(x: DMatrix<T>, times: Vec<T>) -> Result<Self> {
        let dt = validate_grid(&x, &times, 2)?;
        let y = x.columns(1, x.ncols() - 1).into_owned();
        Ok(SnapshotSet {
            x,
            times,
            mode: DynamicsMode::Discrete,
            y,
            dt,
        })
    }

    /// Regression inputs: all snapshots in continuous mode, all but the last
    /// in discrete mode.
    pub fn inputs(&self) -> DMatrixView<'_, T> {
        match self.mode {
            DynamicsMode::Continuous => self.x.columns(0, self.x.ncols()),
            DynamicsMode::Discrete => self.x.columns(0, self.x.ncols() - 1),
        }
    }

    pub fn targets(&self) -> &DMatrix<T> {
        &self.y
    }

    pub fn states(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn mode(&self) -> DynamicsMode {
        self.mode
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn state_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }
}

/// Checks shape, finiteness, and a strictly increasing uniform time grid;
/// returns the grid spacing.
fn validate_grid<T: Scalar>(x: &DMatrix<T>, times: &[T], min_len: usize) -> Result<T> {
    if x.nrows() == 0 || x.ncols() < min_len {
        return Err(Error::Empty("snapshot matrix"));
    }
    if times.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "snapshot time grid length",
            expected: x.ncols(),
            got: times.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("snapshot data"));
    }
    if times.len() == 1 {
        return Ok(T::zero());
    }
    let dt = times[1] - times[0];
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(
            "snapshot times must be strictly increasing".into(),
        ));
    }
    let span = times[times.len() - 1] - times[0];
    let tol = real::<T>(1e-12) * if span > dt { span } else { dt };
    for j in 1..times.len() {
        let step = times[j] - times[j - 1];
        if (step - dt).abs() > tol {
            return Err(Error::InvalidArgument(
                "snapshot times must be uniformly spaced".into(),
            ));
        }
    }
    Ok(dt)
}

/// Second-order finite-difference time derivatives of the snapshot columns:
/// central stencils at interior columns, one-sided at both ends. Exact on
/// polynomials in t up to degree 2.
pub fn derivative_targets<T: Scalar>(x: &DMatrix<T>, dt: T) -> Result<DMatrix<T>> {
    let nt = x.ncols();
    if nt < 3 {
        return Err(Error::Empty(
            "finite-difference targets need at least 3 snapshots",
        ));
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument("snapshot spacing must be > 0".into()));
    }
    let two_dt = real::<T>(2.0) * dt;
    let three = real::<T>(3.0);
    let four = real::<T>(4.0);
    let mut y = DMatrix::zeros(x.nrows(), nt);
    for i in 0..x.nrows() {
        y[(i, 0)] = (-three * x[(i, 0)] + four * x[(i, 1)] - x[(i, 2)]) / two_dt;
        for j in 1..nt - 1 {
            y[(i, j)] = (x[(i, j + 1)] - x[(i, j - 1)]) / two_dt;
        }
        y[(i, nt - 1)] =
            (three * x[(i, nt - 1)] - four * x[(i, nt - 2)] + x[(i, nt - 3)]) / two_dt;
    }
    Ok(y)
}

/// Fitted kernel surrogate of the dynamics.
#[derive(Debug, Clone)]
pub struct LandoModel<T: Scalar> {
    /// Dictionary in scaled coordinates (columns are scaling ∘ x̃).
    dictionary: SparseDictionary<T>,
    /// W̃, one weight column per dictionary member.
    weights: DMatrix<T>,
    mode: DynamicsMode,
    /// Relative Frobenius residual ‖Y − W̃·k(X̃,X)‖ / ‖Y‖ on the training set.
    fit_residual: T,
    /// Per-dimension factors applied to states before kernel evaluation.
    scaling: DVector<T>,
}

impl<T: Scalar> LandoModel<T> {
    /// Fits the surrogate: sparse dictionary selection followed by the
    /// pseudoinverse weight solve W̃ = Y·k(X̃,X)†.
    pub fn fit(
        snapshots: &SnapshotSet<T>,
        kernel: KernelSpec<T>,
        nu: T,
        seed: u64,
    ) -> Result<Self> {
        let scaling = row_scaling(snapshots.states());
        let scaled = scale_rows(snapshots.inputs(), &scaling);
        let dictionary = SparseDictionary::build(kernel, &scaled, nu, seed)?;
        let k = kernel.eval_matrix(dictionary.columns(), &scaled)?;
        let y = snapshots.targets();

        let svd = SVD::new(k.clone(), true, true);
        let u = svd.u.as_ref().expect("SVD with compute_u");
        let v_t = svd.v_t.as_ref().expect("SVD with compute_v");
        let sigma_max = svd
            .singular_values
            .iter()
            .fold(T::zero(), |m, &s| if s > m { s } else { m });
        if !(sigma_max > T::zero()) || !sigma_max.is_finite() {
            return Err(Error::DegenerateKernelMatrix);
        }
        let cutoff = real::<T>(PINV_RCOND) * sigma_max;
        if svd.singular_values.iter().all(|&s| s < cutoff) {
            return Err(Error::DegenerateKernelMatrix);
        }

        // W̃ = (Y·Vᵀᵀ) Σ⁺ Uᵀ with small singular values dropped.
        let mut projected = y * v_t.transpose();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            let inv = if s >= cutoff { T::one() / s } else { T::zero() };
            projected.column_mut(i).scale_mut(inv);
        }
        let weights = projected * u.transpose();

        let y_norm = y.norm();
        let fit_residual = if y_norm > T::zero() {
            (y - &weights * &k).norm() / y_norm
        } else {
            T::zero()
        };

        Ok(LandoModel {
            dictionary,
            weights,
            mode: snapshots.mode(),
            fit_residual,
            scaling,
        })
    }

    /// Surrogate dynamics f(x) = W̃·k(X̃, x).
    pub fn predict_dynamics(&self, x: &DVector<T>) -> Result<DVector<T>> {
        if x.nrows() != self.scaling.nrows() {
            return Err(Error::DimensionMismatch {
                context: "query state dimension",
                expected: self.scaling.nrows(),
                got: x.nrows(),
            });
        }
        let xs = x.component_mul(&self.scaling);
        let kvec = self.dictionary.kernel_vector(&xs)?;
        Ok(&self.weights * kvec)
    }

    /// Integrates dx/dt = f(x) with fixed-step classical RK4 from t = 0.
    ///
    /// The trajectory starts at x0 and ends exactly at t_end; when t_end is
    /// not a step multiple the final step is shortened to land on it.
    pub fn integrate(&self, x0: &DVector<T>, t_end: T, step: T) -> Result<Trajectory<T>> {
        if self.mode != DynamicsMode::Continuous {
            return Err(Error::InvalidArgument(
                "integrate requires a continuous-mode model".into(),
            ));
        }
        if !(t_end > T::zero()) || !(step > T::zero()) {
            return Err(Error::InvalidArgument(
                "integration horizon and step must be > 0".into(),
            ));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }

        let ratio = to_f64(t_end / step);
        let n_full = (ratio * (1.0 + 4.0 * f64::EPSILON)).floor() as usize;
        let mut remainder = t_end - real::<T>(n_full as f64) * step;
        if n_full > 0 && remainder <= real::<T>(1e-10) * step {
            // t_end is a step multiple; the last full step lands on it.
            remainder = T::zero();
        }

        let mut times = Vec::with_capacity(n_full + 2);
        let mut states = Vec::with_capacity(n_full + 2);
        times.push(T::zero());
        states.push(x0.clone());
        let mut x = x0.clone();
        for k in 1..=n_full {
            let at_end = k == n_full && remainder == T::zero();
            let t = if at_end { t_end } else { step * real::<T>(k as f64) };
            x = self.rk4_step(&x, step, t)?;
            times.push(t);
            states.push(x.clone());
        }
        if remainder > T::zero() {
            x = self.rk4_step(&x, remainder, t_end)?;
            times.push(t_end);
            states.push(x);
        }
        Ok(Trajectory {
            times,
            states: DMatrix::from_columns(&states),
        })
    }

    /// Applies the discrete surrogate map `steps` times, returning all
    /// steps+1 states including x0. Trajectory times carry the step index.
    pub fn rollout(&self, x0: &DVector<T>, steps: usize) -> Result<Trajectory<T>> {
        if self.mode != DynamicsMode::Discrete {
            return Err(Error::InvalidArgument(
                "rollout requires a discrete-mode model".into(),
            ));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        times.push(T::zero());
        states.push(x0.clone());
        let mut x = x0.clone();
        for j in 1..=steps {
            x = self.predict_dynamics(&x).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { time: j as f64 },
                other => other,
            })?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { time: j as f64 });
            }
            times.push(real::<T>(j as f64));
            states.push(x.clone());
        }
        Ok(Trajectory {
            times,
            states: DMatrix::from_columns(&states),
        })
    }

    fn rk4_step(&self, x: &DVector<T>, h: T, t_next: T) -> Result<DVector<T>> {
        let half = real::<T>(0.5);
        let sixth = real::<T>(1.0 / 6.0);
        let two = real::<T>(2.0);
        let step = || -> Result<DVector<T>> {
            let k1 = self.predict_dynamics(x)?;
            let k2 = self.predict_dynamics(&(x + &k1 * (h * half)))?;
            let k3 = self.predict_dynamics(&(x + &k2 * (h * half)))?;
            let k4 = self.predict_dynamics(&(x + &k3 * h))?;
            Ok(x + (k1 + k2 * two + k3 * two + k4) * (h * sixth))
        };
        let next = step().map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged {
                time: to_f64(t_next),
            },
            other => other,
        })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                time: to_f64(t_next),
            });
        }
        Ok(next)
    }

    pub fn dictionary(&self) -> &SparseDictionary<T> {
        &self.dictionary
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        self.dictionary.kernel()
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    pub fn mode(&self) -> DynamicsMode {
        self.mode
    }

    pub fn fit_residual(&self) -> T {
        self.fit_residual
    }

    /// Per-dimension state factors applied before kernel evaluation.
    pub fn scaling(&self) -> &DVector<T> {
        &self.scaling
    }

    pub fn state_dim(&self) -> usize {
        self.dictionary.state_dim()
    }

    /// Rebuilds a model from stored parts (persistence path). The residual is
    /// carried through as recorded; `verify_residual` recomputes it.
    pub fn from_parts(
        dictionary: SparseDictionary<T>,
        weights: DMatrix<T>,
        mode: DynamicsMode,
        fit_residual: T,
        scaling: DVector<T>,
    ) -> Result<Self> {
        if weights.ncols() != dictionary.size() {
            return Err(Error::DimensionMismatch {
                context: "weight matrix columns vs dictionary size",
                expected: dictionary.size(),
                got: weights.ncols(),
            });
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight matrix"));
        }
        if scaling.nrows() != dictionary.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "scaling vector length vs state dimension",
                expected: dictionary.state_dim(),
                got: scaling.nrows(),
            });
        }
        if scaling.iter().any(|s| !s.is_finite() || !(*s > T::zero())) {
            return Err(Error::InvalidArgument(
                "scaling factors must be finite and > 0".into(),
            ));
        }
        Ok(LandoModel {
            dictionary,
            weights,
            mode,
            fit_residual,
            scaling,
        })
    }

    /// Recomputes the relative training residual on a snapshot set using the
    /// stored scaling.
    pub fn verify_residual(&self, snapshots: &SnapshotSet<T>) -> Result<T> {
        if snapshots.state_dim() != self.scaling.nrows() {
            return Err(Error::DimensionMismatch {
                context: "snapshot state dimension",
                expected: self.scaling.nrows(),
                got: snapshots.state_dim(),
            });
        }
        let scaled = scale_rows(snapshots.inputs(), &self.scaling);
        let k = self.kernel().eval_matrix(self.dictionary.columns(), &scaled)?;
        let y = snapshots.targets();
        let y_norm = y.norm();
        if y_norm > T::zero() {
            Ok((y - &self.weights * k).norm() / y_norm)
        } else {
            Ok(T::zero())
        }
    }
}

/// Per-dimension factors 1/max|xᵢ| over the snapshot columns. Dimensions that
/// are identically zero get factor 1 so scaling is never singular.
fn row_scaling<T: Scalar>(states: &DMatrix<T>) -> DVector<T> {
    DVector::from_iterator(
        states.nrows(),
        states.row_iter().map(|row| {
            let peak = row.iter().fold(T::zero(), |acc, v| {
                let a = v.abs();
                if a > acc {
                    a
                } else {
                    acc
                }
            });
            if peak > T::zero() {
                T::one() / peak
            } else {
                T::one()
            }
        }),
    )
}

/// Multiplies row i of the matrix by factors[i].
fn scale_rows<T: Scalar>(m: DMatrixView<'_, T>, factors: &DVector<T>) -> DMatrix<T> {
    let mut out = m.into_owned();
    for i in 0..out.nrows() {
        let f = factors[i];
        out.row_mut(i).iter_mut().for_each(|v| *v *= f);
    }
    out
}

/// Simulated trajectory: states as columns, one time per column.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<T>,
    pub states: DMatrix<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> DVector<T> {
        self.states.column(self.states.ncols() - 1).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(t0: f64, t_end: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|j| t0 + (t_end - t0) * j as f64 / (n - 1) as f64)
            .collect()
    }

    /// 20 discrete snapshots of x_{j+1} = diag(0.9, 0.8)·x_j from [1,1].
    fn dmd_model() -> LandoModel<f64> {
        let mut cols = Vec::new();
        let (mut a, mut b) = (1.0f64, 1.0f64);
        for _ in 0..20 {
            cols.push(DVector::from_column_slice(&[a, b]));
            a *= 0.9;
            b *= 0.8;
        }
        let x = DMatrix::from_columns(&cols);
        let times = grid(0.0, 19.0, 20);
        let snaps = SnapshotSet::discrete(x, times).unwrap();
        LandoModel::fit(&snaps, KernelSpec::linear(), 1e-12, 4).unwrap()
    }

    /// Continuous surrogate of dx/dt = −x fitted from analytic states and targets.
    fn decay_model() -> LandoModel<f64> {
        let times = grid(0.0, 3.0, 61);
        let x = DMatrix::from_fn(1, 61, |_, j| (-times[j]).exp());
        let y = x.map(|v| -v);
        let snaps = SnapshotSet::continuous(x, times, y).unwrap();
        LandoModel::fit(&snaps, KernelSpec::linear(), 1e-12, 0).unwrap()
    }

    #[test]
    fn derivative_targets_vanish_on_constants() {
        let x = DMatrix::<f64>::from_element(3, 7, 4.2);
        let y = derivative_targets(&x, 0.1).unwrap();
        // one-sided end stencils cancel only to round-off
        assert!(y.iter().all(|&v| v.abs() <= 1e-13));
    }

    #[test]
    fn derivative_targets_exact_on_linear_states() {
        let times = grid(0.0, 1.0, 11);
        let x = DMatrix::from_fn(2, 11, |i, j| (i as f64 + 1.0) * times[j]);
        let y = derivative_targets(&x, 0.1).unwrap();
        for i in 0..2 {
            for j in 0..11 {
                assert_relative_eq!(y[(i, j)], i as f64 + 1.0, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn central_difference_exact_on_quadratic() {
        let times = grid(0.0, 1.0, 11);
        let x = DMatrix::from_fn(1, 11, |_, j| times[j] * times[j]);
        let y = derivative_targets(&x, 0.1).unwrap();
        // d(t²)/dt at t=0.5 is 1; the stencil is exact on quadratics
        assert_relative_eq!(y[(0, 5)], 1.0, max_relative = 1e-13);
        // one-sided ends are second order, also exact here
        assert_relative_eq!(y[(0, 0)], 0.0, epsilon = 1e-13);
        assert_relative_eq!(y[(0, 10)], 2.0, max_relative = 1e-13);
    }

    #[test]
    fn derivative_targets_need_three_columns() {
        let x = DMatrix::<f64>::zeros(2, 2);
        assert!(derivative_targets(&x, 0.1).is_err());
    }

    #[test]
    fn zero_targets_give_zero_model() {
        let times = grid(0.0, 1.0, 5);
        let x = DMatrix::from_fn(2, 5, |i, j| (i + j + 1) as f64);
        let y = DMatrix::zeros(2, 5);
        let snaps = SnapshotSet::continuous(x, times, y).unwrap();
        let model = LandoModel::fit(&snaps, KernelSpec::quadratic(), 1e-8, 0).unwrap();
        assert!(model.weights().iter().all(|&w| w == 0.0));
        let f = model
            .predict_dynamics(&DVector::from_column_slice(&[3.0, -1.0]))
            .unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
        assert_eq!(model.fit_residual(), 0.0);
    }

    #[test]
    fn linear_kernel_recovers_linear_dynamics_exactly() {
        let model = dmd_model();
        // held-out states: the map must reproduce A·x
        for x in [
            DVector::from_column_slice(&[2.0, 3.0]),
            DVector::from_column_slice(&[-1.0, 0.5]),
            DVector::from_column_slice(&[10.0, -7.0]),
        ] {
            let fx = model.predict_dynamics(&x).unwrap();
            let ax = DVector::from_column_slice(&[0.9 * x[0], 0.8 * x[1]]);
            assert!((fx - &ax).norm() <= 1e-8 * ax.norm());
        }
        assert!(model.fit_residual() <= 1e-10);
    }

    #[test]
    fn dmd_prediction_matches_hand_computation() {
        let fx = dmd_model()
            .predict_dynamics(&DVector::from_column_slice(&[2.0, 3.0]))
            .unwrap();
        assert_relative_eq!(fx[0], 1.8, max_relative = 1e-8);
        assert_relative_eq!(fx[1], 2.4, max_relative = 1e-8);
    }

    #[test]
    fn dictionary_columns_map_to_their_targets_when_kernel_matrix_is_square() {
        // all four inputs independent → m = Nt' and K is square full-rank,
        // so the fit interpolates: f(x̃_j) equals the target column of x̃_j
        let x = DMatrix::<f64>::from_column_slice(
            3,
            5,
            &[
                1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, //
                1.0, 1.0, 0.0, //
                0.5, -0.3, 0.9,
            ],
        );
        let snaps = SnapshotSet::discrete(x, grid(0.0, 4.0, 5)).unwrap();
        let model = LandoModel::fit(&snaps, KernelSpec::quadratic(), 1e-10, 2).unwrap();
        assert_eq!(model.dictionary().size(), 4);
        // dictionary columns live in scaled coordinates
        let scaled = scale_rows(snaps.inputs(), model.scaling());
        for j in 0..model.dictionary().size() {
            let input_idx = (0..scaled.ncols())
                .find(|&c| scaled.column(c) == model.dictionary().columns().column(j))
                .expect("dictionary member must be a scaled input column");
            let member = snaps.inputs().column(input_idx).into_owned();
            let f = model.predict_dynamics(&member).unwrap();
            let target = snaps.targets().column(input_idx);
            assert!((f - target).norm() <= 1e-8 * target.norm().max(1.0));
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal_to_regressors() {
        // tall noisy data: residual nonzero but (Y−W̃K)Kᵀ ≈ 0
        let mut state = 1234567u64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let x = DMatrix::from_fn(3, 40, |_, _| rand01() * 2.0 - 1.0);
        let y = DMatrix::from_fn(3, 40, |_, _| rand01() * 2.0 - 1.0);
        let snaps = SnapshotSet::continuous(x, grid(0.0, 1.0, 40), y).unwrap();
        let model = LandoModel::fit(&snaps, KernelSpec::<f64>::gaussian(1.0).unwrap(), 1e-3, 8)
            .unwrap();
        assert!(model.fit_residual() > 1e-6, "data should not be exactly representable");
        let scaled = scale_rows(snaps.inputs(), model.scaling());
        let k = model
            .kernel()
            .eval_matrix(model.dictionary().columns(), &scaled)
            .unwrap();
        let resid = snaps.targets() - model.weights() * &k;
        let normal = &resid * k.transpose();
        assert!(normal.norm() <= 1e-8 * snaps.targets().norm() * k.norm());
    }

    #[test]
    fn scaling_normalizes_each_dimension_to_unit_peak() {
        // rows spanning nine orders of magnitude plus an identically-zero row
        let x = DMatrix::<f64>::from_column_slice(
            3,
            4,
            &[
                2.0e6, 1.0e-3, 0.0, //
                -4.0e6, 3.0e-3, 0.0, //
                1.0e6, -2.0e-3, 0.0, //
                3.0e6, 4.0e-3, 0.0,
            ],
        );
        let snaps = SnapshotSet::discrete(x, grid(0.0, 3.0, 4)).unwrap();
        let model = LandoModel::fit(&snaps, KernelSpec::quadratic(), 1e-8, 1).unwrap();
        assert_relative_eq!(model.scaling()[0], 1.0 / 4.0e6, max_relative = 1e-14);
        assert_relative_eq!(model.scaling()[1], 1.0 / 4.0e-3, max_relative = 1e-14);
        assert_eq!(model.scaling()[2], 1.0);
        // with all three inputs independent the fit interpolates regardless
        // of the original magnitudes
        let inputs = snaps.inputs();
        for j in 0..inputs.ncols() {
            let f = model.predict_dynamics(&inputs.column(j).into_owned()).unwrap();
            let target = snaps.targets().column(j);
            assert!((f - target).norm() <= 1e-6 * target.norm());
        }
    }

    #[test]
    fn prediction_rejects_wrong_query_dimension() {
        let model = dmd_model();
        assert!(model
            .predict_dynamics(&DVector::from_column_slice(&[1.0, 2.0, 3.0]))
            .is_err());
    }

    #[test]
    fn integrate_matches_analytic_exponential() {
        let model = decay_model();
        let x0 = DVector::from_column_slice(&[1.0]);
        let traj = model.integrate(&x0, 1.0, 0.01).unwrap();
        assert_eq!(*traj.times.last().unwrap(), 1.0);
        assert_relative_eq!(traj.final_state()[0], (-1.0f64).exp(), epsilon = 1e-6);
        // trajectory includes the initial state
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(traj.states.column(0), x0.column(0));
    }

    #[test]
    fn integrator_is_fourth_order() {
        let model = decay_model();
        let x0 = DVector::from_column_slice(&[1.0]);
        let exact = (-1.0f64).exp();
        let err_h = (model.integrate(&x0, 1.0, 0.1).unwrap().final_state()[0] - exact).abs();
        let err_h2 = (model.integrate(&x0, 1.0, 0.05).unwrap().final_state()[0] - exact).abs();
        let ratio = err_h / err_h2;
        assert!(
            (12.0..=20.0).contains(&ratio),
            "step halving gave error ratio {ratio}, expected ≈16"
        );
    }

    #[test]
    fn integrate_shortens_last_step_to_land_on_t_end() {
        let model = decay_model();
        let x0 = DVector::from_column_slice(&[1.0]);
        let traj = model.integrate(&x0, 0.25, 0.1).unwrap();
        assert_eq!(traj.times.len(), 4); // 0, 0.1, 0.2, 0.25
        assert_eq!(*traj.times.last().unwrap(), 0.25);
        // RK4 global error at h = 0.1 is ~1e-7 here
        assert_relative_eq!(traj.final_state()[0], (-0.25f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn zero_model_trajectory_is_constant() {
        let times = grid(0.0, 1.0, 5);
        let x = DMatrix::from_fn(2, 5, |i, j| (i + j + 1) as f64);
        let snaps = SnapshotSet::continuous(x, times, DMatrix::zeros(2, 5)).unwrap();
        let model = LandoModel::fit(&snaps, KernelSpec::quadratic(), 1e-8, 0).unwrap();
        let x0 = DVector::from_column_slice(&[5.0, -2.0]);
        let traj = model.integrate(&x0, 2.0, 0.5).unwrap();
        for j in 0..traj.len() {
            assert_eq!(traj.states.column(j), x0.column(0));
        }
    }

    #[test]
    fn rollout_zero_steps_returns_initial_state() {
        let model = dmd_model();
        let x0 = DVector::from_column_slice(&[1.0, 1.0]);
        let traj = model.rollout(&x0, 0).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states.column(0), x0.column(0));
    }

    #[test]
    fn rollout_matches_matrix_powers() {
        let model = dmd_model();
        let x0 = DVector::from_column_slice(&[1.0, 1.0]);
        let traj = model.rollout(&x0, 2).unwrap();
        assert_eq!(traj.len(), 3);
        assert_relative_eq!(traj.final_state()[0], 0.81, max_relative = 1e-8);
        assert_relative_eq!(traj.final_state()[1], 0.64, max_relative = 1e-8);
    }

    #[test]
    fn rollout_from_unseen_initial_conditions_tracks_the_map() {
        // the fitted map is independent of the training initial condition
        let model = dmd_model();
        for x0 in [
            DVector::from_column_slice(&[2.0, -1.0]),
            DVector::from_column_slice(&[-3.0, 5.0]),
        ] {
            let traj = model.rollout(&x0, 5).unwrap();
            let expected = DVector::from_column_slice(&[
                0.9f64.powi(5) * x0[0],
                0.8f64.powi(5) * x0[1],
            ]);
            assert!((traj.final_state() - &expected).norm() <= 1e-8 * expected.norm());
        }
    }

    #[test]
    fn identity_map_data_give_constant_rollout() {
        let x = DMatrix::from_fn(2, 6, |i, _| (i + 1) as f64);
        let snaps = SnapshotSet::discrete(x, grid(0.0, 5.0, 6)).unwrap();
        let model = LandoModel::fit(&snaps, KernelSpec::linear(), 1e-9, 0).unwrap();
        let x0 = DVector::from_column_slice(&[1.0, 2.0]);
        let traj = model.rollout(&x0, 4).unwrap();
        for j in 0..traj.len() {
            assert!((traj.states.column(j) - x0.column(0)).norm() <= 1e-8 * x0.norm());
        }
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let cont = decay_model();
        let disc = dmd_model();
        let x0 = DVector::from_column_slice(&[1.0]);
        assert!(cont.rollout(&x0, 3).is_err());
        let x0 = DVector::from_column_slice(&[1.0, 1.0]);
        assert!(disc.integrate(&x0, 1.0, 0.1).is_err());
    }

    #[test]
    fn degenerate_kernel_matrix_is_reported() {
        // zero states with the linear kernel give k(X̃,X) ≡ 0
        let x = DMatrix::<f64>::zeros(2, 5);
        let y = DMatrix::from_element(2, 5, 1.0);
        let snaps = SnapshotSet::continuous(x, grid(0.0, 1.0, 5), y).unwrap();
        assert!(matches!(
            LandoModel::fit(&snaps, KernelSpec::linear(), 1e-9, 0),
            Err(Error::DegenerateKernelMatrix)
        ));
    }

    #[test]
    fn snapshot_grid_must_be_uniform_and_increasing() {
        let x = DMatrix::<f64>::zeros(2, 3);
        assert!(SnapshotSet::discrete(x.clone(), vec![0.0, 1.0, 1.5]).is_err());
        assert!(SnapshotSet::discrete(x.clone(), vec![0.0, -1.0, -2.0]).is_err());
        assert!(SnapshotSet::discrete(x, vec![0.0, 1.0, 2.0]).is_ok());
    }

    #[test]
    fn works_in_f32() {
        let x = DMatrix::<f32>::identity(3, 4);
        let times: Vec<f32> = (0..4).map(|j| j as f32).collect();
        let snaps = SnapshotSet::discrete(x, times).unwrap();
        let model = LandoModel::fit(&snaps, KernelSpec::linear(), 1e-6f32, 0).unwrap();
        assert_eq!(model.weights().ncols(), model.dictionary().size());
    }
}
