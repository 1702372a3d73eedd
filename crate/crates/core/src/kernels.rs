//! Kernel functions and batched kernel-matrix evaluation.
//!
//! Samples are always stored as matrix *columns*: a snapshot matrix is N×p for
//! p states of dimension N, and `eval_matrix(A, B)` returns the p×q Gram block
//! with entry (i,j) = k(A[:,i], B[:,j]).
//!
//! Three kernels are provided:
//!   - `Linear`: ⟨a,b⟩ (pure inner product, no offset; with it the surrogate
//!     reduces to a plain linear fit of the dynamics, the DMD limit),
//!   - `Polynomial`: (offset + ⟨a,b⟩)^degree; degree 2 with offset 1 is the
//!     "quadratic" configuration whose feature space spans constant, linear
//!     and quadratic monomials,
//!   - `Gaussian`: exp(−‖a−b‖² / (2ℓ²)).

use nalgebra::{DMatrix, Dyn, Matrix, Vector};
use nalgebra::base::storage::Storage;

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Kernel choice plus its hyperparameters.
///
/// Immutable; all evaluations are pure functions of the spec and its inputs,
/// so a spec can be shared freely across concurrent workers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec<T: Scalar> {
    /// k(a,b) = ⟨a,b⟩
    Linear,
    /// k(a,b) = (offset + ⟨a,b⟩)^degree
    Polynomial { degree: u32, offset: T },
    /// k(a,b) = exp(−‖a−b‖² / (2·lengthscale²))
    Gaussian { lengthscale: T },
}

impl<T: Scalar> KernelSpec<T> {
    pub fn linear() -> Self {
        KernelSpec::Linear
    }

    /// Inhomogeneous polynomial kernel. Requires degree ≥ 1 and finite offset ≥ 0.
    pub fn polynomial(degree: u32, offset: T) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidArgument(
                "polynomial kernel degree must be ≥ 1".into(),
            ));
        }
        if !offset.is_finite() || offset < T::zero() {
            return Err(Error::InvalidArgument(
                "polynomial kernel offset must be finite and ≥ 0".into(),
            ));
        }
        Ok(KernelSpec::Polynomial { degree, offset })
    }

    /// Degree-2 polynomial kernel with unit offset.
    pub fn quadratic() -> Self {
        KernelSpec::Polynomial {
            degree: 2,
            offset: T::one(),
        }
    }

    /// Gaussian (RBF) kernel. Requires finite lengthscale > 0.
    pub fn gaussian(lengthscale: T) -> Result<Self> {
        if !lengthscale.is_finite() || lengthscale <= T::zero() {
            return Err(Error::InvalidArgument(
                "gaussian kernel lengthscale must be finite and > 0".into(),
            ));
        }
        Ok(KernelSpec::Gaussian { lengthscale })
    }

    /// k(a, b) for a single pair of state vectors.
    pub fn eval<Sa, Sb>(&self, a: &Vector<T, Dyn, Sa>, b: &Vector<T, Dyn, Sb>) -> Result<T>
    where
        Sa: Storage<T, Dyn>,
        Sb: Storage<T, Dyn>,
    {
        if a.nrows() == 0 {
            return Err(Error::Empty("kernel input vector"));
        }
        if a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch {
                context: "kernel eval",
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        if a.iter().any(|x| !x.is_finite()) || b.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("kernel input vector"));
        }
        Ok(self.eval_unchecked(a, b))
    }

    /// Gram block of two column-sample matrices: result (i,j) = k(A[:,i], B[:,j]).
    ///
    /// Entries are computed by the exact same scalar routine as [`eval`], one
    /// sequential pass per pair, so `eval_matrix(A, A)` is bit-symmetric for
    /// the dot-product kernels and the block agrees with pointwise `eval`
    /// calls exactly.
    ///
    /// [`eval`]: KernelSpec::eval
    pub fn eval_matrix<Sa, Sb>(
        &self,
        a: &Matrix<T, Dyn, Dyn, Sa>,
        b: &Matrix<T, Dyn, Dyn, Sb>,
    ) -> Result<DMatrix<T>>
    where
        Sa: Storage<T, Dyn, Dyn>,
        Sb: Storage<T, Dyn, Dyn>,
    {
        if a.nrows() == 0 || a.ncols() == 0 || b.ncols() == 0 {
            return Err(Error::Empty("kernel input matrix"));
        }
        if a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch {
                context: "kernel eval_matrix row dimension",
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        if a.iter().any(|x| !x.is_finite()) || b.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("kernel input matrix"));
        }
        let (p, q) = (a.ncols(), b.ncols());
        Ok(DMatrix::from_fn(p, q, |i, j| {
            self.eval_unchecked(&a.column(i), &b.column(j))
        }))
    }

    fn eval_unchecked<Sa, Sb>(&self, a: &Vector<T, Dyn, Sa>, b: &Vector<T, Dyn, Sb>) -> T
    where
        Sa: Storage<T, Dyn>,
        Sb: Storage<T, Dyn>,
    {
        match *self {
            KernelSpec::Linear => a.dot(b),
            KernelSpec::Polynomial { degree, offset } => {
                (offset + a.dot(b)).powi(degree as i32)
            }
            KernelSpec::Gaussian { lengthscale } => {
                let mut sq = T::zero();
                for i in 0..a.nrows() {
                    let d = a[i] - b[i];
                    sq += d * d;
                }
                (-sq / (real::<T>(2.0) * lengthscale * lengthscale)).exp()
            }
        }
    }
}

impl<T: Scalar> std::fmt::Display for KernelSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree, offset } => {
                write!(f, "polynomial(degree={degree}, offset={offset})")
            }
            KernelSpec::Gaussian { lengthscale } => {
                write!(f, "gaussian(lengthscale={lengthscale})")
            }
        }
    }
}
