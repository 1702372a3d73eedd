//! Proper orthogonal decomposition of cross-parameter snapshot matrices.
//!
//! The input is a matrix whose columns are full states at one fixed time, one
//! column per parameter sample. The basis Φ holds the leading left singular
//! vectors; truncation keeps the smallest rank n whose cumulative squared
//! singular values reach the requested energy fraction (Eckart–Young optimal
//! among rank-n approximations).

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Orthonormal reduction basis with its full singular-value spectrum.
#[derive(Debug, Clone)]
pub struct PodBasis<T: Scalar> {
    /// N×n, orthonormal columns, sign-fixed.
    phi: DMatrix<T>,
    /// All min(N, N_µ) singular values, descending.
    singular_values: DVector<T>,
    /// Energy fraction that governed the truncation (requested for
    /// [`compute`], achieved for [`compute_with_rank`]).
    ///
    /// [`compute`]: PodBasis::compute
    /// [`compute_with_rank`]: PodBasis::compute_with_rank
    energy_threshold: T,
}

impl<T: Scalar> PodBasis<T> {
    /// Thin SVD of the snapshot matrix, truncated at the smallest rank whose
    /// cumulative squared singular values reach `energy_threshold` of the
    /// total.
    pub fn compute(snapshots: &DMatrix<T>, energy_threshold: T) -> Result<Self> {
        if !(energy_threshold > T::zero()) || energy_threshold > T::one() {
            return Err(Error::InvalidArgument(
                "energy threshold must lie in (0, 1]".into(),
            ));
        }
        let (u, sv) = sorted_thin_svd(snapshots)?;
        // Accumulate in sorted order so the full sum reproduces the total
        // exactly and threshold 1 always terminates.
        let total: T = sv.iter().map(|&s| s * s).fold(T::zero(), |a, b| a + b);
        if !(total > T::zero()) {
            return Err(Error::ZeroSnapshotMatrix);
        }
        let target = energy_threshold * total;
        let mut cum = T::zero();
        let mut n = sv.len();
        for (i, &s) in sv.iter().enumerate() {
            cum += s * s;
            if cum >= target {
                n = i + 1;
                break;
            }
        }
        Ok(Self::assemble(&u, &sv, n, energy_threshold))
    }

    /// Fixed-rank override: keep exactly `rank` modes. The stored energy
    /// threshold is the fraction those modes actually capture.
    pub fn compute_with_rank(snapshots: &DMatrix<T>, rank: usize) -> Result<Self> {
        let (u, sv) = sorted_thin_svd(snapshots)?;
        if rank < 1 || rank > sv.len() {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} outside 1..={}",
                sv.len()
            )));
        }
        let total: T = sv.iter().map(|&s| s * s).fold(T::zero(), |a, b| a + b);
        if !(total > T::zero()) {
            return Err(Error::ZeroSnapshotMatrix);
        }
        let kept: T = sv
            .iter()
            .take(rank)
            .map(|&s| s * s)
            .fold(T::zero(), |a, b| a + b);
        let achieved = if kept / total > T::one() {
            T::one()
        } else {
            kept / total
        };
        Ok(Self::assemble(&u, &sv, rank, achieved))
    }

    fn assemble(u: &DMatrix<T>, sv: &DVector<T>, n: usize, threshold: T) -> Self {
        let mut phi = u.columns(0, n).into_owned();
        for mut col in phi.column_iter_mut() {
            // first index attaining the largest magnitude decides the sign
            let mut best = 0;
            for i in 1..col.nrows() {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            if col[best] < T::zero() {
                col.neg_mut();
            }
        }
        PodBasis {
            phi,
            singular_values: sv.clone(),
            energy_threshold: threshold,
        }
    }

    /// Reduced coordinates Φᵀx.
    pub fn project(&self, x: &DVector<T>) -> Result<DVector<T>> {
        if x.nrows() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "POD projection input",
                expected: self.state_dim(),
                got: x.nrows(),
            });
        }
        Ok(self.phi.tr_mul(x))
    }

    /// Full-state reconstruction Φ·xr.
    pub fn reconstruct(&self, xr: &DVector<T>) -> Result<DVector<T>> {
        if xr.nrows() != self.rank() {
            return Err(Error::DimensionMismatch {
                context: "POD reconstruction input",
                expected: self.rank(),
                got: xr.nrows(),
            });
        }
        Ok(&self.phi * xr)
    }

    /// Projects every column of a snapshot matrix.
    pub fn project_columns(&self, s: &DMatrix<T>) -> Result<DMatrix<T>> {
        if s.nrows() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "POD projection input",
                expected: self.state_dim(),
                got: s.nrows(),
            });
        }
        Ok(self.phi.tr_mul(s))
    }

    pub fn phi(&self) -> &DMatrix<T> {
        &self.phi
    }

    pub fn rank(&self) -> usize {
        self.phi.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn singular_values(&self) -> &DVector<T> {
        &self.singular_values
    }

    pub fn energy_threshold(&self) -> T {
        self.energy_threshold
    }

    /// Fraction of total squared singular values captured by the retained modes.
    pub fn energy_fraction(&self) -> T {
        let total: T = self
            .singular_values
            .iter()
            .map(|&s| s * s)
            .fold(T::zero(), |a, b| a + b);
        if !(total > T::zero()) {
            return T::one();
        }
        let kept: T = self
            .singular_values
            .iter()
            .take(self.rank())
            .map(|&s| s * s)
            .fold(T::zero(), |a, b| a + b);
        let f = kept / total;
        if f > T::one() {
            T::one()
        } else {
            f
        }
    }

    /// Rebuilds a basis from stored parts, checking orthonormality.
    pub fn from_parts(
        phi: DMatrix<T>,
        singular_values: DVector<T>,
        energy_threshold: T,
    ) -> Result<Self> {
        if phi.ncols() == 0 || phi.nrows() == 0 {
            return Err(Error::Empty("POD basis"));
        }
        if phi.iter().any(|v| !v.is_finite())
            || singular_values.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("POD basis"));
        }
        let gram = phi.tr_mul(&phi);
        let eye = DMatrix::<T>::identity(phi.ncols(), phi.ncols());
        if (gram - eye).norm() > real::<T>(1e-8) {
            return Err(Error::InvalidArgument(
                "stored POD basis columns are not orthonormal".into(),
            ));
        }
        Ok(PodBasis {
            phi,
            singular_values,
            energy_threshold,
        })
    }
}

/// Thin SVD with singular values (and matching left vectors) sorted descending.
fn sorted_thin_svd<T: Scalar>(s: &DMatrix<T>) -> Result<(DMatrix<T>, DVector<T>)> {
    if s.nrows() == 0 || s.ncols() == 0 {
        return Err(Error::Empty("snapshot matrix"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("snapshot matrix"));
    }
    let svd = SVD::new(s.clone(), true, false);
    let u = svd.u.expect("SVD with compute_u");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal));
    let sorted_u = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let sorted_sv = DVector::from_fn(order.len(), |i, _| sv[order[i]]);
    Ok((sorted_u, sorted_sv))
}
