//! Predator–prey benchmark.
//!
//! x₁' = αx₁ − βx₁x₂, x₂' = δx₁x₂ − γx₂, with γ = 0.2 and δ = 0.0025 held
//! fixed while α (and optionally β) play the role of parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lando::SnapshotSet;
use crate::scalar::{real, Scalar};
use crate::systems::ode::{solve_sampled, Rk45Options};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LotkaVolterraParams<T: Scalar> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub delta: T,
}

impl<T: Scalar> LotkaVolterraParams<T> {
    /// γ and δ take their fixed benchmark values 0.2 and 0.0025.
    pub fn new(alpha: T, beta: T) -> Self {
        LotkaVolterraParams {
            alpha,
            beta,
            gamma: real(0.2),
            delta: real(0.0025),
        }
    }

    /// Growth rates must be positive; the couplings may be zero, which
    /// decouples the species and is useful for analytic checks.
    pub fn validate(&self) -> Result<()> {
        let vals = [self.alpha, self.beta, self.gamma, self.delta];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predator–prey parameters"));
        }
        if !(self.alpha > T::zero()) || !(self.gamma > T::zero()) {
            return Err(Error::InvalidArgument(
                "growth rates alpha and gamma must be > 0".into(),
            ));
        }
        if self.beta < T::zero() || self.delta < T::zero() {
            return Err(Error::InvalidArgument(
                "couplings beta and delta must be ≥ 0".into(),
            ));
        }
        Ok(())
    }

    pub fn rhs(&self, x: &DVector<T>) -> DVector<T> {
        let (x1, x2) = (x[0], x[1]);
        DVector::from_column_slice(&[
            self.alpha * x1 - self.beta * x1 * x2,
            self.delta * x1 * x2 - self.gamma * x2,
        ])
    }

    /// Conserved quantity of the orbit: δx₁ − γ·ln x₁ + βx₂ − α·ln x₂.
    pub fn first_integral(&self, x: &DVector<T>) -> T {
        self.delta * x[0] - self.gamma * x[0].ln() + self.beta * x[1] - self.alpha * x[1].ln()
    }
}

/// Reference trajectory with exact derivative targets taken from the
/// right-hand side at the sampled states.
pub fn solve<T: Scalar>(
    p: &LotkaVolterraParams<T>,
    x0: &DVector<T>,
    t_grid: &[T],
) -> Result<SnapshotSet<T>> {
    let x = integrate(p, x0, t_grid)?;
    let mut y = DMatrix::zeros(2, t_grid.len());
    for j in 0..t_grid.len() {
        y.set_column(j, &p.rhs(&x.column(j).into_owned()));
    }
    SnapshotSet::continuous(x, t_grid.to_vec(), y)
}

/// Same trajectory, but with derivative targets estimated by finite
/// differences of the snapshots — the path a measurement-only pipeline
/// takes. Requires a uniform grid.
pub fn solve_fd<T: Scalar>(
    p: &LotkaVolterraParams<T>,
    x0: &DVector<T>,
    t_grid: &[T],
) -> Result<SnapshotSet<T>> {
    let x = integrate(p, x0, t_grid)?;
    SnapshotSet::continuous_fd(x, t_grid.to_vec())
}

fn integrate<T: Scalar>(
    p: &LotkaVolterraParams<T>,
    x0: &DVector<T>,
    t_grid: &[T],
) -> Result<DMatrix<T>> {
    p.validate()?;
    if x0.nrows() != 2 {
        return Err(Error::DimensionMismatch {
            context: "predator–prey state dimension",
            expected: 2,
            got: x0.nrows(),
        });
    }
    if !(x0[0] > T::zero()) || !(x0[1] > T::zero()) {
        return Err(Error::InvalidArgument(
            "populations must start positive".into(),
        ));
    }
    solve_sampled(|_, x| p.rhs(x), x0, t_grid, &Rk45Options::default())
}
