//! One-dimensional phase-separation benchmark on (−1, 1).
//!
//! u_t = λu_xx − εf(u) with f(u) = u³ − u, walls clamped at −1, initial
//! state x²cos(πx). Diffusion is treated implicitly (tridiagonal solve),
//! the reaction explicitly; the internal step dt is far below the explicit
//! stability limit of the reaction for the benchmark parameter box.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lando::SnapshotSet;
use crate::scalar::{real, to_f64, Scalar};

const BOUNDARY_VALUE: f64 = -1.0;
/// States beyond this magnitude count as blow-up; the invariant region of
/// the dynamics is [−1, 1].
const DIVERGENCE_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllenCahnParams<T: Scalar> {
    /// Diffusion coefficient; benchmark range [1e-4, 1e-3].
    pub lambda: T,
    /// Reaction strength; benchmark range [0.5, 4].
    pub epsilon: T,
    /// Grid points including both walls (249 intervals by default).
    pub nx: usize,
    /// Internal time step; snapshot spacing must be a multiple of it.
    pub dt: T,
}

impl<T: Scalar> AllenCahnParams<T> {
    pub fn new(lambda: T, epsilon: T) -> Self {
        AllenCahnParams {
            lambda,
            epsilon,
            nx: 250,
            dt: real(1e-4),
        }
    }

    /// Zero coefficients are allowed: λ = 0 decouples the grid points and
    /// ε = 0 leaves pure diffusion, both handy for oracles.
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !self.epsilon.is_finite() {
            return Err(Error::NonFinite("reaction–diffusion parameters"));
        }
        if self.lambda < T::zero() || self.epsilon < T::zero() {
            return Err(Error::InvalidArgument(
                "lambda and epsilon must be ≥ 0".into(),
            ));
        }
        if self.nx < 50 {
            return Err(Error::InvalidArgument(
                "grid needs at least 50 points".into(),
            ));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument("time step must be > 0".into()));
        }
        Ok(())
    }

    /// Interior point count; the state excludes the clamped walls.
    pub fn state_dim(&self) -> usize {
        self.nx - 2
    }

    fn h(&self) -> T {
        real::<T>(2.0) / real::<T>((self.nx - 1) as f64)
    }

    fn interior_x(&self, i: usize) -> T {
        real::<T>(-1.0) + self.h() * real::<T>((i + 1) as f64)
    }
}

/// x²cos(πx) on the interior grid; equals −1 at both walls, matching the
/// boundary clamp.
pub fn default_initial_condition<T: Scalar>(p: &AllenCahnParams<T>) -> DVector<T> {
    DVector::from_fn(p.state_dim(), |i, _| {
        let x = p.interior_x(i);
        x * x * (T::pi() * x).cos()
    })
}

pub fn solve<T: Scalar>(p: &AllenCahnParams<T>, t_grid: &[T]) -> Result<SnapshotSet<T>> {
    let u0 = default_initial_condition(p);
    solve_with_ic(p, &u0, t_grid)
}

pub fn solve_with_ic<T: Scalar>(
    p: &AllenCahnParams<T>,
    u0: &DVector<T>,
    t_grid: &[T],
) -> Result<SnapshotSet<T>> {
    p.validate()?;
    let n = p.state_dim();
    if u0.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "reaction–diffusion initial condition length",
            expected: n,
            got: u0.nrows(),
        });
    }
    let substeps = super::snapshot_substeps(t_grid, p.dt)?;

    let h2 = p.h() * p.h();
    let r = p.dt * p.lambda / h2;
    // constant tridiagonal system (1+2r) on the diagonal, −r off it;
    // precompute the Thomas forward-elimination coefficients once
    let diag = T::one() + real::<T>(2.0) * r;
    let off = -r;
    let mut c_star = vec![T::zero(); n];
    let mut denom = vec![T::zero(); n];
    denom[0] = diag;
    c_star[0] = off / diag;
    for i in 1..n {
        denom[i] = diag - off * c_star[i - 1];
        if denom[i] == T::zero() {
            return Err(Error::SolverFailure("tridiagonal solve broke down".into()));
        }
        if i < n - 1 {
            c_star[i] = off / denom[i];
        }
    }
    let boundary_flux = p.dt * p.lambda * real::<T>(BOUNDARY_VALUE) / h2;
    let limit = real::<T>(DIVERGENCE_LIMIT);

    let mut u = u0.clone();
    let mut rhs = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, t_grid.len());
    x.set_column(0, &u);
    for j in 1..t_grid.len() {
        for _ in 0..substeps {
            for i in 0..n {
                let v = u[i];
                rhs[i] = v - p.dt * p.epsilon * (v * v * v - v);
            }
            rhs[0] += boundary_flux;
            rhs[n - 1] += boundary_flux;
            // Thomas back-substitution against the prefactored system
            let mut d_star = rhs.clone();
            d_star[0] /= denom[0];
            for i in 1..n {
                d_star[i] = (rhs[i] - off * d_star[i - 1]) / denom[i];
            }
            u[n - 1] = d_star[n - 1];
            for i in (0..n - 1).rev() {
                u[i] = d_star[i] - c_star[i] * u[i + 1];
            }
            if u.iter().any(|v| !v.is_finite() || v.abs() > limit) {
                return Err(Error::Diverged {
                    time: to_f64(t_grid[j]),
                });
            }
        }
        x.set_column(j, &u);
    }
    SnapshotSet::discrete(x, t_grid.to_vec())
}
