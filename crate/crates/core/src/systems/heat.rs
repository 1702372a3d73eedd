//! Two-dimensional diffusion benchmark on (0,5)² with zero Dirichlet walls.
//!
//! Space is discretized by second-order central differences on a uniform
//! interior grid, time by Crank–Nicolson. The five-point Laplacian on a
//! rectangle is diagonalized exactly by discrete sine bases, so each CN step
//! reduces to an elementwise multiplier in that basis; this solves the
//! implicit system exactly (to round-off) without ever factoring the
//! operator. State vectors hold interior values with index iy·nx + ix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lando::SnapshotSet;
use crate::scalar::{real, to_f64, Scalar};

pub const DOMAIN_SIDE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatParams<T: Scalar> {
    /// Diffusion coefficient; the benchmark varies it over [0.5, 1].
    pub d: T,
    /// Amplitude inside the tanh initial condition.
    pub alpha_ic: T,
    /// Interior grid points per side.
    pub nx: usize,
    pub ny: usize,
    /// Internal time step; snapshot spacing must be a multiple of it.
    pub dt: T,
}

impl<T: Scalar> HeatParams<T> {
    pub fn new(d: T) -> Self {
        HeatParams {
            d,
            alpha_ic: real(0.6),
            nx: 32,
            ny: 32,
            dt: real(0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.d.is_finite() || !(self.d > T::zero()) {
            return Err(Error::InvalidArgument(
                "diffusion coefficient must be finite and > 0".into(),
            ));
        }
        if !self.alpha_ic.is_finite() || self.alpha_ic.abs() >= T::one() {
            return Err(Error::InvalidArgument(
                "initial-condition amplitude must satisfy |alpha| < 1".into(),
            ));
        }
        if self.nx < 16 || self.ny < 16 {
            return Err(Error::InvalidArgument(
                "grid must be at least 16×16 interior points".into(),
            ));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument("time step must be > 0".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.nx * self.ny
    }

    fn hx(&self) -> T {
        real::<T>(DOMAIN_SIDE) / real::<T>((self.nx + 1) as f64)
    }

    fn hy(&self) -> T {
        real::<T>(DOMAIN_SIDE) / real::<T>((self.ny + 1) as f64)
    }
}

/// tanh(α·sin(0.2πs) / (1 − α·cos(0.2πs))) factor of the benchmark initial
/// condition; the full field is the product of this in x and in y.
fn ic_factor<T: Scalar>(alpha: T, s: T) -> T {
    let arg = real::<T>(0.2) * T::pi() * s;
    (alpha * arg.sin() / (T::one() - alpha * arg.cos())).tanh()
}

/// Benchmark initial condition sampled on the interior grid.
pub fn default_initial_condition<T: Scalar>(p: &HeatParams<T>) -> DVector<T> {
    let (hx, hy) = (p.hx(), p.hy());
    DVector::from_fn(p.state_dim(), |idx, _| {
        let ix = idx % p.nx;
        let iy = idx / p.nx;
        let x = hx * real::<T>((ix + 1) as f64);
        let y = hy * real::<T>((iy + 1) as f64);
        ic_factor(p.alpha_ic, x) * ic_factor(p.alpha_ic, y)
    })
}

/// Diffuses the benchmark initial condition over the snapshot grid.
pub fn solve<T: Scalar>(p: &HeatParams<T>, t_grid: &[T]) -> Result<SnapshotSet<T>> {
    let u0 = default_initial_condition(p);
    solve_with_ic(p, &u0, t_grid)
}

/// Same scheme from a caller-supplied interior field.
pub fn solve_with_ic<T: Scalar>(
    p: &HeatParams<T>,
    u0: &DVector<T>,
    t_grid: &[T],
) -> Result<SnapshotSet<T>> {
    p.validate()?;
    if u0.nrows() != p.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "heat initial condition length",
            expected: p.state_dim(),
            got: u0.nrows(),
        });
    }
    let substeps = super::snapshot_substeps(t_grid, p.dt)?;

    let sx = sine_basis::<T>(p.nx);
    let sy = sine_basis::<T>(p.ny);
    let lx = laplacian_eigenvalues::<T>(p.nx, p.hx());
    let ly = laplacian_eigenvalues::<T>(p.ny, p.hy());

    // CN in the sine eigenbasis: one multiplier per mode per internal step,
    // raised to the number of internal steps between snapshots
    let c = p.d * p.dt * real::<T>(0.5);
    let mut multiplier = DMatrix::zeros(p.nx, p.ny);
    for kx in 0..p.nx {
        for ky in 0..p.ny {
            let lam = lx[kx] + ly[ky];
            let denom = T::one() - c * lam;
            if denom == T::zero() {
                return Err(Error::SolverFailure(
                    "Crank–Nicolson system is singular".into(),
                ));
            }
            multiplier[(kx, ky)] = ((T::one() + c * lam) / denom).powi(substeps as i32);
        }
    }

    let u_grid = DMatrix::from_column_slice(p.nx, p.ny, u0.as_slice());
    let mut hat = &sx * u_grid * &sy;
    let norm = real::<T>(4.0 / ((p.nx + 1) as f64 * (p.ny + 1) as f64));

    let mut x = DMatrix::zeros(p.state_dim(), t_grid.len());
    x.set_column(0, u0);
    for j in 1..t_grid.len() {
        hat.component_mul_assign(&multiplier);
        let u = (&sx * &hat * &sy) * norm;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                time: to_f64(t_grid[j]),
            });
        }
        x.column_mut(j)
            .copy_from(&DVector::from_column_slice(u.as_slice()));
    }
    SnapshotSet::discrete(x, t_grid.to_vec())
}

/// Rows of sin((i+1)(k+1)π/(n+1)); symmetric, and S·S = (n+1)/2·I.
fn sine_basis<T: Scalar>(n: usize) -> DMatrix<T> {
    let step = std::f64::consts::PI / (n + 1) as f64;
    DMatrix::from_fn(n, n, |i, k| {
        real::<T>((step * ((i + 1) * (k + 1)) as f64).sin())
    })
}

/// Eigenvalues −(4/h²)·sin²((k+1)π/(2(n+1))) of the 1-D Dirichlet Laplacian.
fn laplacian_eigenvalues<T: Scalar>(n: usize, h: T) -> Vec<T> {
    let step = std::f64::consts::PI / (2.0 * (n + 1) as f64);
    (0..n)
        .map(|k| {
            let s = real::<T>((step * (k + 1) as f64).sin());
            -real::<T>(4.0) * s * s / (h * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lando::DynamicsMode;
    use crate::systems::time_grid;
    use approx::assert_relative_eq;

    #[test]
    fn zero_initial_condition_stays_zero() {
        let p = HeatParams::new(0.7);
        let grid: Vec<f64> = time_grid(0.0, 0.5, 51).unwrap();
        let set = solve_with_ic(&p, &DVector::zeros(p.state_dim()), &grid).unwrap();
        assert_eq!(set.states().norm(), 0.0);
    }

    #[test]
    fn snapshots_are_discrete_mode_with_grid_spacing() {
        let p = HeatParams::new(0.5);
        let grid: Vec<f64> = time_grid(0.0, 0.2, 21).unwrap();
        let set = solve(&p, &grid).unwrap();
        assert_eq!(set.mode(), DynamicsMode::Discrete);
        assert_relative_eq!(set.dt(), 0.01, max_relative = 1e-12);
        assert_eq!(set.states().ncols(), 21);
    }

    // 64×64 grid counting the boundary: 62 interior points per side
    #[test]
    fn fundamental_mode_decays_at_the_analytic_rate() {
        let p = HeatParams {
            d: 0.75,
            alpha_ic: 0.6,
            nx: 62,
            ny: 62,
            dt: 0.01,
        };
        let u0 = fourier_mode(&p);
        let grid: Vec<f64> = time_grid(0.0, 1.0, 101).unwrap();
        let set = solve_with_ic(&p, &u0, &grid).unwrap();
        let ratio = set.states().column(100).norm() / set.states().column(0).norm();
        let expect = (-2.0 * 0.75 * (std::f64::consts::PI / 5.0).powi(2)).exp();
        assert_relative_eq!(ratio, expect, max_relative = 5e-3);
    }

    #[test]
    fn halving_the_mesh_width_quarters_the_decay_rate_error() {
        let exact = 2.0 * 0.6 * (std::f64::consts::PI / 5.0).powi(2);
        let rate_error = |n: usize| {
            let p = HeatParams {
                d: 0.6,
                alpha_ic: 0.6,
                nx: n,
                ny: n,
                dt: 1e-3,
            };
            let u0 = fourier_mode(&p);
            let grid: Vec<f64> = time_grid(0.0, 0.5, 6).unwrap();
            let set = solve_with_ic(&p, &u0, &grid).unwrap();
            let ratio = set.states().column(5).norm() / set.states().column(0).norm();
            (-(ratio.ln()) / 0.5 - exact).abs()
        };
        // h = 5/20 versus h = 5/40
        let coarse = rate_error(19);
        let fine = rate_error(39);
        let factor = coarse / fine;
        assert!(
            (3.0..=5.0).contains(&factor),
            "error reduction factor {factor}"
        );
    }

    #[test]
    fn peak_temperature_never_increases() {
        let p = HeatParams::new(1.0);
        let grid: Vec<f64> = time_grid(0.0, 0.5, 51).unwrap();
        let set = solve(&p, &grid).unwrap();
        let mut prev = f64::INFINITY;
        for j in 0..grid.len() {
            let peak = set.states().column(j).amax();
            assert!(peak <= prev + 1e-12, "peak grew at step {j}");
            prev = peak;
        }
    }

    #[test]
    fn initial_condition_matches_the_closed_form() {
        let p = HeatParams::new(0.8);
        let u0 = default_initial_condition(&p);
        let h = 5.0 / 33.0;
        let f = |s: f64| {
            let a = 0.2 * std::f64::consts::PI * s;
            (0.6 * a.sin() / (1.0 - 0.6 * a.cos())).tanh()
        };
        // spot-check the corner and a midfield point
        assert_relative_eq!(u0[0], f(h) * f(h), max_relative = 1e-12);
        let idx = 10 * 32 + 5;
        assert_relative_eq!(u0[idx], f(6.0 * h) * f(11.0 * h), max_relative = 1e-12);
    }

    #[test]
    fn misaligned_snapshot_grids_are_rejected() {
        let p = HeatParams::new(0.5);
        assert!(solve(&p, &[0.0, 0.015, 0.03]).is_err());
        assert!(solve(&p, &[0.0]).is_err());
        let tiny = HeatParams {
            nx: 8,
            ..HeatParams::new(0.5)
        };
        let grid: Vec<f64> = time_grid(0.0, 0.1, 11).unwrap();
        assert!(solve(&tiny, &grid).is_err());
    }

    fn fourier_mode(p: &HeatParams<f64>) -> DVector<f64> {
        let hx = 5.0 / (p.nx + 1) as f64;
        let hy = 5.0 / (p.ny + 1) as f64;
        DVector::from_fn(p.state_dim(), |idx, _| {
            let x = ((idx % p.nx) + 1) as f64 * hx;
            let y = ((idx / p.nx) + 1) as f64 * hy;
            (std::f64::consts::PI * x / 5.0).sin() * (std::f64::consts::PI * y / 5.0).sin()
        })
    }
}
