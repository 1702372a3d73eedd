//! Reference solvers and experimental designs for the benchmark systems.
//!
//! Everything here is ground truth: deterministic, seedless solvers at
//! accuracy well beyond the surrogate models they are used to judge, plus
//! the Latin hypercube designs that pick parameter instances.

pub mod allen_cahn;
pub mod heat;
pub mod lotka_volterra;
pub mod ode;
pub mod sampling;

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Internal solver steps per snapshot interval: the snapshot grid must be
/// uniform with spacing an integer multiple of the solver step.
pub(crate) fn snapshot_substeps<T: Scalar>(t_grid: &[T], dt: T) -> Result<usize> {
    if t_grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "snapshot grid needs at least two instants".into(),
        ));
    }
    let spacing = t_grid[1] - t_grid[0];
    if !(spacing > T::zero()) {
        return Err(Error::InvalidArgument(
            "snapshot grid must be increasing".into(),
        ));
    }
    for w in t_grid.windows(2) {
        if (w[1] - w[0] - spacing).abs() > spacing * real::<T>(1e-9) {
            return Err(Error::InvalidArgument(
                "snapshot grid must be uniform".into(),
            ));
        }
    }
    let ratio = crate::scalar::to_f64(spacing / dt);
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "snapshot spacing {} is not a multiple of dt {}",
            crate::scalar::to_f64(spacing),
            crate::scalar::to_f64(dt)
        )));
    }
    Ok(rounded as usize)
}

/// `count` equidistant time instants covering [t0, t1] inclusive.
pub fn time_grid<T: Scalar>(t0: f64, t1: f64, count: usize) -> Result<Vec<T>> {
    if count < 2 {
        return Err(Error::InvalidArgument(
            "time grid needs at least two instants".into(),
        ));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidArgument(
            "time grid span must be positive".into(),
        ));
    }
    let dt = (t1 - t0) / (count - 1) as f64;
    Ok((0..count)
        .map(|j| real::<T>(t0 + dt * j as f64))
        .collect())
}
