//! Adaptive Dormand–Prince 5(4) integration for reference trajectories.
//!
//! The embedded 4th-order solution drives PI-free step control with the
//! usual 0.9 safety factor. Default tolerances are 1e-9 absolute and
//! relative, far below the error levels the surrogate pipeline is judged
//! against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Scalar};

#[derive(Debug, Clone, Copy)]
pub struct Rk45Options<T: Scalar> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
}

impl<T: Scalar> Default for Rk45Options<T> {
    fn default() -> Self {
        Rk45Options {
            rtol: real(1e-9),
            atol: real(1e-9),
            max_steps: 10_000_000,
        }
    }
}

// Dormand–Prince coefficients; row 7 doubles as the 5th-order weights.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// difference between 5th- and 4th-order weights, applied to k1..k7
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrates x' = rhs(t, x) and records the state at every instant of the
/// strictly increasing `t_grid`; the first instant is the initial time.
/// Columns of the result line up with `t_grid`.
pub fn solve_sampled<T, F>(
    rhs: F,
    x0: &DVector<T>,
    t_grid: &[T],
    opts: &Rk45Options<T>,
) -> Result<DMatrix<T>>
where
    T: Scalar,
    F: Fn(T, &DVector<T>) -> DVector<T>,
{
    if t_grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "integration grid needs at least two instants".into(),
        ));
    }
    for w in t_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(
                "integration grid must be strictly increasing".into(),
            ));
        }
    }
    if !(opts.rtol > T::zero()) || !(opts.atol > T::zero()) {
        return Err(Error::InvalidArgument(
            "tolerances must be positive".into(),
        ));
    }
    let dim = x0.nrows();
    let mut out = DMatrix::zeros(dim, t_grid.len());
    out.set_column(0, x0);

    let span = t_grid[t_grid.len() - 1] - t_grid[0];
    let h_min = span * real::<T>(1e-14);
    let mut t = t_grid[0];
    let mut x = x0.clone();
    let mut f = eval_rhs(&rhs, t, &x)?;
    let mut h = initial_step(&rhs, t, &x, &f, opts)?.min(span);
    let mut steps = 0usize;

    for (col, &t_out) in t_grid.iter().enumerate().skip(1) {
        while t < t_out {
            if steps >= opts.max_steps {
                return Err(Error::SolverFailure(format!(
                    "step budget exhausted at t = {}",
                    to_f64(t)
                )));
            }
            steps += 1;
            let clipped = h > t_out - t;
            let h_try = if clipped { t_out - t } else { h };

            let mut k: Vec<DVector<T>> = Vec::with_capacity(7);
            k.push(f.clone());
            for s in 0..6 {
                let mut xs = x.clone();
                for (j, kj) in k.iter().enumerate() {
                    let a = A[s][j];
                    if a != 0.0 {
                        xs.axpy(h_try * real::<T>(a), kj, T::one());
                    }
                }
                k.push(eval_rhs(&rhs, t + h_try * real::<T>(C[s]), &xs)?);
            }
            // k[6] was evaluated at the 5th-order solution itself
            let mut x_new = x.clone();
            for (j, kj) in k.iter().take(6).enumerate() {
                let a = A[5][j];
                if a != 0.0 {
                    x_new.axpy(h_try * real::<T>(a), kj, T::one());
                }
            }
            let mut err_vec = DVector::zeros(dim);
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    err_vec.axpy(h_try * real::<T>(E[j]), kj, T::one());
                }
            }
            let mut err_sq = T::zero();
            for i in 0..dim {
                let scale = opts.atol + opts.rtol * x[i].abs().max(x_new[i].abs());
                let r = err_vec[i] / scale;
                err_sq += r * r;
            }
            let err = (err_sq / real::<T>(dim as f64)).sqrt();

            if err <= T::one() {
                t = if clipped { t_out } else { t + h_try };
                x = x_new;
                f = k.pop().unwrap();
            }
            let factor = if err > T::zero() {
                real::<T>(0.9) * err.powf(real::<T>(-0.2))
            } else {
                real::<T>(5.0)
            };
            let factor = factor.clamp(real::<T>(0.2), real::<T>(5.0));
            h = (h_try * factor).max(h_min);
            if h <= h_min && err > T::one() {
                return Err(Error::SolverFailure(format!(
                    "step size underflow at t = {}",
                    to_f64(t)
                )));
            }
        }
        out.set_column(col, &x);
    }
    Ok(out)
}

fn eval_rhs<T, F>(rhs: &F, t: T, x: &DVector<T>) -> Result<DVector<T>>
where
    T: Scalar,
    F: Fn(T, &DVector<T>) -> DVector<T>,
{
    let f = rhs(t, x);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { time: to_f64(t) });
    }
    Ok(f)
}

/// Step-size guess from the scaled magnitudes of the state and its
/// derivative plus one Euler probe.
fn initial_step<T, F>(rhs: &F, t: T, x: &DVector<T>, f: &DVector<T>, opts: &Rk45Options<T>) -> Result<T>
where
    T: Scalar,
    F: Fn(T, &DVector<T>) -> DVector<T>,
{
    let scale = |v: &DVector<T>, reference: &DVector<T>| {
        let mut s = T::zero();
        for i in 0..v.nrows() {
            let w = opts.atol + opts.rtol * reference[i].abs();
            let r = v[i] / w;
            s += r * r;
        }
        (s / real::<T>(v.nrows() as f64)).sqrt()
    };
    let d0 = scale(x, x);
    let d1 = scale(f, x);
    let h0 = if d0 > real::<T>(1e-5) && d1 > real::<T>(1e-5) {
        real::<T>(0.01) * d0 / d1
    } else {
        real::<T>(1e-6)
    };
    let probe = eval_rhs(rhs, t + h0, &(x + f * h0))?;
    let d2 = scale(&(&probe - f), x) / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max > real::<T>(1e-15) {
        (real::<T>(0.01) / d_max).powf(real::<T>(0.2))
    } else {
        h0 * real::<T>(100.0)
    };
    Ok(h1.min(h0 * real::<T>(100.0)))
}
