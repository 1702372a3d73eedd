//! Sparse snapshot dictionary selected by the almost-linearly-dependent test.
//!
//! Snapshot columns are visited in a seed-deterministic random order. The
//! first visited column initializes the dictionary; every later candidate x_c
//! is scored by its squared feature-space projection residual
//!
//!   δ = k(x_c, x_c) − k̃ᵀ K̃⁻¹ k̃,   k̃ = k(X̃, x_c),
//!
//! and appended iff δ > ν. K̃⁻¹ is applied through a cached lower Cholesky
//! factor of K̃ + jitter·I which grows by one row per acceptance, so no
//! factorization is ever recomputed from scratch during a build.

use nalgebra::base::storage::Storage;
use nalgebra::{DMatrix, DVector, Dyn, Matrix, Vector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::scalar::{real, to_f64, Scalar};

/// Relative jitter added to the factored dictionary kernel matrix, scaled by
/// the largest self-kernel value among the candidate snapshots.
pub const DEFAULT_JITTER_REL: f64 = 1e-10;

/// Condition estimate (from the squared Cholesky diagonal ratio) above which
/// projections are refused instead of returning garbage.
const CONDITION_LIMIT: f64 = 1e14;

/// Outcome of the ALD test for one candidate snapshot during a build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AldDecision<T: Scalar> {
    /// Column index of the candidate in the original snapshot matrix.
    pub snapshot_index: usize,
    /// Projection residual δ at test time, clamped to 0 from below.
    pub delta: T,
    pub accepted: bool,
}

/// Trace of one dictionary build: the visiting order and every ALD decision.
///
/// `decisions` covers the candidates after the seed column, in visiting
/// order; `permutation[0]` is the seed column, `permutation[i+1]` corresponds
/// to `decisions[i]`.
#[derive(Debug, Clone)]
pub struct BuildReport<T: Scalar> {
    pub permutation: Vec<usize>,
    pub decisions: Vec<AldDecision<T>>,
}

/// Dictionary of selected snapshot columns with a cached Cholesky factor of
/// its (jittered) kernel matrix.
#[derive(Debug, Clone)]
pub struct SparseDictionary<T: Scalar> {
    kernel: KernelSpec<T>,
    /// Selected snapshots X̃, one per column.
    columns: DMatrix<T>,
    /// Lower-triangular factor L with L·Lᵀ = k(X̃, X̃) + jitter·I.
    chol: DMatrix<T>,
    threshold: T,
    jitter: T,
    seed: u64,
}

impl<T: Scalar> SparseDictionary<T> {
    /// Runs the full ALD selection on a snapshot matrix (columns = states).
    pub fn build<S>(
        kernel: KernelSpec<T>,
        snapshots: &Matrix<T, Dyn, Dyn, S>,
        nu: T,
        seed: u64,
    ) -> Result<Self>
    where
        S: Storage<T, Dyn, Dyn>,
    {
        Self::build_with_report(kernel, snapshots, nu, seed).map(|(dict, _)| dict)
    }

    /// Like [`build`], additionally returning the per-candidate decision trace.
    ///
    /// [`build`]: SparseDictionary::build
    pub fn build_with_report<S>(
        kernel: KernelSpec<T>,
        snapshots: &Matrix<T, Dyn, Dyn, S>,
        nu: T,
        seed: u64,
    ) -> Result<(Self, BuildReport<T>)>
    where
        S: Storage<T, Dyn, Dyn>,
    {
        if snapshots.ncols() == 0 || snapshots.nrows() == 0 {
            return Err(Error::Empty("dictionary snapshot matrix"));
        }
        if !(nu > T::zero()) {
            return Err(Error::InvalidArgument(
                "dictionary threshold nu must be > 0".into(),
            ));
        }
        let nt = snapshots.ncols();

        // Self-kernels double as the finiteness check on every column.
        let mut self_kernels = Vec::with_capacity(nt);
        for j in 0..nt {
            let col = snapshots.column(j);
            self_kernels.push(kernel.eval(&col, &col)?);
        }
        let max_self = self_kernels
            .iter()
            .fold(T::zero(), |m, &k| if k > m { k } else { m });
        // One fixed jitter for the whole build keeps the incrementally grown
        // factor an exact Cholesky of k(X̃,X̃) + jitter·I; the largest
        // self-kernel bounds the dictionary diagonal from above.
        let jitter = real::<T>(DEFAULT_JITTER_REL) * max_self;

        let mut permutation: Vec<usize> = (0..nt).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        permutation.shuffle(&mut rng);

        let n = snapshots.nrows();
        let first = permutation[0];
        let mut dict = SparseDictionary {
            kernel,
            columns: DMatrix::from_fn(n, 1, |i, _| snapshots[(i, first)]),
            chol: DMatrix::from_element(1, 1, (self_kernels[first] + jitter).sqrt()),
            threshold: nu,
            jitter,
            seed,
        };

        let mut decisions = Vec::with_capacity(nt - 1);
        for &idx in &permutation[1..] {
            let candidate = snapshots.column(idx);
            let proj = dict.project(&candidate)?;
            let delta = proj.delta.max(T::zero());
            let accepted = delta > nu;
            if accepted {
                dict.extend(&candidate, &proj)?;
            }
            decisions.push(AldDecision {
                snapshot_index: idx,
                delta,
                accepted,
            });
        }

        Ok((
            dict,
            BuildReport {
                permutation,
                decisions,
            },
        ))
    }

    /// Reassembles a dictionary from stored parts, re-factoring the kernel
    /// matrix densely. Used when loading persisted models and as the
    /// independent factorization route in tests.
    pub fn from_parts(
        kernel: KernelSpec<T>,
        columns: DMatrix<T>,
        nu: T,
        jitter: T,
        seed: u64,
    ) -> Result<Self> {
        if columns.ncols() == 0 || columns.nrows() == 0 {
            return Err(Error::Empty("dictionary columns"));
        }
        if !(nu > T::zero()) {
            return Err(Error::InvalidArgument(
                "dictionary threshold nu must be > 0".into(),
            ));
        }
        if !jitter.is_finite() || jitter < T::zero() {
            return Err(Error::InvalidArgument(
                "dictionary jitter must be finite and ≥ 0".into(),
            ));
        }
        let mut k = kernel.eval_matrix(&columns, &columns)?;
        for i in 0..k.nrows() {
            k[(i, i)] += jitter;
        }
        let chol = nalgebra::Cholesky::new(k.clone()).ok_or_else(|| {
            let eigs = k.symmetric_eigenvalues();
            let max = eigs.iter().fold(T::zero(), |m, &e| if e > m { e } else { m });
            let min = eigs.iter().fold(max, |m, &e| if e < m { e } else { m });
            let cond = if min > T::zero() {
                to_f64(max / min)
            } else {
                f64::INFINITY
            };
            Error::IllConditioned {
                what: "dictionary kernel matrix",
                cond,
            }
        })?;
        Ok(SparseDictionary {
            kernel,
            columns,
            chol: chol.l(),
            threshold: nu,
            jitter,
            seed,
        })
    }

    /// Projection residual δ and coefficient vector π = K̃⁻¹k̃ for a candidate.
    pub fn ald_delta<S>(&self, candidate: &Vector<T, Dyn, S>) -> Result<(T, DVector<T>)>
    where
        S: Storage<T, Dyn>,
    {
        let proj = self.project(candidate)?;
        Ok((proj.delta, proj.pi))
    }

    /// Number of dictionary members m.
    pub fn size(&self) -> usize {
        self.columns.ncols()
    }

    /// State dimension N of the stored snapshots.
    pub fn state_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn columns(&self) -> &DMatrix<T> {
        &self.columns
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Relative Frobenius error of L·Lᵀ against k(X̃,X̃) + jitter·I.
    pub fn factor_residual(&self) -> Result<T> {
        let mut k = self.kernel.eval_matrix(&self.columns, &self.columns)?;
        for i in 0..k.nrows() {
            k[(i, i)] += self.jitter;
        }
        let rebuilt = &self.chol * self.chol.transpose();
        Ok((rebuilt - &k).norm() / k.norm())
    }

    /// k(X̃, x) as an m-vector.
    pub fn kernel_vector<S>(&self, x: &Vector<T, Dyn, S>) -> Result<DVector<T>>
    where
        S: Storage<T, Dyn>,
    {
        let m = self.size();
        let mut out = DVector::zeros(m);
        for i in 0..m {
            out[i] = self.kernel.eval(&self.columns.column(i), x)?;
        }
        Ok(out)
    }

    fn condition_estimate(&self) -> f64 {
        let m = self.size();
        let mut dmin = f64::INFINITY;
        let mut dmax = 0.0f64;
        for i in 0..m {
            let d = to_f64(self.chol[(i, i)]);
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        if dmin <= 0.0 || !dmin.is_finite() || !dmax.is_finite() {
            return f64::INFINITY;
        }
        (dmax / dmin).powi(2)
    }

    fn project<S>(&self, candidate: &Vector<T, Dyn, S>) -> Result<Projection<T>>
    where
        S: Storage<T, Dyn>,
    {
        if candidate.nrows() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "dictionary candidate dimension",
                expected: self.state_dim(),
                got: candidate.nrows(),
            });
        }
        let k_self = self.kernel.eval(candidate, candidate)?;
        let ktilde = self.kernel_vector(candidate)?;
        if ktilde.iter().all(|&v| v == T::zero()) {
            // Minimal-norm limit: nothing to project onto, δ = k(x,x), π = 0.
            // Also keeps all-zero snapshot data well-defined (zero diagonal in
            // the factor never enters a solve).
            return Ok(Projection {
                delta: k_self,
                pi: DVector::zeros(self.size()),
                y: DVector::zeros(self.size()),
                k_self,
            });
        }
        let cond = self.condition_estimate();
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(Error::IllConditioned {
                what: "dictionary kernel matrix",
                cond,
            });
        }
        let y = self
            .chol
            .solve_lower_triangular(&ktilde)
            .ok_or(Error::IllConditioned {
                what: "dictionary Cholesky factor",
                cond,
            })?;
        let mut pi = self
            .chol
            .tr_solve_lower_triangular(&y)
            .ok_or(Error::IllConditioned {
                what: "dictionary Cholesky factor",
                cond,
            })?;
        if self.jitter > T::zero() {
            // One refinement step toward the unregularized system removes the
            // O(jitter) bias of the regularized solve, so exactly
            // representable candidates score δ ≈ 0. The iteration matrix has
            // norm jitter/(λ_min + jitter) < 1, so the step never diverges.
            let correction = self
                .chol
                .solve_lower_triangular(&pi)
                .and_then(|z| self.chol.tr_solve_lower_triangular(&z))
                .ok_or(Error::IllConditioned {
                    what: "dictionary Cholesky factor",
                    cond,
                })?;
            pi += correction * self.jitter;
        }
        let delta = k_self - ktilde.dot(&pi);
        let tol = real::<T>(1e-10) * k_self;
        if delta < -tol {
            return Err(Error::IllConditioned {
                what: "dictionary projection (negative residual)",
                cond,
            });
        }
        Ok(Projection {
            delta,
            pi,
            y,
            k_self,
        })
    }

    /// Appends an accepted candidate: new factor row from the forward solve,
    /// new diagonal from the exact Schur complement k(x,x) + jitter − yᵀy.
    fn extend<S>(&mut self, candidate: &Vector<T, Dyn, S>, proj: &Projection<T>) -> Result<()>
    where
        S: Storage<T, Dyn>,
    {
        let m = self.size();
        let d_sq = proj.k_self + self.jitter - proj.y.norm_squared();
        if !(d_sq > T::zero()) {
            return Err(Error::IllConditioned {
                what: "dictionary Cholesky extension",
                cond: self.condition_estimate(),
            });
        }
        self.columns = self.columns.clone().resize_horizontally(m + 1, T::zero());
        self.columns.column_mut(m).copy_from(candidate);
        self.chol = self.chol.clone().resize(m + 1, m + 1, T::zero());
        for i in 0..m {
            self.chol[(m, i)] = proj.y[i];
        }
        self.chol[(m, m)] = d_sq.sqrt();
        Ok(())
    }
}

struct Projection<T: Scalar> {
    delta: T,
    pi: DVector<T>,
    y: DVector<T>,
    k_self: T,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn seeded_data(n: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Random near-low-rank data: rank-2 structure plus small noise, which
    /// exercises both acceptance and rejection branches.
    fn correlated_data(n: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let base = seeded_data(n, 2, seed);
        let coeffs = seeded_data(2, cols, seed ^ 0xabcd);
        let noise = seeded_data(n, cols, seed ^ 0x1234);
        &base * &coeffs + noise * 1e-4
    }

    #[test]
    fn duplicate_columns_collapse_to_one() {
        let col = [0.5, -1.0, 2.0];
        let x = DMatrix::from_fn(3, 5, |i, _| col[i]);
        for nu in [1e-12, 1e-6, 1e-2] {
            let dict =
                SparseDictionary::build(KernelSpec::<f64>::quadratic(), &x, nu, 7).unwrap();
            assert_eq!(dict.size(), 1);
        }
    }

    #[test]
    fn independent_columns_are_all_selected() {
        let x = DMatrix::<f64>::identity(4, 4);
        let dict = SparseDictionary::build(KernelSpec::linear(), &x, 1e-12, 42).unwrap();
        assert_eq!(dict.size(), 4);
    }

    #[test]
    fn dictionary_member_has_zero_residual_and_unit_coefficients() {
        let x = DMatrix::<f64>::identity(3, 3);
        let dict = SparseDictionary::build(KernelSpec::linear(), &x, 1e-12, 0).unwrap();
        for j in 0..3 {
            let member = dict.columns().column(j).clone_owned();
            let (delta, pi) = dict.ald_delta(&member).unwrap();
            assert!(delta.abs() <= 1e-10, "delta = {delta}");
            for i in 0..3 {
                let expected = if dict.columns().column(i) == dict.columns().column(j) {
                    1.0
                } else {
                    0.0
                };
                assert!((pi[i] - expected).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn orthogonal_candidate_keeps_its_full_norm() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let dict = SparseDictionary::build(KernelSpec::<f64>::linear(), &e1, 1e-12, 0).unwrap();
        let e2 = DVector::from_column_slice(&[0.0, 1.0]);
        let (delta, pi) = dict.ald_delta(&e2).unwrap();
        assert!((delta - 1.0).abs() <= 1e-12);
        assert!(pi[0].abs() <= 1e-12);
    }

    #[test]
    fn two_member_projection_matches_hand_solution() {
        // K̃ = I, k̃ = [3,4] → π = [3,4], δ = 25 − 25 = 0 (up to jitter).
        let x = DMatrix::<f64>::identity(2, 2);
        let dict = SparseDictionary::build(KernelSpec::linear(), &x, 1e-12, 3).unwrap();
        let c = DVector::from_column_slice(&[3.0, 4.0]);
        let (delta, pi) = dict.ald_delta(&c).unwrap();
        assert!(delta.abs() <= 1e-8, "delta = {delta}");
        // order of e1/e2 depends on the permutation; match by column
        for i in 0..2 {
            let expected = if dict.columns()[(0, i)] == 1.0 { 3.0 } else { 4.0 };
            assert!((pi[i] - expected).abs() <= 1e-8);
        }
    }

    #[test]
    fn build_is_deterministic_for_a_fixed_seed() {
        let x = correlated_data(4, 40, 11);
        let kernel = KernelSpec::<f64>::gaussian(1.0).unwrap();
        let (d1, r1) = SparseDictionary::build_with_report(kernel, &x, 1e-4, 99).unwrap();
        let (d2, r2) = SparseDictionary::build_with_report(kernel, &x, 1e-4, 99).unwrap();
        assert_eq!(d1.columns(), d2.columns());
        assert_eq!(r1.permutation, r2.permutation);
        assert_eq!(r1.decisions.len(), r2.decisions.len());
        for (a, b) in r1.decisions.iter().zip(&r2.decisions) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn factor_reconstructs_jittered_kernel_matrix() {
        let x = correlated_data(6, 50, 5);
        let dict =
            SparseDictionary::build(KernelSpec::<f64>::quadratic(), &x, 1e-8, 21).unwrap();
        assert!(dict.size() > 2, "test needs a non-trivial dictionary");
        assert!(dict.factor_residual().unwrap() <= 1e-8);
    }

    #[test]
    fn cholesky_projection_matches_dense_solve() {
        let x = seeded_data(5, 10, 17);
        let kernel = KernelSpec::<f64>::gaussian(0.8).unwrap();
        let dict = SparseDictionary::build(kernel, &x, 1e-10, 1).unwrap();
        // oracle: dense unregularized solve of K̃ π = k̃
        let k = kernel.eval_matrix(dict.columns(), dict.columns()).unwrap();
        let lu = k.lu();
        for t in 0..8 {
            let c = seeded_data(5, 1, 100 + t).column(0).clone_owned();
            let (delta, _) = dict.ald_delta(&c).unwrap();
            let ktilde = DVector::from_fn(dict.size(), |i, _| {
                kernel
                    .eval(&dict.columns().column(i), &c.column(0))
                    .unwrap()
            });
            let pi_dense = lu.solve(&ktilde).unwrap();
            let delta_dense = kernel.eval(&c, &c).unwrap() - ktilde.dot(&pi_dense);
            assert!(
                (delta - delta_dense).abs() <= 1e-8 * delta_dense.abs().max(1.0),
                "cholesky {delta} vs dense {delta_dense}"
            );
        }
    }

    #[test]
    fn replayed_decisions_match_fresh_dense_factors() {
        let x = correlated_data(5, 30, 23);
        let kernel = KernelSpec::<f64>::gaussian(1.2).unwrap();
        let nu = 1e-4;
        let (dict, report) =
            SparseDictionary::build_with_report(kernel, &x, nu, 77).unwrap();
        assert!(report.decisions.iter().any(|d| !d.accepted));

        let mut members = vec![report.permutation[0]];
        for decision in &report.decisions {
            let cols = DMatrix::from_fn(x.nrows(), members.len(), |i, j| x[(i, members[j])]);
            let fresh =
                SparseDictionary::from_parts(kernel, cols, nu, dict.jitter(), 0).unwrap();
            let candidate = x.column(decision.snapshot_index).clone_owned();
            let (delta, _) = fresh.ald_delta(&candidate).unwrap();
            let delta = delta.max(0.0);
            assert_eq!(delta > nu, decision.accepted);
            assert!((delta - decision.delta).abs() <= 1e-8 * delta.max(1.0));
            if decision.accepted {
                members.push(decision.snapshot_index);
            }
        }
        assert_eq!(members.len(), dict.size());
    }

    #[test]
    fn rejects_bad_inputs() {
        let empty = DMatrix::<f64>::zeros(3, 0);
        assert!(matches!(
            SparseDictionary::build(KernelSpec::linear(), &empty, 1e-6, 0),
            Err(Error::Empty(_))
        ));
        let nan = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(
            SparseDictionary::build(KernelSpec::linear(), &nan, 1e-6, 0),
            Err(Error::NonFinite(_))
        ));
        let x = DMatrix::<f64>::identity(2, 2);
        assert!(SparseDictionary::build(KernelSpec::linear(), &x, 0.0, 0).is_err());
        assert!(SparseDictionary::build(KernelSpec::linear(), &x, -1.0, 0).is_err());
    }

    #[test]
    fn works_in_f32() {
        let x = DMatrix::<f32>::identity(3, 3);
        let dict = SparseDictionary::build(KernelSpec::linear(), &x, 1e-6f32, 9).unwrap();
        assert_eq!(dict.size(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Selection is greedy, so the dictionary SIZE is not monotone in the
        // threshold: accepting a borderline candidate early can absorb
        // novelty that a larger threshold would have harvested as several
        // later acceptances. What the pass does guarantee is coverage —
        // members project exactly, and a rejected column's residual only
        // shrinks as the dictionary keeps growing after its turn.
        #[test]
        fn every_snapshot_is_within_nu_of_the_final_span(
            seed in 0u64..1000,
            data_seed in 0u64..1000,
            cols in 5usize..25,
            nu in 1e-8f64..1e-1,
        ) {
            let x = correlated_data(3, cols, data_seed);
            let kernel = KernelSpec::<f64>::gaussian(1.0).unwrap();
            let dict = SparseDictionary::build(kernel, &x, nu, seed).unwrap();
            for c in 0..x.ncols() {
                let (delta, _) = dict.ald_delta(&x.column(c).into_owned()).unwrap();
                prop_assert!(
                    delta <= nu * (1.0 + 1e-6) + 1e-9,
                    "column {}: residual {} exceeds threshold {}", c, delta, nu
                );
            }
        }
    }
}

