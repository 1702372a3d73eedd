//! Latin hypercube designs over box-bounded parameter spaces.
//!
//! Each dataset (train, validation, test) is drawn from its own derived
//! random stream, so changing the training count never shifts the test
//! samples of the same seed. Within a dataset every dimension is split into
//! as many equal-width strata as there are samples and each stratum is hit
//! exactly once.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Stream-splitting constant; spacing seeds by the golden ratio keeps the
/// derived streams uncorrelated.
pub const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDesign {
    /// Half-open per-dimension bounds (lower, upper).
    pub bounds: Vec<(f64, f64)>,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DesignSamples<T: Scalar> {
    pub train: Vec<DVector<T>>,
    pub valid: Vec<DVector<T>>,
    pub test: Vec<DVector<T>>,
}

impl ParameterDesign {
    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::Empty("parameter bounds"));
        }
        for &(lo, hi) in &self.bounds {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite("parameter bounds"));
            }
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate parameter bounds [{lo}, {hi}]"
                )));
            }
        }
        if self.train == 0 || self.test == 0 {
            return Err(Error::InvalidArgument(
                "train and test counts must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Draws the three datasets. The validation set may be empty.
pub fn lhs_sample<T: Scalar>(design: &ParameterDesign) -> Result<DesignSamples<T>> {
    design.validate()?;
    let sets = [
        lhs_one(design, design.train, 0),
        lhs_one(design, design.valid, 1),
        lhs_one(design, design.test, 2),
    ];
    let [train, valid, test] = sets;
    check_disjoint(&train, &valid)?;
    check_disjoint(&train, &test)?;
    check_disjoint(&valid, &test)?;
    Ok(DesignSamples {
        train: convert(train),
        valid: convert(valid),
        test: convert(test),
    })
}

fn lhs_one(design: &ParameterDesign, n: usize, role: u64) -> Vec<Vec<f64>> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed.wrapping_add(role.wrapping_mul(SEED_STRIDE)));
    let dim = design.bounds.len();
    let mut samples = vec![vec![0.0f64; dim]; n];
    for (d, &(lo, hi)) in design.bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let width = (hi - lo) / n as f64;
        for (i, sample) in samples.iter_mut().enumerate() {
            let u: f64 = rng.random_range(0.0..1.0);
            sample[d] = lo + (strata[i] as f64 + u) * width;
        }
    }
    samples
}

fn check_disjoint(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<()> {
    // exact collisions have probability zero; guard anyway
    for x in a {
        for y in b {
            if x == y {
                return Err(Error::InvalidArgument(
                    "datasets share a parameter sample; change the seed".into(),
                ));
            }
        }
    }
    Ok(())
}

fn convert<T: Scalar>(samples: Vec<Vec<f64>>) -> Vec<DVector<T>> {
    samples
        .into_iter()
        .map(|s| DVector::from_iterator(s.len(), s.into_iter().map(real::<T>)))
        .collect()
}
