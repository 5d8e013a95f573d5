//! Shared resampling machinery: deterministic per-replicate randomness,
//! permutation and parametric-draw schemes, resampling p-values and empirical
//! critical values.
//!
//! Replicate `b` of a plan draws all of its randomness from a generator keyed
//! by `(master seed, stream tag, b)`, so the replicate stream is a pure
//! function of the seed and the index: evaluation order and worker count
//! cannot change any result.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gof::ReferenceModel;
use crate::sample::SampleMatrix;

/// Domain separators for independent randomness streams under one master
/// seed.
pub mod stream {
    pub const DATA: u64 = 0x01;
    pub const RESAMPLE: u64 = 0x02;
    pub const REFERENCE: u64 = 0x03;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Generator for one `(seed, tag, replicate)` cell.
pub fn replicate_rng(seed: u64, tag: u64, replicate: u64) -> ChaCha8Rng {
    let mut state = seed ^ tag.rotate_left(17) ^ replicate.rotate_left(40);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Add-one resampling p-value: `(1 + #{b : null_b >= observed}) / (B + 1)`.
/// Ties count as exceedances, which keeps the test valid at finite `B`.
pub fn resample_pvalue(observed: f64, null_stats: &[f64]) -> Result<f64> {
    if null_stats.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one resample".into(),
        ));
    }
    if !observed.is_finite() || null_stats.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite statistic in p-value computation".into(),
        ));
    }
    let exceed = null_stats.iter().filter(|&&v| v >= observed).count();
    Ok((1 + exceed) as f64 / (null_stats.len() + 1) as f64)
}

/// Order-statistic estimate of the upper-`alpha` critical value: the
/// `ceil((1 - alpha)(B + 1))`-th smallest resampled statistic, clipped to the
/// sample.
pub fn empirical_quantile(null_stats: &[f64], alpha: f64) -> Result<f64> {
    if null_stats.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one resample".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if null_stats.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite resampled statistic".into()));
    }
    let b = null_stats.len();
    let rank = ((1.0 - alpha) * (b + 1) as f64).ceil() as usize;
    let rank = rank.clamp(1, b);
    let mut sorted = null_stats.to_vec();
    sorted.sort_by(|a, c| a.partial_cmp(c).unwrap());
    Ok(sorted[rank - 1])
}

/// How null replicates are produced.
#[derive(Debug, Clone)]
pub enum ResampleScheme {
    /// Shuffle the pooled labels of an (n, m) two-sample problem.
    PooledShuffle { n: usize, m: usize },
    /// Keep block 1 fixed and permute the rows of blocks `2..k`
    /// independently.
    BlockPermute { k: usize, n: usize },
    /// Draw a fresh size-`n` sample from the reference model.
    ParametricDraw { reference: ReferenceModel, n: usize },
}

/// A resampling plan: scheme, replicate count and master seed.
#[derive(Debug, Clone)]
pub struct ResamplePlan {
    pub scheme: ResampleScheme,
    pub b: usize,
    pub seed: u64,
}

/// One replicate's worth of resampled randomness.
#[derive(Debug, Clone)]
pub enum Resample {
    /// A permutation of `0..n+m`; the first `n` entries play the first
    /// sample's role.
    Pooled(Vec<usize>),
    /// One permutation of `0..n` per block `2..k` (`k - 1` in total).
    Blocks(Vec<Vec<usize>>),
    /// A fresh draw from the reference model.
    Fresh(SampleMatrix),
}

impl ResamplePlan {
    pub fn new(scheme: ResampleScheme, b: usize, seed: u64) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidParameter(
                "replicate count must be at least 1".into(),
            ));
        }
        match &scheme {
            ResampleScheme::PooledShuffle { n, m } => {
                if *n == 0 || *m == 0 {
                    return Err(Error::InvalidParameter(
                        "pooled shuffle needs positive group sizes".into(),
                    ));
                }
            }
            ResampleScheme::BlockPermute { k, n } => {
                if *k < 2 || *n == 0 {
                    return Err(Error::InvalidParameter(
                        "block permutation needs k >= 2 and n >= 1".into(),
                    ));
                }
            }
            ResampleScheme::ParametricDraw { reference, n } => {
                reference.check_samplable(*n)?;
            }
        }
        Ok(Self { scheme, b, seed })
    }

    /// Replicate `b`'s resample; a pure function of `(seed, b)`.
    pub fn replicate(&self, b: u64) -> Result<Resample> {
        let mut rng = replicate_rng(self.seed, stream::RESAMPLE, b);
        match &self.scheme {
            ResampleScheme::PooledShuffle { n, m } => {
                let mut perm: Vec<usize> = (0..n + m).collect();
                perm.shuffle(&mut rng);
                Ok(Resample::Pooled(perm))
            }
            ResampleScheme::BlockPermute { k, n } => {
                let perms = (1..*k)
                    .map(|_| {
                        let mut p: Vec<usize> = (0..*n).collect();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect();
                Ok(Resample::Blocks(perms))
            }
            ResampleScheme::ParametricDraw { reference, n } => {
                Ok(Resample::Fresh(reference.sample(*n, &mut rng)?))
            }
        }
    }

    /// All replicates in index order.
    pub fn replicates(&self) -> impl Iterator<Item = Result<Resample>> + '_ {
        (0..self.b as u64).map(move |b| self.replicate(b))
    }
}
