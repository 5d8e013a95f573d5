//! Two-sample homogeneity test.
//!
//! The bias-corrected squared discrepancy between samples `X` (size n) and
//! `Y` (size m) is the sum of the two within-sample off-diagonal Gram means
//! minus twice the full cross-Gram mean. Its variance is estimated on the
//! pooled sample by the same three U-statistics as the goodness-of-fit test,
//! floored at `1/min(n,m)^2`, and the studentized statistic is
//! `(n m / (sqrt(2) (n + m))) * gamma2 / s`.
//!
//! Permutation calibration shuffles pooled labels only: the pooled Gram is
//! conjugated by the permutation rather than recomputed, and the pooled
//! variance estimator is invariant under relabeling, so each replicate costs
//! one pass over the smaller group's index pairs.

use crate::calibrate::{replicate_rng, resample_pvalue, stream};
use crate::error::{Error, Result};
use crate::kernel::{gram_of, GramMatrix, Scale};
use crate::normal;
use crate::sample::SampleMatrix;
use crate::ustat::{row_stats, ustat_moments};
use rand::seq::SliceRandom;

/// Pooled Gram with the row sums needed to re-evaluate the statistic under
/// any relabeling in O(min(n,m)^2).
pub struct PooledKernel {
    gram: GramMatrix,
    row_sums: Vec<f64>,
    total: f64,
    n: usize,
    m: usize,
}

impl PooledKernel {
    /// Build from the pooled sample `[X; Y]` at the given scale.
    pub fn new(x: &SampleMatrix, y: &SampleMatrix, scale: Scale) -> Result<Self> {
        scale.validate()?;
        if x.dim() != y.dim() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} vs {}",
                x.dim(),
                y.dim()
            )));
        }
        let pooled = x.vstack(y)?;
        let gram = gram_of(&pooled, scale)?;
        Ok(Self::from_gram(gram, x.n(), y.n()))
    }

    /// Build from a precomputed pooled Gram (rows `0..n` are X).
    pub fn from_gram(gram: GramMatrix, n: usize, m: usize) -> Self {
        let st = row_stats(&gram);
        PooledKernel {
            gram,
            row_sums: st.r,
            total: st.s,
            n,
            m,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Statistic value with the identity assignment (first n rows are X).
    pub fn gamma2_observed(&self) -> f64 {
        let idx: Vec<usize> = (0..self.n + self.m).collect();
        self.gamma2_for(&idx)
    }

    /// `gamma2` when `assignment[..n]` plays X and `assignment[n..]` plays Y.
    pub fn gamma2_for(&self, assignment: &[usize]) -> f64 {
        let (n, m) = (self.n, self.m);
        debug_assert_eq!(assignment.len(), n + m);
        let flat = self.gram.as_slice();
        let size = n + m;
        // Sum pairs over the smaller group; recover the rest from row sums.
        let (group, swapped) = if n <= m {
            (&assignment[..n], false)
        } else {
            (&assignment[n..], true)
        };
        let mut within = 0.0;
        for (a, &ia) in group.iter().enumerate() {
            let row = &flat[ia * size..(ia + 1) * size];
            for &ib in &group[a + 1..] {
                within += row[ib];
            }
        }
        within *= 2.0;
        let rows: f64 = group.iter().map(|&i| self.row_sums[i]).sum();
        let cross = rows - within;
        let other = self.total - within - 2.0 * cross;
        let (wx, wy) = if swapped { (other, within) } else { (within, other) };
        wx / (n as f64 * (n - 1) as f64) + wy / (m as f64 * (m - 1) as f64)
            - 2.0 * cross / (n as f64 * m as f64)
    }

    /// Pooled variance estimator `(s_tilde2, s_hat2)`; invariant under
    /// relabeling and floored at `1/min(n,m)^2`.
    pub fn variance(&self) -> Result<(f64, f64)> {
        let total_n = self.n + self.m;
        if total_n < 4 {
            return Err(Error::SampleTooSmall {
                needed: 4,
                got: total_n,
            });
        }
        let mo = ustat_moments(&self.gram)?;
        let s_tilde2 = mo.u_pair_sq - 2.0 * mo.u_triple + mo.u_quad;
        let nmin = self.n.min(self.m) as f64;
        Ok((s_tilde2, s_tilde2.max(1.0 / (nmin * nmin))))
    }

    /// Studentized statistic for an assignment, with `s_hat` fixed.
    pub fn t_stat_for(&self, assignment: &[usize], s_hat: f64) -> f64 {
        let (n, m) = (self.n as f64, self.m as f64);
        n * m / (std::f64::consts::SQRT_2 * (n + m)) * self.gamma2_for(assignment) / s_hat
    }
}

/// Bias-corrected squared kernel discrepancy between two samples. May be
/// negative.
pub fn hom_gamma2(x: &SampleMatrix, y: &SampleMatrix, scale: Scale) -> Result<f64> {
    Ok(PooledKernel::new(x, y, scale)?.gamma2_observed())
}

/// Pooled variance estimator `(s_tilde2, s_hat2)`.
pub fn hom_variance(x: &SampleMatrix, y: &SampleMatrix, scale: Scale) -> Result<(f64, f64)> {
    PooledKernel::new(x, y, scale)?.variance()
}

/// Studentized two-sample statistic.
pub fn hom_stat(x: &SampleMatrix, y: &SampleMatrix, scale: Scale) -> Result<f64> {
    let pk = PooledKernel::new(x, y, scale)?;
    let (_, s_hat2) = pk.variance()?;
    let idx: Vec<usize> = (0..x.n() + y.n()).collect();
    Ok(pk.t_stat_for(&idx, s_hat2.sqrt()))
}

/// How the homogeneity p-value is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HomCalibration {
    AsymptoticNormal,
    Permutation,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HomReport {
    pub gamma2_hat: f64,
    pub s_hat2: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub nu: f64,
    pub rescaled_by_dim: bool,
    pub calibration: HomCalibration,
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub reject: bool,
}

/// Run the two-sample test. Permutation calibration shuffles the pooled
/// labels `b` times; replicate `t`'s permutation depends only on `(seed, t)`.
pub fn hom_test(
    x: &SampleMatrix,
    y: &SampleMatrix,
    scale: Scale,
    alpha: f64,
    calibration: HomCalibration,
    b: usize,
    seed: u64,
) -> Result<HomReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let pk = PooledKernel::new(x, y, scale)?;
    let (_, s_hat2) = pk.variance()?;
    let s_hat = s_hat2.sqrt();
    let size = x.n() + y.n();
    let idx: Vec<usize> = (0..size).collect();
    let t_obs = pk.t_stat_for(&idx, s_hat);
    let p_value = match calibration {
        HomCalibration::AsymptoticNormal => normal::sf(t_obs),
        HomCalibration::Permutation => {
            if b < 1 {
                return Err(Error::InvalidParameter(
                    "permutation calibration needs b >= 1".into(),
                ));
            }
            let nulls = crate::gof::par_try_map(b, |t| {
                let mut rng = replicate_rng(seed, stream::RESAMPLE, t as u64);
                let mut perm: Vec<usize> = (0..size).collect();
                perm.shuffle(&mut rng);
                Ok(pk.t_stat_for(&perm, s_hat))
            })?;
            resample_pvalue(t_obs, &nulls)?
        }
    };
    Ok(HomReport {
        gamma2_hat: pk.gamma2_observed(),
        s_hat2,
        t_stat: t_obs,
        p_value,
        nu: scale.nu,
        rescaled_by_dim: scale.rescale_by_dim,
        calibration,
        b: if calibration == HomCalibration::Permutation {
            b
        } else {
            0
        },
        seed,
        alpha,
        reject: p_value <= alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn brute_gamma2(x: &SampleMatrix, y: &SampleMatrix, scale: Scale) -> f64 {
        let gx = gram_of(x, scale).unwrap();
        let gy = gram_of(y, scale).unwrap();
        let pooled = x.vstack(y).unwrap();
        let gz = gram_of(&pooled, scale).unwrap();
        let (n, m) = (x.n(), y.n());
        let mut within_x = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    within_x += gx.values()[[i, j]];
                }
            }
        }
        let mut within_y = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    within_y += gy.values()[[i, j]];
                }
            }
        }
        let mut cross = 0.0;
        for i in 0..n {
            for j in 0..m {
                cross += gz.values()[[i, n + j]];
            }
        }
        within_x / (n * (n - 1)) as f64 + within_y / (m * (m - 1)) as f64
            - 2.0 * cross / (n * m) as f64
    }

    fn gaussian_sample(n: usize, seed: u64) -> SampleMatrix {
        let mut rng = replicate_rng(seed, stream::DATA, 0);
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        SampleMatrix::from_column(&vals).unwrap()
    }

    #[test]
    fn two_point_hand_example() {
        // X = Y = {0, 1}, nu = 1: gamma2 = e^{-1} - 1.
        let x = SampleMatrix::from_column(&[0.0, 1.0]).unwrap();
        let g2 = hom_gamma2(&x, &x, Scale::raw(1.0)).unwrap();
        assert!((g2 - ((-1.0f64).exp() - 1.0)).abs() < 1e-12);
        assert!((g2 + 0.632121).abs() < 1e-6);
    }

    #[test]
    fn equal_constant_samples_give_zero() {
        let x = SampleMatrix::from_column(&[3.0, 3.0, 3.0]).unwrap();
        let g2 = hom_gamma2(&x, &x, Scale::raw(2.0)).unwrap();
        assert!(g2.abs() < 1e-14);
    }

    #[test]
    fn gamma2_matches_brute_force() {
        for (n, m, seed) in [(4, 4, 1u64), (5, 8, 2), (8, 3, 3), (7, 7, 4)] {
            let x = gaussian_sample(n, seed);
            let y = gaussian_sample(m, seed + 100);
            let scale = Scale::raw(0.6);
            let fast = hom_gamma2(&x, &y, scale).unwrap();
            let brute = brute_gamma2(&x, &y, scale);
            assert!(
                (fast - brute).abs() < 1e-12,
                "n={n} m={m}: {fast} vs {brute}"
            );
        }
    }

    #[test]
    fn gamma2_exchangeable_for_equal_sizes() {
        let x = gaussian_sample(6, 11);
        let y = gaussian_sample(6, 12);
        let scale = Scale::raw(1.3);
        let a = hom_gamma2(&x, &y, scale).unwrap();
        let b = hom_gamma2(&y, &x, scale).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn copy_of_sample_gives_nonpositive_gamma2() {
        for n in [3, 5, 8] {
            let x = gaussian_sample(n, 50 + n as u64);
            let g2 = hom_gamma2(&x, &x, Scale::raw(0.8)).unwrap();
            assert!(g2 <= 1e-12, "n={n}: gamma2 = {g2}");
        }
    }

    #[test]
    fn pooled_variance_constant_sample() {
        let x = SampleMatrix::from_column(&[1.0, 1.0]).unwrap();
        let y = SampleMatrix::from_column(&[1.0, 1.0, 1.0]).unwrap();
        let (s_tilde2, s_hat2) = hom_variance(&x, &y, Scale::raw(1.0)).unwrap();
        assert!(s_tilde2.abs() < 1e-12);
        assert!((s_hat2 - 0.25).abs() < 1e-15); // floor 1/min(n,m)^2 = 1/4
    }

    #[test]
    fn pooled_variance_matches_gof_structure() {
        let x = gaussian_sample(4, 21);
        let y = gaussian_sample(4, 22);
        let scale = Scale::raw(0.5);
        let (s_tilde2, _) = hom_variance(&x, &y, scale).unwrap();
        let pooled = x.vstack(&y).unwrap();
        let m = ustat_moments(&gram_of(&pooled, scale).unwrap()).unwrap();
        let direct = m.u_pair_sq - 2.0 * m.u_triple + m.u_quad;
        assert!((s_tilde2 - direct).abs() < 1e-13);
    }

    #[test]
    fn permuted_gamma2_matches_recomputation() {
        // Conjugating the pooled Gram must equal rebuilding from permuted data.
        let x = gaussian_sample(5, 31);
        let y = gaussian_sample(7, 32);
        let scale = Scale::raw(0.9);
        let pk = PooledKernel::new(&x, &y, scale).unwrap();
        let pooled = x.vstack(&y).unwrap();
        let perm: Vec<usize> = vec![7, 2, 9, 0, 4, 11, 1, 3, 5, 6, 8, 10];
        let fast = pk.gamma2_for(&perm);
        let px = pooled.select_rows(&perm[..5]).unwrap();
        let py = pooled.select_rows(&perm[5..]).unwrap();
        let slow = hom_gamma2(&px, &py, scale).unwrap();
        assert!((fast - slow).abs() < 1e-12);
    }

    #[test]
    fn identical_points_tie_out_to_p_one() {
        let x = SampleMatrix::from_column(&[1.5; 4]).unwrap();
        let report = hom_test(
            &x,
            &x,
            Scale::raw(1.0),
            0.05,
            HomCalibration::Permutation,
            25,
            3,
        )
        .unwrap();
        assert_eq!(report.p_value, 1.0);
        assert!(!report.reject);
    }

    #[test]
    fn separated_samples_reject() {
        let x = gaussian_sample(30, 61);
        let mut rng = replicate_rng(62, stream::DATA, 1);
        let shifted: Vec<f64> = (0..30)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + 8.0
            })
            .collect();
        let y = SampleMatrix::from_column(&shifted).unwrap();
        let report = hom_test(
            &x,
            &y,
            Scale::raw(1.0),
            0.05,
            HomCalibration::Permutation,
            99,
            5,
        )
        .unwrap();
        assert_eq!(report.p_value, 0.01);
        assert!(report.reject);
    }

    #[test]
    fn stat_zero_when_gamma_zero() {
        let x = SampleMatrix::from_column(&[2.0, 2.0, 2.0]).unwrap();
        let t = hom_stat(&x, &x, Scale::raw(1.0)).unwrap();
        assert!(t.abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = SampleMatrix::from_column(&[0.0, 1.0]).unwrap();
        let y = SampleMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            hom_gamma2(&x, &y, Scale::raw(1.0)),
            Err(Error::InvalidInput(_))
        ));
    }
}
