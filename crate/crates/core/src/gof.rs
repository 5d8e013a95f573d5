//! Goodness-of-fit test against a fixed reference distribution.
//!
//! The kernel is centered with respect to the reference model:
//! `Gbar(x, y) = G(x, y) - E G(X, y) - E G(x, X) + E G(X, X')` with the
//! expectations over the reference. The bias-corrected squared discrepancy is
//! the off-diagonal mean of the centered Gram, its variance is estimated by
//! three distinct-index U-statistics of the uncentered Gram, and the
//! studentized statistic is `(n / sqrt(2)) * gamma2 / s`.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::calibrate::{replicate_rng, resample_pvalue, stream};
use crate::error::{Error, Result};
use crate::kernel::{gram_of, pairwise_sqdist, Scale};
use crate::normal;
use crate::par;
use crate::sample::SampleMatrix;
use crate::ustat::ustat_moments;

/// Null distribution the sample is tested against.
///
/// The isotropic Gaussian reference uses closed-form kernel expectations; an
/// empirical reference replaces them by sample means over the reference
/// sample (double expectation by its off-diagonal U-statistic).
#[derive(Debug, Clone)]
pub enum ReferenceModel {
    AnalyticGaussian { mean: Vec<f64>, var: f64 },
    Empirical { sample: SampleMatrix },
}

impl ReferenceModel {
    pub fn standard_gaussian(d: usize) -> Self {
        ReferenceModel::AnalyticGaussian {
            mean: vec![0.0; d],
            var: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ReferenceModel::AnalyticGaussian { mean, .. } => mean.len(),
            ReferenceModel::Empirical { sample } => sample.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ReferenceModel::AnalyticGaussian { mean, var } => {
                if mean.is_empty() || mean.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidReference(
                        "reference mean must be finite and non-empty".into(),
                    ));
                }
                if !(*var > 0.0) || !var.is_finite() {
                    return Err(Error::InvalidReference(format!(
                        "reference variance must be positive, got {var}"
                    )));
                }
            }
            ReferenceModel::Empirical { sample } => {
                if sample.n() < 2 {
                    return Err(Error::InvalidReference(
                        "empirical reference needs at least two points".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Whether Monte-Carlo calibration can draw size-`n` null samples.
    /// An empirical reference resamples `n` of its points without
    /// replacement, so it needs at least `n` reference points.
    pub fn check_samplable(&self, n: usize) -> Result<()> {
        self.validate()?;
        match self {
            ReferenceModel::AnalyticGaussian { .. } => Ok(()),
            ReferenceModel::Empirical { sample } => {
                if sample.n() < n {
                    Err(Error::CalibrationUnavailable(format!(
                        "empirical reference has {} points, cannot resample {n}",
                        sample.n()
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Draw a fresh size-`n` sample from the reference.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<SampleMatrix> {
        self.check_samplable(n)?;
        match self {
            ReferenceModel::AnalyticGaussian { mean, var } => {
                let d = mean.len();
                let sd = var.sqrt();
                let mut data = Array2::<f64>::zeros((n, d));
                for i in 0..n {
                    for j in 0..d {
                        let z: f64 = StandardNormal.sample(rng);
                        data[[i, j]] = mean[j] + sd * z;
                    }
                }
                SampleMatrix::new(data)
            }
            ReferenceModel::Empirical { sample } => {
                // Partial Fisher-Yates over the index range.
                let r = sample.n();
                let mut idx: Vec<usize> = (0..r).collect();
                for i in 0..n {
                    let j = rng.gen_range(i..r);
                    idx.swap(i, j);
                }
                sample.select_rows(&idx[..n])
            }
        }
    }
}

/// Reference kernel expectations at one effective scaling.
struct RefExpectations<'a> {
    model: &'a ReferenceModel,
    nu_eff: f64,
    double_mean: f64,
}

impl<'a> RefExpectations<'a> {
    fn new(model: &'a ReferenceModel, nu_eff: f64) -> Self {
        let double_mean = match model {
            ReferenceModel::AnalyticGaussian { mean, var } => {
                let d = mean.len() as f64;
                (1.0 + 4.0 * nu_eff * var).powf(-d / 2.0)
            }
            ReferenceModel::Empirical { sample } => {
                let dist = pairwise_sqdist(sample, false);
                let r = sample.n();
                let mut acc = 0.0;
                for i in 0..r {
                    for j in 0..r {
                        if i != j {
                            acc += (-nu_eff * dist.values()[[i, j]]).exp();
                        }
                    }
                }
                acc / (r as f64 * (r - 1) as f64)
            }
        };
        Self {
            model,
            nu_eff,
            double_mean,
        }
    }

    /// `E G(X, x_i)` for every row of `x`.
    fn row_means(&self, x: &SampleMatrix) -> Vec<f64> {
        match self.model {
            ReferenceModel::AnalyticGaussian { mean, var } => {
                let d = mean.len() as f64;
                let denom = 1.0 + 2.0 * self.nu_eff * var;
                let front = denom.powf(-d / 2.0);
                (0..x.n())
                    .map(|i| {
                        let row = x.row(i);
                        let sq: f64 = row
                            .iter()
                            .zip(mean)
                            .map(|(v, m)| (v - m) * (v - m))
                            .sum();
                        front * (-self.nu_eff * sq / denom).exp()
                    })
                    .collect()
            }
            ReferenceModel::Empirical { sample } => {
                let r = sample.n();
                let d = sample.dim();
                let refdata = sample.data();
                let rflat = refdata.as_slice().expect("row-major");
                let xdata = x.data();
                let xflat = xdata.as_slice().expect("row-major");
                let mut out = vec![0.0; x.n()];
                par::for_each_indexed(&mut out, |i, slot| {
                    let xi = &xflat[i * d..(i + 1) * d];
                    let mut acc = 0.0;
                    for t in 0..r {
                        let z = &rflat[t * d..(t + 1) * d];
                        let mut sq = 0.0;
                        for l in 0..d {
                            let diff = xi[l] - z[l];
                            sq += diff * diff;
                        }
                        acc += (-self.nu_eff * sq).exp();
                    }
                    *slot = acc / r as f64;
                });
                out
            }
        }
    }
}

fn check_ref_dim(x: &SampleMatrix, reference: &ReferenceModel) -> Result<()> {
    reference.validate()?;
    if reference.dim() != x.dim() {
        return Err(Error::InvalidReference(format!(
            "reference dimension {} does not match data dimension {}",
            reference.dim(),
            x.dim()
        )));
    }
    Ok(())
}

/// Centered Gram matrix `Gbar(x_i, x_j)` under the reference model.
pub fn centered_gram_gof(
    x: &SampleMatrix,
    scale: Scale,
    reference: &ReferenceModel,
) -> Result<Array2<f64>> {
    scale.validate()?;
    check_ref_dim(x, reference)?;
    let nu_eff = scale.effective_nu(x.dim());
    let exps = RefExpectations::new(reference, nu_eff);
    let mu = exps.row_means(x);
    let gram = gram_of(x, scale)?;
    let n = x.n();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = gram.values()[[i, j]] - mu[i] - mu[j] + exps.double_mean;
        }
    }
    Ok(out)
}

/// Bias-corrected squared kernel discrepancy between the sample and the
/// reference: the off-diagonal mean of the centered Gram. May be negative;
/// has expectation zero when the sample follows the reference.
pub fn gof_gamma2(x: &SampleMatrix, scale: Scale, reference: &ReferenceModel) -> Result<f64> {
    scale.validate()?;
    check_ref_dim(x, reference)?;
    let n = x.n();
    let nu_eff = scale.effective_nu(x.dim());
    let exps = RefExpectations::new(reference, nu_eff);
    let mu = exps.row_means(x);
    let gram = gram_of(x, scale)?;
    let flat = gram.as_slice();
    let mut acc = 0.0;
    for i in 0..n {
        let row = &flat[i * n..(i + 1) * n];
        for j in 0..n {
            if j != i {
                acc += row[j];
            }
        }
    }
    let pair_mean = acc / (n as f64 * (n - 1) as f64);
    let mu_mean = mu.iter().sum::<f64>() / n as f64;
    Ok(pair_mean - 2.0 * mu_mean + exps.double_mean)
}

/// Variance estimator `(s_tilde2, s_hat2)`: three distinct-index U-statistics
/// of the uncentered Gram, floored at `1/n^2`.
pub fn gof_variance(x: &SampleMatrix, scale: Scale) -> Result<(f64, f64)> {
    scale.validate()?;
    let n = x.n();
    if n < 4 {
        return Err(Error::SampleTooSmall { needed: 4, got: n });
    }
    let gram = gram_of(x, scale)?;
    let m = ustat_moments(&gram)?;
    let s_tilde2 = m.u_pair_sq - 2.0 * m.u_triple + m.u_quad;
    let floor = 1.0 / (n as f64 * n as f64);
    Ok((s_tilde2, s_tilde2.max(floor)))
}

/// Studentized statistic `(n / sqrt(2)) * gamma2 / s_hat`.
///
/// For `n < 4` the variance estimator is undefined and the floor `1/n^2`
/// stands in for it.
pub fn gof_stat(x: &SampleMatrix, scale: Scale, reference: &ReferenceModel) -> Result<f64> {
    let n = x.n();
    let gamma2 = gof_gamma2(x, scale, reference)?;
    let s_hat2 = if n >= 4 {
        gof_variance(x, scale)?.1
    } else {
        1.0 / (n as f64 * n as f64)
    };
    Ok(n as f64 / std::f64::consts::SQRT_2 * gamma2 / s_hat2.sqrt())
}

/// Recommended scaling `n^{4/(d+4s)}` for smoothness `s`.
pub fn recommended_nu(n: usize, d: usize, s: f64) -> f64 {
    (n as f64).powf(4.0 / (d as f64 + 4.0 * s))
}

/// How a test's p-value is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GofCalibration {
    /// Upper-tail standard normal p-value.
    AsymptoticNormal,
    /// Fresh draws from the reference model.
    MonteCarlo,
}

/// Goodness-of-fit test report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GofReport {
    pub gamma2_hat: f64,
    pub s_hat2: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub nu: f64,
    pub rescaled_by_dim: bool,
    pub calibration: GofCalibration,
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub reject: bool,
}

/// Run the goodness-of-fit test.
///
/// Monte-Carlo calibration draws `b` fresh size-`n` samples from the
/// reference, recomputes the statistic on each and reports the add-one
/// resampling p-value; replicate `t`'s randomness depends only on
/// `(seed, t)`.
pub fn gof_test(
    x: &SampleMatrix,
    scale: Scale,
    reference: &ReferenceModel,
    alpha: f64,
    calibration: GofCalibration,
    b: usize,
    seed: u64,
) -> Result<GofReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let n = x.n();
    let gamma2 = gof_gamma2(x, scale, reference)?;
    let (_, s_hat2) = if n >= 4 {
        gof_variance(x, scale)?
    } else {
        let floor = 1.0 / (n as f64 * n as f64);
        (floor, floor)
    };
    let t_stat = n as f64 / std::f64::consts::SQRT_2 * gamma2 / s_hat2.sqrt();
    let p_value = match calibration {
        GofCalibration::AsymptoticNormal => normal::sf(t_stat),
        GofCalibration::MonteCarlo => {
            if b < 1 {
                return Err(Error::InvalidParameter(
                    "Monte-Carlo calibration needs b >= 1".into(),
                ));
            }
            reference.check_samplable(n)?;
            let nulls = par_try_map(b, |t| {
                let mut rng = replicate_rng(seed, stream::RESAMPLE, t as u64);
                let draw = reference.sample(n, &mut rng)?;
                gof_stat(&draw, scale, reference)
            })?;
            resample_pvalue(t_stat, &nulls)?
        }
    };
    Ok(GofReport {
        gamma2_hat: gamma2,
        s_hat2,
        t_stat,
        p_value,
        nu: scale.nu,
        rescaled_by_dim: scale.rescale_by_dim,
        calibration,
        b: if calibration == GofCalibration::MonteCarlo {
            b
        } else {
            0
        },
        seed,
        alpha,
        reject: p_value <= alpha,
    })
}

/// Evaluate `f(0..count)` into a vector, propagating the first error.
pub(crate) fn par_try_map<F>(count: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    let mut slots: Vec<Option<Result<f64>>> = (0..count).map(|_| None).collect();
    par::for_each_indexed(&mut slots, |i, slot| *slot = Some(f(i)));
    slots
        .into_iter()
        .map(|s| s.expect("slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::stream;

    fn std_ref() -> ReferenceModel {
        ReferenceModel::standard_gaussian(1)
    }

    #[test]
    fn centered_gram_closed_form_at_origin() {
        // d=1, standard normal reference, nu=1, x=y=0:
        // Gbar = 1 - 2 * 3^{-1/2} + 5^{-1/2}
        let x = SampleMatrix::from_column(&[0.0, 0.0]).unwrap();
        let cg = centered_gram_gof(&x, Scale::raw(1.0), &std_ref()).unwrap();
        let expect = 1.0 - 2.0 / 3.0f64.sqrt() + 1.0 / 5.0f64.sqrt();
        for v in cg.iter() {
            assert!((v - expect).abs() < 1e-12);
        }
        assert!((expect - 0.292513).abs() < 1e-6);
    }

    #[test]
    fn centered_gram_vanishes_as_nu_to_zero() {
        let x = SampleMatrix::from_column(&[0.3, -1.2]).unwrap();
        let cg = centered_gram_gof(&x, Scale::raw(1e-9), &std_ref()).unwrap();
        for v in cg.iter() {
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn empirical_two_point_reference_matches_hand_centering() {
        // Reference equal to {x, y}: Gbar(x, y) = G - (1+G)/2 - (G+1)/2 + G
        //                                       = G - 1, and Gbar(x, x) = 0.
        let x = SampleMatrix::from_column(&[0.0, 1.0]).unwrap();
        let reference = ReferenceModel::Empirical { sample: x.clone() };
        let cg = centered_gram_gof(&x, Scale::raw(1.0), &reference).unwrap();
        let g = (-1.0f64).exp();
        assert!((cg[[0, 1]] - (g - 1.0)).abs() < 1e-12);
        assert!(cg[[0, 0]].abs() < 1e-12);
        assert!(cg[[1, 1]].abs() < 1e-12);
    }

    #[test]
    fn gamma2_two_point_example() {
        let x = SampleMatrix::from_column(&[0.0, 0.0]).unwrap();
        let g2 = gof_gamma2(&x, Scale::raw(1.0), &std_ref()).unwrap();
        let expect = 1.0 - 2.0 / 3.0f64.sqrt() + 1.0 / 5.0f64.sqrt();
        assert!((g2 - expect).abs() < 1e-12);
    }

    #[test]
    fn gamma2_matches_brute_force_double_loop() {
        let mut rng = replicate_rng(3, stream::DATA, 0);
        for n in [5, 8, 10] {
            let vals: Vec<f64> = (0..n).map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            }).collect();
            let x = SampleMatrix::from_column(&vals).unwrap();
            let scale = Scale::raw(0.7);
            let g2 = gof_gamma2(&x, scale, &std_ref()).unwrap();
            let cg = centered_gram_gof(&x, scale, &std_ref()).unwrap();
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        acc += cg[[i, j]];
                    }
                }
            }
            let brute = acc / (n as f64 * (n - 1) as f64);
            assert!((g2 - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma2_unbiased_under_null() {
        // Mean over 10^4 null replicates at n=20 within 3 standard errors of 0.
        let n = 20;
        let reps = 10_000;
        let scale = Scale::raw(1.0);
        let reference = std_ref();
        let stats = par_try_map(reps, |r| {
            let mut rng = replicate_rng(42, stream::DATA, r as u64);
            let x = reference.sample(n, &mut rng)?;
            gof_gamma2(&x, scale, &reference)
        })
        .unwrap();
        let mean = stats.iter().sum::<f64>() / reps as f64;
        let var = stats.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            mean.abs() < 3.0 * se,
            "null mean {mean} exceeds 3 SE = {}",
            3.0 * se
        );
    }

    #[test]
    fn variance_constant_sample_floors() {
        let x = SampleMatrix::from_column(&[2.0; 6]).unwrap();
        let (s_tilde2, s_hat2) = gof_variance(&x, Scale::raw(1.0)).unwrap();
        assert!(s_tilde2.abs() < 1e-12);
        assert!((s_hat2 - 1.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn variance_matches_brute_force() {
        let mut rng = replicate_rng(9, stream::DATA, 1);
        let vals: Vec<f64> = (0..8).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        }).collect();
        let x = SampleMatrix::from_column(&vals).unwrap();
        let scale = Scale::raw(0.9);
        let (s_tilde2, _) = gof_variance(&x, scale).unwrap();
        // Brute-force distinct-index sums on the Gram.
        let gram = gram_of(&x, scale).unwrap();
        let v = gram.values();
        let n = 8usize;
        let mut pair_sq = 0.0;
        let mut triple = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    pair_sq += v[[i, j]] * v[[i, j]];
                }
            }
        }
        pair_sq /= (n * (n - 1)) as f64;
        for i in 0..n {
            for j1 in 0..n {
                for j2 in 0..n {
                    if i != j1 && i != j2 && j1 != j2 {
                        triple += v[[i, j1]] * v[[i, j2]];
                    }
                }
            }
        }
        triple /= (n * (n - 1) * (n - 2)) as f64;
        for i1 in 0..n {
            for i2 in 0..n {
                for j1 in 0..n {
                    for j2 in 0..n {
                        if i1 != i2 && i1 != j1 && i1 != j2 && i2 != j1 && i2 != j2 && j1 != j2 {
                            quad += v[[i1, j1]] * v[[i2, j2]];
                        }
                    }
                }
            }
        }
        quad /= (n * (n - 1) * (n - 2) * (n - 3)) as f64;
        let brute = pair_sq - 2.0 * triple + quad;
        assert!((s_tilde2 - brute).abs() < 1e-10 * brute.abs().max(1.0));
    }

    #[test]
    fn stat_zero_gamma_gives_zero() {
        // Constant sample at the reference mean with tiny nu: gamma2 ~ 0.
        let x = SampleMatrix::from_column(&[0.5, -0.5, 0.25, -0.25]).unwrap();
        let scale = Scale::raw(1e-12);
        let t = gof_stat(&x, scale, &std_ref()).unwrap();
        assert!(t.abs() < 1e-6);
    }

    #[test]
    fn stat_two_point_composition() {
        // n=2 constant sample: s_hat2 falls back to the floor 1/4, so
        // T = (2/sqrt(2)) * 2 * gamma2.
        let x = SampleMatrix::from_column(&[0.0, 0.0]).unwrap();
        let t = gof_stat(&x, Scale::raw(1.0), &std_ref()).unwrap();
        let gamma = 1.0 - 2.0 / 3.0f64.sqrt() + 1.0 / 5.0f64.sqrt();
        let expect = 2.0 / std::f64::consts::SQRT_2 * gamma / 0.5;
        assert!((t - expect).abs() < 1e-12);
        assert!((t - 0.827).abs() < 1e-3);
    }

    #[test]
    fn asymptotic_p_at_quantile() {
        // If T equals z_{0.05} the asymptotic p-value is 0.05.
        let z = normal::upper_quantile(0.05);
        assert!((normal::sf(z) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_pvalue_extreme() {
        // Far-off sample: observed exceeds all 99 null draws.
        let mut rng = replicate_rng(5, stream::DATA, 7);
        let reference = std_ref();
        let shifted: Vec<f64> = (0..40)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + 6.0
            })
            .collect();
        let x = SampleMatrix::from_column(&shifted).unwrap();
        let report = gof_test(
            &x,
            Scale::raw(1.0),
            &reference,
            0.05,
            GofCalibration::MonteCarlo,
            99,
            11,
        )
        .unwrap();
        assert!((report.p_value - 0.01).abs() < 1e-12);
        assert!(report.reject);
    }

    #[test]
    fn empirical_reference_too_small_for_mc() {
        let x = SampleMatrix::from_column(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let reference = ReferenceModel::Empirical {
            sample: SampleMatrix::from_column(&[0.0, 1.0]).unwrap(),
        };
        let err = gof_test(
            &x,
            Scale::raw(1.0),
            &reference,
            0.05,
            GofCalibration::MonteCarlo,
            9,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::CalibrationUnavailable(_)));
    }

    /// Exact population value of the squared centered kernel for a standard
    /// normal sample in one dimension.
    fn centered_sq_mean(nu: f64) -> f64 {
        (1.0 + 8.0 * nu).powf(-0.5)
            - 2.0 * ((1.0 + 2.0 * nu) * (1.0 + 6.0 * nu)).powf(-0.5)
            + 1.0 / (1.0 + 4.0 * nu)
    }

    #[test]
    fn gaussian_norm_consistency() {
        // X ~ N(0,1), n=500, d=1. At nu=25 the estimator must match the
        // exact closed-form population value; the (2 nu / pi)^{1/2}-scaled
        // estimate approaches ||p0||_{L2}^2 = (4 pi)^{-1/2} as nu grows and
        // sits within the 15% band by nu = 100.
        let reference = std_ref();
        let mut rng = replicate_rng(2024, stream::DATA, 0);
        let x = reference.sample(500, &mut rng).unwrap();
        let (_, s_hat2) = gof_variance(&x, Scale::raw(25.0)).unwrap();
        assert!(
            (s_hat2 - centered_sq_mean(25.0)).abs() / centered_sq_mean(25.0) < 0.10,
            "s_hat2 {s_hat2} vs population {}",
            centered_sq_mean(25.0)
        );
        let (_, s_hat2_hi) = gof_variance(&x, Scale::raw(100.0)).unwrap();
        let scaled = (2.0 * 100.0 / std::f64::consts::PI).sqrt() * s_hat2_hi;
        let target = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert!(
            (scaled - target).abs() / target < 0.15,
            "scaled variance {scaled} vs {target}"
        );
    }

    #[test]
    fn recommended_nu_formula() {
        assert!((recommended_nu(1000, 1, 2.0) - 1000f64.powf(4.0 / 9.0)).abs() < 1e-12);
    }
}
