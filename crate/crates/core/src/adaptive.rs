//! Adaptive tests: maximize the studentized statistic over a scaling grid
//! and calibrate the maximum itself by resampling (fresh null draws for
//! goodness-of-fit, pooled shuffles for homogeneity, block permutations for
//! independence). Every resample recomputes the full grid maximum, so the
//! calibration is exact for the discretized statistic.
//!
//! The unnormalized variant maximizes the raw squared discrepancy over the
//! same grid on dimension-rescaled distances and is calibrated identically;
//! it serves as a comparator for the self-normalized test.

use rand::seq::SliceRandom;

use crate::calibrate::{empirical_quantile, replicate_rng, resample_pvalue, stream};
use crate::error::{Error, Result};
use crate::gof::{gof_gamma2, gof_stat, ReferenceModel};
use crate::hom::PooledKernel;
use crate::ind::{BlockGrams, BlockKernels, Estimator};
use crate::kernel::{gaussian_gram, pairwise_sqdist, Scale, ScalingGrid};
use crate::par;
use crate::sample::{BlockLayout, SampleMatrix};

/// Exact maximum of `stat_fn` over the grid with the smallest-`nu`
/// tie-break; the per-point values are returned for diagnostics.
pub fn adaptive_stat<F>(mut stat_fn: F, grid: &ScalingGrid) -> Result<(f64, f64, Vec<(f64, f64)>)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty scaling grid".into()));
    }
    let mut per_nu = Vec::with_capacity(grid.len());
    for &nu in grid.values() {
        let t = stat_fn(nu).map_err(|e| e.at_nu(nu))?;
        per_nu.push((nu, t));
    }
    let (mut t_max, mut nu_argmax) = (f64::NEG_INFINITY, grid.values()[0]);
    for &(nu, t) in &per_nu {
        if t > t_max {
            t_max = t;
            nu_argmax = nu;
        }
    }
    Ok((t_max, nu_argmax, per_nu))
}

/// Which statistic is maximized over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptiveMode {
    SelfNormalized,
    Unnormalized,
}

/// The testing problem an adaptive statistic is built for.
pub enum AdaptiveProblem<'a> {
    Gof {
        x: &'a SampleMatrix,
        reference: &'a ReferenceModel,
    },
    Hom {
        x: &'a SampleMatrix,
        y: &'a SampleMatrix,
    },
    Ind {
        x: &'a SampleMatrix,
        layout: &'a BlockLayout,
        estimator: Estimator,
    },
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AdaptiveReport {
    pub t_max: f64,
    pub nu_argmax: f64,
    pub per_nu: Vec<(f64, f64)>,
    pub p_value: f64,
    /// Empirical upper-alpha critical value of the resampled maxima.
    pub q_hat: f64,
    pub mode: AdaptiveMode,
    pub rescaled_by_dim: bool,
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub reject: bool,
}

/// Configuration for [`adaptive_test_config`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveConfig {
    pub alpha: f64,
    pub b: usize,
    pub seed: u64,
    pub mode: AdaptiveMode,
    pub rescale_by_dim: bool,
}

/// Self-normalized adaptive test with dimension-rescaled distances.
pub fn adaptive_test(
    problem: &AdaptiveProblem<'_>,
    grid: &ScalingGrid,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<AdaptiveReport> {
    adaptive_test_config(
        problem,
        grid,
        AdaptiveConfig {
            alpha,
            b,
            seed,
            mode: AdaptiveMode::SelfNormalized,
            rescale_by_dim: true,
        },
    )
}

/// Unnormalized adaptive comparator: the raw squared discrepancy maximized
/// over the grid on dimension-rescaled distances, calibrated identically.
pub fn unnormalized_adaptive_test(
    problem: &AdaptiveProblem<'_>,
    grid: &ScalingGrid,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<AdaptiveReport> {
    adaptive_test_config(
        problem,
        grid,
        AdaptiveConfig {
            alpha,
            b,
            seed,
            mode: AdaptiveMode::Unnormalized,
            rescale_by_dim: true,
        },
    )
}

/// Observed unnormalized maximum and argmax without calibration.
pub fn unnormalized_adaptive_stat(
    problem: &AdaptiveProblem<'_>,
    grid: &ScalingGrid,
) -> Result<(f64, f64, Vec<(f64, f64)>)> {
    match problem {
        AdaptiveProblem::Gof { x, reference } => adaptive_stat(
            |nu| gof_gamma2(x, Scale::rescaled(nu), reference),
            grid,
        ),
        AdaptiveProblem::Hom { x, y } => {
            let pooled = x.vstack(y)?;
            let dist = pairwise_sqdist(&pooled, true);
            let idx: Vec<usize> = (0..pooled.n()).collect();
            adaptive_stat(
                |nu| {
                    let gram = gaussian_gram(&dist, nu)?;
                    Ok(PooledKernel::from_gram(gram, x.n(), y.n()).gamma2_for(&idx))
                },
                grid,
            )
        }
        AdaptiveProblem::Ind {
            x,
            layout,
            estimator,
        } => adaptive_stat(
            |nu| {
                let blocks = BlockGrams::from_sample(x, layout, Scale::rescaled(nu))?;
                BlockKernels::new(blocks).gamma2_with_perms(*estimator, &[])
            },
            grid,
        ),
    }
}

/// Run an adaptive test, returning the report and the resampled maxima.
pub fn adaptive_test_with_null(
    problem: &AdaptiveProblem<'_>,
    grid: &ScalingGrid,
    cfg: AdaptiveConfig,
) -> Result<(AdaptiveReport, Vec<f64>)> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0, 1), got {}",
            cfg.alpha
        )));
    }
    if cfg.b < 1 {
        return Err(Error::InvalidParameter(
            "resampling calibration needs b >= 1".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty scaling grid".into()));
    }
    let (per_nu, maxima) = match problem {
        AdaptiveProblem::Hom { x, y } => hom_grid_resample(x, y, grid, &cfg)?,
        AdaptiveProblem::Ind {
            x,
            layout,
            estimator,
        } => ind_grid_resample(x, layout, *estimator, grid, &cfg)?,
        AdaptiveProblem::Gof { x, reference } => gof_grid_resample(x, reference, grid, &cfg)?,
    };
    let (mut t_max, mut nu_argmax) = (f64::NEG_INFINITY, grid.values()[0]);
    for &(nu, t) in &per_nu {
        if t > t_max {
            t_max = t;
            nu_argmax = nu;
        }
    }
    let p_value = resample_pvalue(t_max, &maxima)?;
    let q_hat = empirical_quantile(&maxima, cfg.alpha)?;
    let report = AdaptiveReport {
        t_max,
        nu_argmax,
        per_nu,
        p_value,
        q_hat,
        mode: cfg.mode,
        rescaled_by_dim: cfg.rescale_by_dim,
        b: cfg.b,
        seed: cfg.seed,
        alpha: cfg.alpha,
        reject: p_value <= cfg.alpha,
    };
    Ok((report, maxima))
}

/// Run an adaptive test with full control over mode and rescaling.
pub fn adaptive_test_config(
    problem: &AdaptiveProblem<'_>,
    grid: &ScalingGrid,
    cfg: AdaptiveConfig,
) -> Result<AdaptiveReport> {
    adaptive_test_with_null(problem, grid, cfg).map(|(report, _)| report)
}

fn scale_for(cfg: &AdaptiveConfig, nu: f64) -> Scale {
    Scale {
        nu,
        rescale_by_dim: cfg.rescale_by_dim,
    }
}

/// Pooled-shuffle resampling over the grid, one Gram in memory at a time.
fn hom_grid_resample(
    x: &SampleMatrix,
    y: &SampleMatrix,
    grid: &ScalingGrid,
    cfg: &AdaptiveConfig,
) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    let pooled = x.vstack(y)?;
    let size = pooled.n();
    let dist = pairwise_sqdist(&pooled, cfg.rescale_by_dim);
    let identity: Vec<usize> = (0..size).collect();
    let mut per_nu = Vec::with_capacity(grid.len());
    let mut maxima = vec![f64::NEG_INFINITY; cfg.b];
    for &nu in grid.values() {
        let gram = gaussian_gram(&dist, nu).map_err(|e| e.at_nu(nu))?;
        let pk = PooledKernel::from_gram(gram, x.n(), y.n());
        let stat_for: Box<dyn Fn(&[usize]) -> f64 + Sync> = match cfg.mode {
            AdaptiveMode::SelfNormalized => {
                let s_hat = pk.variance().map_err(|e| e.at_nu(nu))?.1.sqrt();
                let pk_ref = &pk;
                Box::new(move |idx: &[usize]| pk_ref.t_stat_for(idx, s_hat))
            }
            AdaptiveMode::Unnormalized => {
                let pk_ref = &pk;
                Box::new(move |idx: &[usize]| pk_ref.gamma2_for(idx))
            }
        };
        per_nu.push((nu, stat_for(&identity)));
        let seed = cfg.seed;
        par::for_each_indexed(&mut maxima, |t, slot| {
            let mut rng = replicate_rng(seed, stream::RESAMPLE, t as u64);
            let mut perm: Vec<usize> = (0..size).collect();
            perm.shuffle(&mut rng);
            let v = stat_for(&perm);
            if v > *slot {
                *slot = v;
            }
        });
    }
    Ok((per_nu, maxima))
}

/// Block-permutation resampling over the grid.
fn ind_grid_resample(
    x: &SampleMatrix,
    layout: &BlockLayout,
    estimator: Estimator,
    grid: &ScalingGrid,
    cfg: &AdaptiveConfig,
) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    let n = x.n();
    let k = layout.k();
    let mut per_nu = Vec::with_capacity(grid.len());
    let mut maxima = vec![f64::NEG_INFINITY; cfg.b];
    for &nu in grid.values() {
        let blocks = BlockGrams::from_sample(x, layout, scale_for(cfg, nu))
            .map_err(|e| e.at_nu(nu))?;
        let kernels = BlockKernels::new(blocks);
        let denom = match cfg.mode {
            AdaptiveMode::SelfNormalized => {
                let s_hat2 = kernels.variance().map_err(|e| e.at_nu(nu))?.1;
                Some(s_hat2.sqrt())
            }
            AdaptiveMode::Unnormalized => None,
        };
        let nf = n as f64;
        let stat = |perms: &[Vec<usize>]| -> Result<f64> {
            let gamma2 = kernels.gamma2_with_perms(estimator, perms)?;
            Ok(match denom {
                Some(s) => nf / std::f64::consts::SQRT_2 * gamma2 / s,
                None => gamma2,
            })
        };
        per_nu.push((nu, stat(&[]).map_err(|e| e.at_nu(nu))?));
        let seed = cfg.seed;
        let mut slots: Vec<Result<f64>> = (0..cfg.b).map(|_| Ok(0.0)).collect();
        par::for_each_indexed(&mut slots, |t, slot| {
            let mut rng = replicate_rng(seed, stream::RESAMPLE, t as u64);
            let perms: Vec<Vec<usize>> = (1..k)
                .map(|_| {
                    let mut p: Vec<usize> = (0..n).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect();
            *slot = stat(&perms);
        });
        for (t, slot) in slots.into_iter().enumerate() {
            let v = slot.map_err(|e| e.at_nu(nu))?;
            if v > maxima[t] {
                maxima[t] = v;
            }
        }
    }
    Ok((per_nu, maxima))
}

/// Fresh-draw resampling over the grid (replicate-outer since every
/// replicate regenerates its distances).
fn gof_grid_resample(
    x: &SampleMatrix,
    reference: &ReferenceModel,
    grid: &ScalingGrid,
    cfg: &AdaptiveConfig,
) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    reference.check_samplable(x.n())?;
    let stat_curve = |data: &SampleMatrix| -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for &nu in grid.values() {
            let scale = scale_for(cfg, nu);
            let t = match cfg.mode {
                AdaptiveMode::SelfNormalized => gof_stat(data, scale, reference),
                AdaptiveMode::Unnormalized => gof_gamma2(data, scale, reference),
            }
            .map_err(|e| e.at_nu(nu))?;
            if t > best {
                best = t;
            }
        }
        Ok(best)
    };
    let mut per_nu = Vec::with_capacity(grid.len());
    for &nu in grid.values() {
        let scale = scale_for(cfg, nu);
        let t = match cfg.mode {
            AdaptiveMode::SelfNormalized => gof_stat(x, scale, reference),
            AdaptiveMode::Unnormalized => gof_gamma2(x, scale, reference),
        }
        .map_err(|e| e.at_nu(nu))?;
        per_nu.push((nu, t));
    }
    let n = x.n();
    let maxima = crate::gof::par_try_map(cfg.b, |t| {
        let mut rng = replicate_rng(cfg.seed, stream::RESAMPLE, t as u64);
        let draw = reference.sample(n, &mut rng)?;
        stat_curve(&draw)
    })?;
    Ok((per_nu, maxima))
}
