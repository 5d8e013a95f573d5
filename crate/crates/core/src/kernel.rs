//! Pairwise squared distances, Gaussian Gram matrices, the median heuristic
//! and scaling-parameter grids.
//!
//! The Gaussian kernel used throughout is `exp(-nu * ||x - y||^2)` where the
//! squared distance may optionally be divided by the data dimension first
//! (the `rescale_by_dim` flag). Rescaling keeps kernel values informative in
//! high dimension and is the default for the adaptive and median-heuristic
//! paths; single fixed-`nu` calls default to raw distances.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::par;
use crate::sample::{BlockLayout, SampleMatrix};

/// Scaling parameter plus the distance-rescaling convention it applies to.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Scale {
    pub nu: f64,
    pub rescale_by_dim: bool,
}

impl Scale {
    /// Kernel `exp(-nu * ||x-y||^2)` on raw squared distances.
    pub fn raw(nu: f64) -> Self {
        Self {
            nu,
            rescale_by_dim: false,
        }
    }

    /// Kernel `exp(-nu * ||x-y||^2 / d)`.
    pub fn rescaled(nu: f64) -> Self {
        Self {
            nu,
            rescale_by_dim: true,
        }
    }

    /// Coefficient applied to raw squared distances in dimension `d`.
    pub fn effective_nu(&self, d: usize) -> f64 {
        if self.rescale_by_dim {
            self.nu / d as f64
        } else {
            self.nu
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scaling parameter must be positive and finite, got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// Symmetric matrix of pairwise squared Euclidean distances with zero
/// diagonal. Records whether entries were divided by the data dimension.
#[derive(Debug, Clone)]
pub struct DistMatrix {
    values: Array2<f64>,
    rescaled_by_dim: bool,
}

impl DistMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn rescaled_by_dim(&self) -> bool {
        self.rescaled_by_dim
    }
}

/// `D[i,j] = ||x_i - x_j||^2`, optionally divided by `d`.
///
/// Deterministic regardless of the parallel row partition: every entry is a
/// sequential sum over coordinates.
pub fn pairwise_sqdist(x: &SampleMatrix, rescale_by_dim: bool) -> DistMatrix {
    let n = x.n();
    let d = x.dim();
    let scale = if rescale_by_dim { 1.0 / d as f64 } else { 1.0 };
    let data = x.data();
    let flat = data.as_slice().expect("sample is stored row-major");

    let mut values = Array2::<f64>::zeros((n, n));
    {
        let out = values.as_slice_mut().expect("row-major output");
        par::for_each_row(out, n, |i, row| {
            let xi = &flat[i * d..(i + 1) * d];
            for j in (i + 1)..n {
                let xj = &flat[j * d..(j + 1) * d];
                let mut acc = 0.0;
                for l in 0..d {
                    let diff = xi[l] - xj[l];
                    acc += diff * diff;
                }
                row[j] = acc * scale;
            }
        });
    }
    // Mirror the strict upper triangle.
    for i in 0..n {
        for j in (i + 1)..n {
            values[[j, i]] = values[[i, j]];
        }
    }
    DistMatrix {
        values,
        rescaled_by_dim: rescale_by_dim,
    }
}

/// Symmetric Gram matrix of Gaussian kernel values at one scaling parameter.
/// Diagonal entries are exactly one and all entries lie in `(0, 1]`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    values: Array2<f64>,
    nu: f64,
    rescaled_by_dim: bool,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rescaled_by_dim(&self) -> bool {
        self.rescaled_by_dim
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub(crate) fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("gram is stored row-major")
    }

}

/// `G[i,j] = exp(-nu * D[i,j])` for `nu > 0`.
pub fn gaussian_gram(dist: &DistMatrix, nu: f64) -> Result<GramMatrix> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scaling parameter must be positive and finite, got {nu}"
        )));
    }
    let n = dist.n();
    let mut values = Array2::<f64>::zeros((n, n));
    {
        let src = dist.values.as_slice().expect("row-major distances");
        let out = values.as_slice_mut().expect("row-major output");
        par::for_each_row(out, n, |i, row| {
            let drow = &src[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] = (-nu * drow[j]).exp();
            }
        });
    }
    Ok(GramMatrix {
        values,
        nu,
        rescaled_by_dim: dist.rescaled_by_dim,
    })
}

/// Gram matrix of a sample at the given scale.
pub fn gram_of(x: &SampleMatrix, scale: Scale) -> Result<GramMatrix> {
    scale.validate()?;
    let dist = pairwise_sqdist(x, false);
    let mut gram = gaussian_gram(&dist, scale.effective_nu(x.dim()))?;
    gram.nu = scale.nu;
    gram.rescaled_by_dim = scale.rescale_by_dim;
    Ok(gram)
}

/// Reciprocal of the median strictly-upper-triangle squared distance.
///
/// The returned scaling parameter is in the same units as the distances, so
/// it pairs with the rescaling convention `dist` was built with. For an even
/// number of pairs the two middle order statistics are averaged.
pub fn median_heuristic(dist: &DistMatrix) -> Result<f64> {
    let n = dist.n();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push(dist.values[[i, j]]);
        }
    }
    if pairs.is_empty() {
        return Err(Error::SampleTooSmall { needed: 2, got: n });
    }
    let mid = pairs.len() / 2;
    let median = if pairs.len() % 2 == 1 {
        *pairs
            .select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap())
            .1
    } else {
        let hi = *pairs
            .select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap())
            .1;
        let lo = pairs[..mid]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        (lo + hi) / 2.0
    };
    if median <= 0.0 {
        return Err(Error::DegenerateSample(
            "all pairwise distances are zero".into(),
        ));
    }
    Ok(1.0 / median)
}

/// Strictly increasing grid of scaling parameters inside `[1, n^{2/d}]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScalingGrid {
    values: Vec<f64>,
}

impl ScalingGrid {
    /// Log-uniform grid from `lo` to `hi` inclusive; a single point grid
    /// consists of the upper endpoint.
    pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        if !(lo > 0.0) || !(hi >= lo) {
            return Err(Error::InvalidParameter(format!(
                "invalid grid endpoints [{lo}, {hi}]"
            )));
        }
        if points == 1 || hi == lo {
            return Ok(Self { values: vec![hi] });
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        let mut values: Vec<f64> = (0..points)
            .map(|t| (llo + (lhi - llo) * t as f64 / (points - 1) as f64).exp())
            .collect();
        values[0] = lo;
        *values.last_mut().unwrap() = hi;
        values.dedup();
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 20;

/// Log-uniform grid over `[1, n^{2/d}]`.
pub fn scaling_grid(n: usize, d: usize, points: usize) -> Result<ScalingGrid> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let hi = (n as f64).powf(2.0 / d as f64);
    if hi < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "grid upper endpoint n^(2/d) = {hi} below 1"
        )));
    }
    ScalingGrid::log_spaced(1.0, hi, points)
}

/// One Gram matrix per coordinate block, all at the same scale.
///
/// When `scale` rescales by dimension, every block divides squared distances
/// by the full data dimension, so the Hadamard product of the block Grams
/// equals the full-vector Gram at the same scale.
pub fn block_grams(
    x: &SampleMatrix,
    layout: &BlockLayout,
    scale: Scale,
) -> Result<Vec<GramMatrix>> {
    scale.validate()?;
    layout.check_dim(x.dim())?;
    let nu_eff = scale.effective_nu(x.dim());
    layout
        .ranges()
        .into_iter()
        .map(|(lo, hi)| {
            let block = x.column_block(lo, hi)?;
            let dist = pairwise_sqdist(&block, false);
            let mut gram = gaussian_gram(&dist, nu_eff)?;
            gram.nu = scale.nu;
            gram.rescaled_by_dim = scale.rescale_by_dim;
            Ok(gram)
        })
        .collect()
}
