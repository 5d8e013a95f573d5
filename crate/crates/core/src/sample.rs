//! Sample containers: observation matrices, two-sample pairs and coordinate
//! block layouts.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// `n` observations in `R^d`, one per row. Entries are validated to be finite
/// and the sample must contain at least two observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Array2<f64>,
}

impl SampleMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n < 2 {
            return Err(Error::SampleTooSmall { needed: 2, got: n });
        }
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "sample contains non-finite entries".into(),
            ));
        }
        Ok(Self { data })
    }

    /// Build from row vectors; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::new(data)
    }

    /// Convenience for one-dimensional samples.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        let data = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Columns `[lo, hi)` as a new sample (used for coordinate blocks).
    pub fn column_block(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo >= hi || hi > self.dim() {
            return Err(Error::InvalidLayout(format!(
                "column block {lo}..{hi} out of range for d = {}",
                self.dim()
            )));
        }
        let block = self.data.slice(ndarray::s![.., lo..hi]).to_owned();
        // Rows and finiteness already validated.
        Ok(Self { data: block })
    }

    /// Stack two samples of equal dimension, `self` first.
    pub fn vstack(&self, other: &SampleMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let stacked = ndarray::concatenate(ndarray::Axis(0), &[self.data(), other.data()])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(Self { data: stacked })
    }

    /// Rows selected by `idx` (indices must be in range; duplicates allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.iter().any(|&i| i >= self.n()) {
            return Err(Error::InvalidInput("row index out of range".into()));
        }
        let data = self.data.select(ndarray::Axis(0), idx);
        Self::new(data)
    }
}

/// Partition of the `d` coordinates into `k >= 2` contiguous blocks of widths
/// `d_1, ..., d_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    widths: Vec<usize>,
}

impl BlockLayout {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidLayout(
                "need at least two coordinate blocks".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidLayout("block widths must be positive".into()));
        }
        Ok(Self { widths })
    }

    /// `k` blocks of width one.
    pub fn unit(k: usize) -> Result<Self> {
        Self::new(vec![1; k])
    }

    pub fn k(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn total_dim(&self) -> usize {
        self.widths.iter().sum()
    }

    /// Column ranges `[lo, hi)` of each block.
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.widths.len());
        let mut lo = 0;
        for &w in &self.widths {
            out.push((lo, lo + w));
            lo += w;
        }
        out
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.total_dim() != d {
            return Err(Error::InvalidLayout(format!(
                "block widths sum to {} but data dimension is {d}",
                self.total_dim()
            )));
        }
        Ok(())
    }
}

/// A validated pair of samples over the same space, for homogeneity testing.
#[derive(Debug, Clone)]
pub struct TwoSample {
    pub x: SampleMatrix,
    pub y: SampleMatrix,
}

impl TwoSample {
    pub fn new(x: SampleMatrix, y: SampleMatrix) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} vs {}",
                x.dim(),
                y.dim()
            )));
        }
        Ok(Self { x, y })
    }

    /// Enforce `c <= m/n <= cmax` on the sample-size ratio.
    pub fn check_ratio(&self, c: f64, cmax: f64) -> Result<()> {
        let ratio = self.y.n() as f64 / self.x.n() as f64;
        if ratio < c || ratio > cmax {
            return Err(Error::InvalidInput(format!(
                "sample-size ratio m/n = {ratio:.3} outside [{c}, {cmax}]"
            )));
        }
        Ok(())
    }

    pub fn pooled(&self) -> SampleMatrix {
        self.x.vstack(&self.y).expect("dimensions checked at construction")
    }
}
