//! Distinct-index U-statistic building blocks over Gram matrices, reduced to
//! O(n^2) via row-sum identities.
//!
//! For a symmetric matrix `A` with its diagonal ignored, write `r_i` for the
//! off-diagonal row sums, `S = sum_i r_i`, `q_i = sum_{j != i} A[i,j]^2` and
//! `F = sum_i q_i`. Then
//!
//! * `sum over distinct (i, j1, j2) of A[i,j1] A[i,j2] = sum_i (r_i^2 - q_i)`
//! * `sum over distinct (i1, i2, j1, j2) of A[i1,j1] A[i2,j2]
//!    = S^2 - 2F - 4 sum_i (r_i^2 - q_i)`
//!
//! and analogously for two matrices `A`, `B` with mixed row sums. Each sum is
//! divided by the falling factorial `n (n-1) ... (n-m+1)` of its index count,
//! computed in floating point.

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

/// Unbiased pair, squared-pair, triple and quadruple moments of one Gram
/// matrix.
///
/// `u_pair_sq` is the pair moment of the squared entries; since
/// `G_{2nu} = G_nu^2` elementwise it estimates the kernel mean at doubled
/// scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UStatMoments {
    pub u_pair: f64,
    pub u_pair_sq: f64,
    pub u_triple: f64,
    pub u_quad: f64,
}

/// Off-diagonal row sums, total, squared row sums and their total.
pub(crate) struct RowStats {
    pub r: Vec<f64>,
    pub s: f64,
    pub q: Vec<f64>,
    pub f: f64,
}

pub(crate) fn row_stats(a: &GramMatrix) -> RowStats {
    let n = a.n();
    let flat = a.as_slice();
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let row = &flat[i * n..(i + 1) * n];
        let mut ri = 0.0;
        let mut qi = 0.0;
        for (j, &v) in row.iter().enumerate() {
            if j != i {
                ri += v;
                qi += v * v;
            }
        }
        r[i] = ri;
        q[i] = qi;
    }
    let s = r.iter().sum();
    let f = q.iter().sum();
    RowStats { r, s, q, f }
}

fn falling(n: usize, m: usize) -> f64 {
    (0..m).map(|t| (n - t) as f64).product()
}

/// All four single-matrix moments. Requires `n >= 4` so that the quadruple
/// sum has distinct tuples.
pub fn ustat_moments(a: &GramMatrix) -> Result<UStatMoments> {
    let n = a.n();
    if n < 4 {
        return Err(Error::SampleTooSmall { needed: 4, got: n });
    }
    let st = row_stats(a);
    let triple_raw: f64 = (0..n).map(|i| st.r[i] * st.r[i] - st.q[i]).sum();
    let quad_raw = st.s * st.s - 2.0 * st.f - 4.0 * triple_raw;
    Ok(UStatMoments {
        u_pair: st.s / falling(n, 2),
        u_pair_sq: st.f / falling(n, 2),
        u_triple: triple_raw / falling(n, 3),
        u_quad: quad_raw / falling(n, 4),
    })
}

fn check_same_shape(a: &GramMatrix, b: &GramMatrix) -> Result<usize> {
    if a.n() != b.n() {
        return Err(Error::InvalidInput(format!(
            "gram size mismatch: {} vs {}",
            a.n(),
            b.n()
        )));
    }
    Ok(a.n())
}

/// Mixed off-diagonal row sums and the Hadamard total
/// `F_AB = sum_{i != j} A[i,j] B[i,j]`.
fn cross_stats(a: &GramMatrix, b: &GramMatrix) -> (Vec<f64>, Vec<f64>, f64) {
    let n = a.n();
    let fa = a.as_slice();
    let fb = b.as_slice();
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; n];
    let mut f_ab = 0.0;
    for i in 0..n {
        let arow = &fa[i * n..(i + 1) * n];
        let brow = &fb[i * n..(i + 1) * n];
        let mut rai = 0.0;
        let mut rbi = 0.0;
        let mut fi = 0.0;
        for j in 0..n {
            if j != i {
                rai += arow[j];
                rbi += brow[j];
                fi += arow[j] * brow[j];
            }
        }
        ra[i] = rai;
        rb[i] = rbi;
        f_ab += fi;
    }
    (ra, rb, f_ab)
}

/// `(n-3)!/n! * sum over distinct (i, j1, j2) of A[i,j1] B[i,j2]`.
pub fn ustat_triple_cross(a: &GramMatrix, b: &GramMatrix) -> Result<f64> {
    let n = check_same_shape(a, b)?;
    if n < 3 {
        return Err(Error::SampleTooSmall { needed: 3, got: n });
    }
    let (ra, rb, f_ab) = cross_stats(a, b);
    let dot: f64 = ra.iter().zip(&rb).map(|(x, y)| x * y).sum();
    Ok((dot - f_ab) / falling(n, 3))
}

/// `(n-4)!/n! * sum over distinct (i1, i2, j1, j2) of A[i1,j1] B[i2,j2]`.
pub fn ustat_quad_cross(a: &GramMatrix, b: &GramMatrix) -> Result<f64> {
    let n = check_same_shape(a, b)?;
    if n < 4 {
        return Err(Error::SampleTooSmall { needed: 4, got: n });
    }
    let (ra, rb, f_ab) = cross_stats(a, b);
    let sa: f64 = ra.iter().sum();
    let sb: f64 = rb.iter().sum();
    let dot: f64 = ra.iter().zip(&rb).map(|(x, y)| x * y).sum();
    Ok((sa * sb - 4.0 * dot + 2.0 * f_ab) / falling(n, 4))
}
