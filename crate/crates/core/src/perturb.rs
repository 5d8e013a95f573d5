//! Alternative-distribution generators: smooth bump perturbations of the
//! uniform density with known L2 separation, and the four benchmark
//! experiment settings.
//!
//! The perturbed density on `[0,1]^d` is
//! `p(x) = 1 + r * sum_k a_k * (b^{d/2} / ||phi||) * phi(b x - x_k)` where
//! `phi` is a tensor product of a smooth, compactly supported, mean-zero
//! profile and the grid points `x_k` range over `{0..b-1}^d`; the bumps have
//! disjoint supports, so `||p - 1||_{L2} = r * b^{d/2}` exactly.

use std::sync::OnceLock;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::calibrate::{replicate_rng, stream};
use crate::error::{Error, Result};
use crate::quad;
use crate::sample::{BlockLayout, SampleMatrix};

/// Smooth mean-zero profile on `(0, 1)`: a positive lobe on the first half
/// and its negated mirror on the second half.
pub fn bump_phi0(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    if t < 0.5 {
        let u = 4.0 * t - 1.0;
        let den = 1.0 - u * u;
        if den <= 0.0 {
            0.0
        } else {
            (-1.0 / den).exp()
        }
    } else {
        let u = 4.0 * t - 3.0;
        let den = 1.0 - u * u;
        if den <= 0.0 {
            0.0
        } else {
            -(-1.0 / den).exp()
        }
    }
}

/// Tensor-product profile on `(0, 1)^d`.
pub fn bump_phi(x: &[f64]) -> f64 {
    x.iter().map(|&t| bump_phi0(t)).product()
}

/// `||phi0||_{L2[0,1]}`, by quadrature, cached.
pub fn phi0_l2() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| {
        quad::integrate_panels(|t| bump_phi0(t) * bump_phi0(t), 0.0, 1.0, 8).sqrt()
    })
}

/// `||phi0||_inf`, by dense grid search, cached.
pub fn phi0_max() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| {
        (0..=40_000)
            .map(|i| bump_phi0(i as f64 / 40_000.0).abs())
            .fold(0.0, f64::max)
    })
}

/// Squared Sobolev norm `int (1 + w^2)^s |F phi0(w)|^2 dw` by Fourier
/// quadrature (one-dimensional profile only).
pub fn phi0_sobolev_sq(s: f64) -> f64 {
    let transform_sq = |w: f64| -> f64 {
        let re = quad::integrate_panels(|t| bump_phi0(t) * (w * t).cos(), 0.0, 1.0, 4);
        let im = quad::integrate_panels(|t| -bump_phi0(t) * (w * t).sin(), 0.0, 1.0, 4);
        (re * re + im * im) / (2.0 * std::f64::consts::PI)
    };
    // The transform of the smooth compactly supported profile decays faster
    // than any polynomial; the tail beyond |w| = 220 is negligible at the
    // tolerances used here.
    quad::integrate_panels(
        |w| (1.0 + w * w).powf(s) * transform_sq(w),
        -220.0,
        220.0,
        220,
    )
}

/// A bump-grid perturbation of the uniform density on `[0,1]^d`.
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    d: usize,
    b: usize,
    r: f64,
    signs: Vec<i8>,
    /// Nominal smoothness label used by scaling recommendations.
    pub s: f64,
    /// Nominal Sobolev radius label.
    pub m: f64,
}

impl PerturbationSpec {
    /// Validates the sign count (`b^d`) and nonnegativity of the density:
    /// `r * b^{d/2} * ||phi||_inf / ||phi||_{L2} <= 1`.
    pub fn new(d: usize, b: usize, r: f64, signs: Vec<i8>, s: f64, m: f64) -> Result<Self> {
        if d == 0 || b == 0 {
            return Err(Error::InvalidSpec(
                "dimension and bump count must be positive".into(),
            ));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "amplitude must be nonnegative and finite, got {r}"
            )));
        }
        let cells = b.pow(d as u32);
        if signs.len() != cells {
            return Err(Error::InvalidSpec(format!(
                "need {cells} signs (b^d), got {}",
                signs.len()
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidSpec("signs must be +1 or -1".into()));
        }
        let spec = Self {
            d,
            b,
            r,
            signs,
            s,
            m,
        };
        if spec.sup_deviation() > 1.0 + 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "density would be negative: sup deviation {} > 1",
                spec.sup_deviation()
            )));
        }
        Ok(spec)
    }

    /// Alternating-sign convenience constructor.
    pub fn alternating(d: usize, b: usize, r: f64, s: f64, m: f64) -> Result<Self> {
        let cells = b.pow(d as u32);
        let signs = (0..cells).map(|k| if k % 2 == 0 { 1 } else { -1 }).collect();
        Self::new(d, b, r, signs, s, m)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bumps_per_axis(&self) -> usize {
        self.b
    }

    pub fn amplitude(&self) -> f64 {
        self.r
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    fn phi_l2(&self) -> f64 {
        phi0_l2().powi(self.d as i32)
    }

    fn phi_max(&self) -> f64 {
        phi0_max().powi(self.d as i32)
    }

    /// `sup |p - 1| = r * b^{d/2} * ||phi||_inf / ||phi||_{L2}`.
    pub fn sup_deviation(&self) -> f64 {
        self.r * (self.b as f64).powf(self.d as f64 / 2.0) * self.phi_max() / self.phi_l2()
    }

    /// Upper bound for the rejection sampler: `1 + sup |p - 1|`.
    pub fn envelope_bound(&self) -> f64 {
        1.0 + self.sup_deviation()
    }

    /// Flattened bump index of the cell containing `x`, if inside the cube.
    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let b = self.b as f64;
        let mut idx = 0usize;
        for &xl in x {
            if !(0.0..=1.0).contains(&xl) {
                return None;
            }
            let cell = ((xl * b) as usize).min(self.b - 1);
            idx = idx * self.b + cell;
        }
        Some(idx)
    }
}

/// Density value at `x`; zero outside the unit cube. Exactly one bump term
/// can be nonzero at any point.
pub fn perturbed_density(spec: &PerturbationSpec, x: &[f64]) -> f64 {
    assert_eq!(x.len(), spec.d, "point dimension mismatch");
    let Some(cell) = spec.cell_of(x) else {
        return 0.0;
    };
    let b = spec.b as f64;
    let mut phi = 1.0;
    let mut idx = cell;
    // Recover per-axis cells from the flattened index (row-major).
    let mut cells = vec![0usize; spec.d];
    for l in (0..spec.d).rev() {
        cells[l] = idx % spec.b;
        idx /= spec.b;
    }
    for (l, &xl) in x.iter().enumerate() {
        phi *= bump_phi0(b * xl - cells[l] as f64);
    }
    let amp = b.powf(spec.d as f64 / 2.0) / spec.phi_l2();
    1.0 + spec.r * spec.signs[cell] as f64 * amp * phi
}

/// Exact L2 separation from the uniform density: `Delta = r * b^{d/2}`.
pub fn l2_separation(spec: &PerturbationSpec) -> f64 {
    spec.r * (spec.b as f64).powf(spec.d as f64 / 2.0)
}

/// Draw `n` points by rejection against the uniform envelope; deterministic
/// given the seed.
pub fn sample_perturbed(spec: &PerturbationSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    let mut rng = replicate_rng(seed, stream::DATA, 0);
    let bound = spec.envelope_bound();
    let mut data = Array2::<f64>::zeros((n, spec.d));
    let mut point = vec![0.0; spec.d];
    for i in 0..n {
        loop {
            for p in point.iter_mut() {
                *p = rng.gen::<f64>();
            }
            let v: f64 = rng.gen();
            if v * bound <= perturbed_density(spec, &point) {
                break;
            }
        }
        for (l, &p) in point.iter().enumerate() {
            data[[i, l]] = p;
        }
    }
    SampleMatrix::new(data)
}

/// Bump configuration reaching separation `delta` while keeping the Sobolev
/// budget `m` at smoothness `s`: the largest admissible bump count
/// `b = floor((m ||phi||_{L2}^2 / ||phi||_{W^{s,2}})^{1/s} delta^{-1/s})`
/// and `r = delta / b^{d/2}`. One-dimensional profiles only.
pub fn spec_from_separation(delta: f64, s: f64, m: f64, signs_seed: u64) -> Result<PerturbationSpec> {
    if !(delta > 0.0) || !(s > 0.0) || !(m > 0.0) {
        return Err(Error::InvalidSpec(
            "separation, smoothness and radius must be positive".into(),
        ));
    }
    let l2 = phi0_l2();
    let sob = phi0_sobolev_sq(s).sqrt();
    let b = ((m * l2 * l2 / sob).powf(1.0 / s) * delta.powf(-1.0 / s)).floor();
    if b < 1.0 {
        return Err(Error::InvalidSpec(format!(
            "separation {delta} too large for radius {m} at smoothness {s}"
        )));
    }
    let b = b as usize;
    let r = delta / (b as f64).sqrt();
    let mut rng = replicate_rng(signs_seed, stream::DATA, 1);
    let signs = (0..b)
        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
        .collect();
    PerturbationSpec::new(1, b, r, signs, s, m)
}

/// The four benchmark experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ExperimentSetting {
    /// Two-sample: standard normal against a five-spike normal mixture.
    I,
    /// Joint independence of five coordinates coupled through a sign product.
    II,
    /// Two-sample in dimension d: unit covariance against `(1 + 2/sqrt(d))`.
    III { d: usize },
    /// Independence of the two halves of a scale mixture in dimension d.
    IV { d: usize },
}

/// Data produced by one experiment replicate.
pub enum ExperimentData {
    Hom { x: SampleMatrix, y: SampleMatrix },
    Ind { x: SampleMatrix, layout: BlockLayout },
}

impl ExperimentSetting {
    pub fn parse(tag: &str) -> Option<ExperimentSetting> {
        match tag.to_ascii_uppercase().as_str() {
            "I" | "1" => Some(ExperimentSetting::I),
            "II" | "2" => Some(ExperimentSetting::II),
            "III" | "3" => Some(ExperimentSetting::III { d: 100 }),
            "IV" | "4" => Some(ExperimentSetting::IV { d: 100 }),
            _ => None,
        }
    }

    pub fn with_dim(self, d: usize) -> Result<ExperimentSetting> {
        match self {
            ExperimentSetting::III { .. } => {
                if d == 0 {
                    return Err(Error::InvalidParameter("dimension must be positive".into()));
                }
                Ok(ExperimentSetting::III { d })
            }
            ExperimentSetting::IV { .. } => {
                if d < 2 || d % 2 != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "setting IV needs an even dimension >= 2, got {d}"
                    )));
                }
                Ok(ExperimentSetting::IV { d })
            }
            other => Ok(other),
        }
    }

    /// Whether the setting is a two-sample or an independence problem.
    pub fn is_two_sample(&self) -> bool {
        matches!(self, ExperimentSetting::I | ExperimentSetting::III { .. })
    }

    pub fn dim(&self) -> usize {
        match self {
            ExperimentSetting::I => 1,
            ExperimentSetting::II => 5,
            ExperimentSetting::III { d } | ExperimentSetting::IV { d } => *d,
        }
    }

    /// Draw one replicate. `null` replaces the alternative by the matching
    /// null-hypothesis generator (equal distributions, independent blocks).
    pub fn sample(
        &self,
        n: usize,
        m: usize,
        null: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<ExperimentData> {
        match self {
            ExperimentSetting::I => {
                let x = gaussian_column(n, 0.0, 1.0, rng)?;
                let y = if null {
                    gaussian_column(m, 0.0, 1.0, rng)?
                } else {
                    mixture_column(m, rng)?
                };
                Ok(ExperimentData::Hom { x, y })
            }
            ExperimentSetting::II => {
                let mut data = Array2::<f64>::zeros((n, 5));
                for i in 0..n {
                    let mut prod = 1.0;
                    for j in 0..4 {
                        let z: f64 = StandardNormal.sample(rng);
                        data[[i, j]] = z;
                        prod *= z;
                    }
                    let z: f64 = StandardNormal.sample(rng);
                    data[[i, 4]] = if null { z } else { z.abs() * prod.signum() };
                }
                Ok(ExperimentData::Ind {
                    x: SampleMatrix::new(data)?,
                    layout: BlockLayout::unit(5)?,
                })
            }
            ExperimentSetting::III { d } => {
                let sd_alt = if null {
                    1.0
                } else {
                    (1.0 + 2.0 / (*d as f64).sqrt()).sqrt()
                };
                let x = gaussian_matrix(n, *d, 1.0, rng)?;
                let y = gaussian_matrix(m, *d, sd_alt, rng)?;
                Ok(ExperimentData::Hom { x, y })
            }
            ExperimentSetting::IV { d } => {
                let half = d / 2;
                let sd_mix = (1.0 + 6.0 * (*d as f64).powf(-0.6)).sqrt();
                let mut data = Array2::<f64>::zeros((n, *d));
                for i in 0..n {
                    // Under the alternative the two halves share one mixture
                    // label; under the null the labels are independent, which
                    // keeps the marginals and removes the dependence.
                    let label1 = rng.gen::<bool>();
                    let label2 = if null { rng.gen::<bool>() } else { label1 };
                    let sd1 = if label1 { sd_mix } else { 1.0 };
                    let sd2 = if label2 { sd_mix } else { 1.0 };
                    for j in 0..half {
                        let z: f64 = StandardNormal.sample(rng);
                        data[[i, j]] = sd1 * z;
                    }
                    for j in half..*d {
                        let z: f64 = StandardNormal.sample(rng);
                        data[[i, j]] = sd2 * z;
                    }
                }
                Ok(ExperimentData::Ind {
                    x: SampleMatrix::new(data)?,
                    layout: BlockLayout::new(vec![half, half])?,
                })
            }
        }
    }
}

fn gaussian_column(n: usize, mean: f64, sd: f64, rng: &mut ChaCha8Rng) -> Result<SampleMatrix> {
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mean + sd * z
        })
        .collect();
    SampleMatrix::from_column(&vals)
}

fn gaussian_matrix(n: usize, d: usize, sd: f64, rng: &mut ChaCha8Rng) -> Result<SampleMatrix> {
    let mut data = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            data[[i, j]] = sd * z;
        }
    }
    SampleMatrix::new(data)
}

/// Five equal spikes of width 0.05 at `{-1, -0.5, 0, 0.5, 1}` on top of a
/// half-weight standard normal; weights `0.5 + 5 * 0.1 = 1`.
fn mixture_column(m: usize, rng: &mut ChaCha8Rng) -> Result<SampleMatrix> {
    const CENTERS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let vals: Vec<f64> = (0..m)
        .map(|_| {
            let u: f64 = rng.gen();
            let z: f64 = StandardNormal.sample(rng);
            if u < 0.5 {
                z
            } else {
                let idx = (((u - 0.5) / 0.1) as usize).min(4);
                CENTERS[idx] + 0.05 * z
            }
        })
        .collect();
    SampleMatrix::from_column(&vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_hand_values() {
        assert!((bump_phi0(0.25) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((bump_phi0(0.75) + (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(bump_phi0(0.0), 0.0);
        assert_eq!(bump_phi0(0.5), 0.0);
        assert_eq!(bump_phi0(1.0), 0.0);
        assert_eq!(bump_phi0(-0.3), 0.0);
        assert_eq!(bump_phi0(1.7), 0.0);
    }

    #[test]
    fn profile_integrates_to_zero() {
        let v = quad::integrate_panels(bump_phi0, 0.0, 1.0, 8);
        assert!(v.abs() < 1e-10, "integral {v}");
    }

    #[test]
    fn profile_norms() {
        // sup |phi0| is attained at the lobe centers with value e^{-1}.
        assert!((phi0_max() - (-1.0f64).exp()).abs() < 1e-6);
        assert!(phi0_l2() > 0.0 && phi0_l2() < 1.0);
    }

    #[test]
    fn density_uniform_when_amplitude_zero() {
        let spec = PerturbationSpec::alternating(1, 2, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(perturbed_density(&spec, &[0.3]), 1.0);
        assert_eq!(perturbed_density(&spec, &[1.3]), 0.0);
        assert_eq!(perturbed_density(&spec, &[-0.1]), 0.0);
    }

    #[test]
    fn density_integrates_to_one_and_separation_is_exact() {
        let spec = PerturbationSpec::new(1, 2, 0.1, vec![1, -1], 2.0, 1.0).unwrap();
        let mass = quad::integrate_panels(|x| perturbed_density(&spec, &[x]), 0.0, 1.0, 32);
        assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
        let l2sq = quad::integrate_panels(
            |x| {
                let dev = perturbed_density(&spec, &[x]) - 1.0;
                dev * dev
            },
            0.0,
            1.0,
            32,
        );
        assert!((l2sq - 0.02).abs() < 1e-8, "l2sq {l2sq}");
        assert!((l2_separation(&spec) - 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn separation_closed_form() {
        let spec = PerturbationSpec::new(1, 4, 0.1, vec![1, -1, 1, -1], 2.0, 1.0).unwrap();
        assert!((l2_separation(&spec) - 0.2).abs() < 1e-15);
        let spec0 = PerturbationSpec::new(1, 4, 0.0, vec![1, -1, 1, -1], 2.0, 1.0).unwrap();
        assert_eq!(l2_separation(&spec0), 0.0);
        let spec2 = PerturbationSpec::new(1, 4, 0.2, vec![1, -1, 1, -1], 2.0, 1.0).unwrap();
        assert!((l2_separation(&spec2) - 2.0 * l2_separation(&spec)).abs() < 1e-15);
    }

    #[test]
    fn separation_matches_quadrature_in_2d() {
        let spec =
            PerturbationSpec::new(2, 2, 0.05, vec![1, -1, -1, 1], 2.0, 1.0).unwrap();
        // Integrate cell by cell so each panel holds one smooth bump.
        let mut l2sq = 0.0;
        for cx in 0..2 {
            for cy in 0..2 {
                l2sq += quad::integrate_2d(
                    |x, y| {
                        let px = 0.5 * cx as f64 + x;
                        let py = 0.5 * cy as f64 + y;
                        let dev = perturbed_density(&spec, &[px, py]) - 1.0;
                        dev * dev
                    },
                    0.0,
                    0.5,
                );
            }
        }
        let delta = l2_separation(&spec);
        assert!(
            (l2sq - delta * delta).abs() < 1e-8,
            "l2sq {l2sq} vs {}",
            delta * delta
        );
    }

    #[test]
    fn nonnegativity_enforced() {
        // Large amplitude drives the density negative.
        let err = PerturbationSpec::new(1, 2, 2.0, vec![1, -1], 2.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
    }

    #[test]
    fn at_most_one_bump_active() {
        let spec =
            PerturbationSpec::new(1, 4, 0.05, vec![1, -1, 1, -1], 2.0, 1.0).unwrap();
        let b = 4.0f64;
        let amp = b.sqrt() / phi0_l2();
        for i in 0..400 {
            let x = i as f64 / 399.0;
            let mut active = 0;
            for k in 0..4 {
                if bump_phi0(b * x - k as f64).abs() > 0.0 {
                    active += 1;
                }
            }
            assert!(active <= 1, "x = {x}");
            // Density decomposes through the single active bump.
            let direct: f64 = (0..4)
                .map(|k| {
                    spec.signs()[k] as f64 * 0.05 * amp * bump_phi0(b * x - k as f64)
                })
                .sum::<f64>()
                + 1.0;
            assert!((perturbed_density(&spec, &[x]) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_deterministic_and_in_cube() {
        let spec = PerturbationSpec::new(1, 2, 0.3, vec![1, -1], 2.0, 1.0).unwrap();
        let a = sample_perturbed(&spec, 50, 9).unwrap();
        let b = sample_perturbed(&spec, 50, 9).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn sampler_halfcell_frequencies_match_quadrature() {
        let spec = PerturbationSpec::new(1, 2, 0.45, vec![1, -1], 2.0, 1.0).unwrap();
        let n = 100_000;
        let sample = sample_perturbed(&spec, n, 17).unwrap();
        for c in 0..4 {
            let (lo, hi) = (c as f64 * 0.25, (c + 1) as f64 * 0.25);
            let expected = quad::integrate_panels(|x| perturbed_density(&spec, &[x]), lo, hi, 8);
            let count = sample
                .data()
                .iter()
                .filter(|&&v| v >= lo && v < hi)
                .count();
            let freq = count as f64 / n as f64;
            let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!(
                (freq - expected).abs() < 4.0 * sigma,
                "half-cell {c}: freq {freq} vs {expected} (sigma {sigma})"
            );
        }
    }

    #[test]
    fn separation_helper_respects_sobolev_budget() {
        let s = 2.0;
        let m = 150.0;
        let spec = spec_from_separation(0.05, s, m, 3).unwrap();
        assert_eq!(spec.bumps_per_axis(), 2);
        let b = spec.bumps_per_axis() as f64;
        let r = spec.amplitude();
        assert!((l2_separation(&spec) - 0.05).abs() < 1e-12);
        // r^2 b^{1 + 2s} ||phi||_W^2 / ||phi||_L2^2 <= m^2
        let lhs = r * r * b.powf(1.0 + 2.0 * s) * phi0_sobolev_sq(s)
            / (phi0_l2() * phi0_l2());
        assert!(lhs <= m * m + 1e-9, "budget violated: {lhs} > {}", m * m);
    }

    #[test]
    fn experiment_i_mixture_moments() {
        let mut rng = replicate_rng(5, stream::DATA, 0);
        let data = ExperimentSetting::I.sample(10, 50_000, false, &mut rng).unwrap();
        let ExperimentData::Hom { y, .. } = data else {
            panic!("setting I is two-sample");
        };
        // Mixture mean 0; variance 0.5 * 1 + 0.1 * sum(mu^2 + 0.0025).
        let mean = y.data().iter().sum::<f64>() / y.n() as f64;
        let var = y.data().iter().map(|v| v * v).sum::<f64>() / y.n() as f64 - mean * mean;
        let expect_var = 0.5 + 0.1 * (2.0 * (1.0 + 0.25) + 0.0025 * 5.0);
        assert!(mean.abs() < 0.02, "mixture mean {mean}");
        assert!((var - expect_var).abs() < 0.02, "mixture var {var} vs {expect_var}");
    }

    #[test]
    fn experiment_ii_sign_coupling() {
        let mut rng = replicate_rng(6, stream::DATA, 0);
        let data = ExperimentSetting::II.sample(2000, 0, false, &mut rng).unwrap();
        let ExperimentData::Ind { x, layout } = data else {
            panic!("setting II is an independence problem");
        };
        assert_eq!(layout.k(), 5);
        for i in 0..x.n() {
            let prod: f64 = (0..5).map(|j| x.row(i)[j]).product();
            assert!(prod >= 0.0, "row {i} has negative coordinate product");
        }
    }

    #[test]
    fn experiment_ii_fifth_marginal_is_standard_normal() {
        let mut rng = replicate_rng(7, stream::DATA, 0);
        let data = ExperimentSetting::II.sample(10_000, 0, false, &mut rng).unwrap();
        let ExperimentData::Ind { x, .. } = data else {
            panic!()
        };
        let mut v: Vec<f64> = (0..x.n()).map(|i| x.row(i)[4]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, &t) in v.iter().enumerate() {
            let fhat_hi = (i + 1) as f64 / n;
            let fhat_lo = i as f64 / n;
            let f = crate::normal::cdf(t);
            ks = ks.max((fhat_hi - f).abs()).max((f - fhat_lo).abs());
        }
        // 1% critical value ~ 1.63 / sqrt(n)
        assert!(ks < 1.63 / n.sqrt(), "KS distance {ks}");
    }

    #[test]
    fn experiment_iii_variance_ratio() {
        let setting = ExperimentSetting::III { d: 100 };
        let mut rng = replicate_rng(8, stream::DATA, 0);
        let data = setting.sample(5, 20_000, false, &mut rng).unwrap();
        let ExperimentData::Hom { y, .. } = data else {
            panic!()
        };
        let var = y.data().iter().map(|v| v * v).sum::<f64>() / (y.n() * y.dim()) as f64;
        assert!((var - 1.2).abs() < 0.02, "per-coordinate variance {var}");
    }

    #[test]
    fn experiment_iv_layout_and_null() {
        let setting = ExperimentSetting::IV { d: 10 }.with_dim(10).unwrap();
        let mut rng = replicate_rng(9, stream::DATA, 0);
        let data = setting.sample(100, 0, true, &mut rng).unwrap();
        let ExperimentData::Ind { x, layout } = data else {
            panic!()
        };
        assert_eq!(layout.widths(), &[5, 5]);
        assert_eq!(x.dim(), 10);
        assert!(matches!(
            ExperimentSetting::IV { d: 10 }.with_dim(7),
            Err(Error::InvalidParameter(_))
        ));
    }
}
