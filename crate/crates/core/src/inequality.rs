//! Randomized measurement harness for the anisotropic triple-product
//! estimates and the one-dimensional interpolation inequality.
//!
//! Each estimate is evaluated with implied constant 1: the harness reports
//! the measured ratio `lhs / rhs` rather than asserting a constant. On the
//! torus the estimates hold only for fields that are mean-free along the
//! distinguished axes (a constant has vanishing derivative while the left
//! side does not), so the generators impose those means being zero.
//!
//! Quadrature is the physical-space Riemann sum on the collocation grid,
//! exact for resolved trigonometric polynomials.

use std::fmt;

use num_complex::Complex64;

use crate::error::InequalityError;
use crate::fft::{fft1_inplace, Direction};
use crate::field::SpectralScalarField;
use crate::grid::{Dir, GridSpec};
use crate::init::{random_scalar_field, MeanFree, SpectrumShape};
use crate::ops::deriv_wavenumbers;

/// One measured estimate instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSample {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, defined only when `rhs > 0`.
    pub ratio: Option<f64>,
    /// Degenerate case `rhs = 0` with `lhs > 0`: a precondition violation.
    pub failure: bool,
    pub seed: u64,
}

impl RatioSample {
    fn from_parts(lhs: f64, rhs: f64, seed: u64) -> RatioSample {
        let ratio = (rhs > 0.0).then(|| lhs / rhs);
        RatioSample {
            lhs,
            rhs,
            ratio,
            failure: rhs == 0.0 && lhs > 0.0,
            seed,
        }
    }
}

/// `||prod_axes d_axis f||_{L^2}` via Parseval, with repeated axes allowed.
fn deriv_norm(f: &SpectralScalarField, axes: &[Dir]) -> f64 {
    let grid = f.grid();
    let tables: Vec<(usize, Vec<f64>)> = axes
        .iter()
        .map(|&a| (a.index(), deriv_wavenumbers(grid, a)))
        .collect();
    let mut sum = 0.0;
    for ((i1, i2, i3), v) in f.coeffs().indexed_iter() {
        let m = v.norm_sqr();
        if m == 0.0 {
            continue;
        }
        let idx = [i1, i2, i3];
        let mut weight = 1.0;
        for (ax, k) in &tables {
            let kk = k[idx[*ax]];
            weight *= kk * kk;
        }
        sum += weight * m;
    }
    (grid.volume() * sum).sqrt()
}

fn l2_norm(f: &SpectralScalarField) -> f64 {
    f.l2_norm_sq().sqrt()
}

/// Riemann quadrature of `|f g h|` on the collocation grid.
fn triple_product_quadrature(
    f: &SpectralScalarField,
    g: &SpectralScalarField,
    h: &SpectralScalarField,
) -> f64 {
    let (pf, pg, ph) = (f.to_physical(), g.to_physical(), h.to_physical());
    let sum: f64 = pf
        .iter()
        .zip(pg.iter())
        .zip(ph.iter())
        .map(|((a, b), c)| (a * b * c).abs())
        .sum();
    sum * f.grid().cell_volume()
}

fn check_common_grid(
    f: &SpectralScalarField,
    g: &SpectralScalarField,
    h: &SpectralScalarField,
) -> Result<(), InequalityError> {
    if f.grid() != g.grid() || f.grid() != h.grid() {
        return Err(crate::error::FieldError::GridMismatch.into());
    }
    Ok(())
}

/// First triple-product estimate: one directional derivative per factor.
///
/// `int |f g h| <= ||f||^{1/2} ||d1 f||^{1/2} ||g||^{1/2} ||d2 g||^{1/2}
///  ||h||^{1/2} ||d3 h||^{1/2}` with constant 1; requires `f`, `g`, `h`
/// mean-free along `x1`, `x2`, `x3` respectively.
pub fn lemma21_ratio_a(
    f: &SpectralScalarField,
    g: &SpectralScalarField,
    h: &SpectralScalarField,
    seed: u64,
) -> Result<RatioSample, InequalityError> {
    check_common_grid(f, g, h)?;
    let lhs = triple_product_quadrature(f, g, h);
    let rhs = (l2_norm(f) * deriv_norm(f, &[Dir::X1])).sqrt()
        * (l2_norm(g) * deriv_norm(g, &[Dir::X2])).sqrt()
        * (l2_norm(h) * deriv_norm(h, &[Dir::X3])).sqrt();
    Ok(RatioSample::from_parts(lhs, rhs, seed))
}

/// Second triple-product estimate: mixed horizontal derivatives on `f`,
/// a vertical derivative on `g`, a bare `L^2` factor on `h`.
///
/// Requires `f` mean-free along `x1` and `x2`, and `g` mean-free along `x3`.
pub fn lemma21_ratio_b(
    f: &SpectralScalarField,
    g: &SpectralScalarField,
    h: &SpectralScalarField,
    seed: u64,
) -> Result<RatioSample, InequalityError> {
    check_common_grid(f, g, h)?;
    let lhs = triple_product_quadrature(f, g, h);
    let rhs = (l2_norm(f)
        * deriv_norm(f, &[Dir::X1])
        * deriv_norm(f, &[Dir::X2])
        * deriv_norm(f, &[Dir::X1, Dir::X2]))
    .powf(0.25)
        * (l2_norm(g) * deriv_norm(g, &[Dir::X3])).sqrt()
        * l2_norm(h);
    Ok(RatioSample::from_parts(lhs, rhs, seed))
}

/// One-dimensional interpolation estimate
/// `||f||_{L^q} <= ||f||^{1-theta} ||Lambda^s f||^{theta}` with
/// `theta = (1/s)(1/2 - 1/q)`, on mean-free periodic samples of length `l`.
/// Pass `q = f64::INFINITY` for the sup norm.
pub fn lemma22_ratio(
    samples: &[f64],
    l: f64,
    q: f64,
    s: f64,
    seed: u64,
) -> Result<RatioSample, InequalityError> {
    if q < 2.0 || q.is_nan() {
        return Err(InequalityError::BadExponent(q));
    }
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let min_s = 0.5 - inv_q;
    if s <= min_s || s.is_nan() {
        return Err(InequalityError::BadSmoothness { s, min: min_s });
    }
    let n = samples.len();
    let dx = l / n as f64;
    let mean = samples.iter().sum::<f64>() / n as f64;
    let f: Vec<f64> = samples.iter().map(|v| v - mean).collect();

    let lhs = if q.is_infinite() {
        f.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else {
        (f.iter().map(|v| v.abs().powf(q)).sum::<f64>() * dx).powf(inv_q)
    };

    let mut coeffs: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft1_inplace(&mut coeffs, Direction::Forward);
    let scale = 1.0 / n as f64;
    let fundamental = 2.0 * std::f64::consts::PI / l;
    let mut norm_sq = 0.0;
    let mut lam_sq = 0.0;
    for (i, c) in coeffs.iter().enumerate() {
        let qi = if i <= n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        };
        let m = (c * scale).norm_sqr();
        norm_sq += m;
        if qi != 0 {
            let k = (qi as f64 * fundamental).abs();
            lam_sq += k.powf(2.0 * s) * m;
        }
    }
    let norm = (l * norm_sq).sqrt();
    let lam = (l * lam_sq).sqrt();
    let theta = (0.5 - inv_q) / s;
    let rhs = norm.powf(1.0 - theta) * lam.powf(theta);
    Ok(RatioSample::from_parts(lhs, rhs, seed))
}

/// Which estimate a suite exercises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuiteKind {
    Lemma21A,
    Lemma21B,
    /// The 1D estimate at fixed `(q, s)`; fields are lines of length `l1`
    /// with `n1` samples.
    Lemma22 { q: f64, s: f64 },
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SuiteKind::Lemma21A => write!(f, "lemma21a"),
            SuiteKind::Lemma21B => write!(f, "lemma21b"),
            SuiteKind::Lemma22 { q, s } => write!(f, "lemma22(q={q},s={s})"),
        }
    }
}

/// Aggregate over a batch of random samples.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub kind: SuiteKind,
    pub n_samples: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    /// 50th, 90th, and 99th percentile ratios.
    pub quantiles: [f64; 3],
    /// Count of `rhs = 0` with `lhs > 0` samples.
    pub failures: usize,
    /// Samples where both sides vanished.
    pub skipped: usize,
    pub samples: Vec<RatioSample>,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {} over {} samples", self.kind, self.n_samples)?;
        writeln!(
            f,
            "  max_ratio {:.6e}  mean_ratio {:.6e}",
            self.max_ratio, self.mean_ratio
        )?;
        writeln!(
            f,
            "  p50 {:.6e}  p90 {:.6e}  p99 {:.6e}",
            self.quantiles[0], self.quantiles[1], self.quantiles[2]
        )?;
        write!(f, "  failures {}  skipped {}", self.failures, self.skipped)
    }
}

impl SuiteReport {
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "seed,lhs,rhs,ratio,failure")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.seed,
                s.lhs,
                s.rhs,
                s.ratio.unwrap_or(f64::NAN),
                s.failure
            )?;
        }
        Ok(())
    }
}

fn split_seed(base: u64, sample: u64, field: u64) -> u64 {
    crate::init::derive_seed(crate::init::derive_seed(base, sample), field)
}

/// Run a deterministic randomized suite and aggregate in sample order.
pub fn suite(
    kind: SuiteKind,
    grid: &GridSpec,
    n_samples: usize,
    seed: u64,
    shape: SpectrumShape,
) -> Result<SuiteReport, InequalityError> {
    assert!(n_samples >= 1, "need at least one sample");
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples as u64 {
        let sample = match kind {
            SuiteKind::Lemma21A => {
                let f = random_scalar_field(
                    grid,
                    split_seed(seed, i, 0),
                    shape,
                    1.0,
                    MeanFree::along(&[Dir::X1]),
                );
                let g = random_scalar_field(
                    grid,
                    split_seed(seed, i, 1),
                    shape,
                    1.0,
                    MeanFree::along(&[Dir::X2]),
                );
                let h = random_scalar_field(
                    grid,
                    split_seed(seed, i, 2),
                    shape,
                    1.0,
                    MeanFree::along(&[Dir::X3]),
                );
                lemma21_ratio_a(&f, &g, &h, split_seed(seed, i, 0))?
            }
            SuiteKind::Lemma21B => {
                let f = random_scalar_field(
                    grid,
                    split_seed(seed, i, 0),
                    shape,
                    1.0,
                    MeanFree::along(&[Dir::X1, Dir::X2]),
                );
                let g = random_scalar_field(
                    grid,
                    split_seed(seed, i, 1),
                    shape,
                    1.0,
                    MeanFree::along(&[Dir::X3]),
                );
                let h = random_scalar_field(
                    grid,
                    split_seed(seed, i, 2),
                    shape,
                    1.0,
                    MeanFree::default(),
                );
                lemma21_ratio_b(&f, &g, &h, split_seed(seed, i, 0))?
            }
            SuiteKind::Lemma22 { q, s } => {
                let line = random_line(grid, split_seed(seed, i, 0), shape);
                lemma22_ratio(&line, grid.l()[0], q, s, split_seed(seed, i, 0))?
            }
        };
        samples.push(sample);
    }

    let mut ratios: Vec<f64> = samples.iter().filter_map(|s| s.ratio).collect();
    let failures = samples.iter().filter(|s| s.failure).count();
    let skipped = samples.len() - ratios.len() - failures;
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("ratios are finite"));
    let quantile = |p: f64| -> f64 {
        if ratios.is_empty() {
            return 0.0;
        }
        let idx = ((ratios.len() as f64 - 1.0) * p).round() as usize;
        ratios[idx]
    };
    let max_ratio = ratios.last().copied().unwrap_or(0.0);
    let mean_ratio = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    Ok(SuiteReport {
        kind,
        n_samples,
        max_ratio,
        mean_ratio,
        quantiles: [quantile(0.5), quantile(0.9), quantile(0.99)],
        failures,
        skipped,
        samples,
    })
}

/// Random band-limited mean-free 1D samples derived from the grid's first
/// axis.
fn random_line(grid: &GridSpec, seed: u64, shape: SpectrumShape) -> Vec<f64> {
    let f = random_scalar_field(grid, seed, shape, 1.0, MeanFree::along(&[Dir::X1]));
    // Take the physical line x2 = x3 = 0; mean-free along x1 transfers.
    let phys = f.to_physical();
    let n1 = grid.n()[0];
    (0..n1).map(|i| phys[[i, 0, 0]]).collect()
}
