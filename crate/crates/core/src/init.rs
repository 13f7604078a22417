//! Deterministic random field generation with shaped spectra.
//!
//! Per-mode energy density is proportional to `k^slope * exp(-(k/k_peak)^2)`
//! with independent Gaussian phases, where `k = |xi|`. Fields are rescaled
//! after masking, mean removal, and projection so the L2 norm equals the
//! requested amplitude exactly; the amplitude therefore scales the field
//! linearly and a zero amplitude yields the zero field.

use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::field::{SpectralScalarField, SpectralVectorField};
use crate::grid::{Dir, GridSpec};
use crate::ops::leray_project_inplace;

/// Stateless seed derivation (SplitMix64) for independent substreams.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Spectrum shape parameters shared by the generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumShape {
    pub slope: f64,
    pub k_peak: f64,
}

impl Default for SpectrumShape {
    fn default() -> Self {
        SpectrumShape {
            slope: 2.0,
            k_peak: 2.0,
        }
    }
}

fn shaped_noise(grid: &GridSpec, rng: &mut ChaCha8Rng, shape: SpectrumShape) -> Array3<Complex64> {
    let k1 = grid.wavenumbers(Dir::X1);
    let k2 = grid.wavenumbers(Dir::X2);
    let k3 = grid.wavenumbers(Dir::X3);
    let (n1, n2, n3) = grid.shape();
    let mut out = Array3::zeros((n1, n2, n3));
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for i3 in 0..n3 {
                // Fixed draw count per lattice site keeps the stream layout
                // independent of the mask.
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let ksq = k1[i1] * k1[i1] + k2[i2] * k2[i2] + k3[i3] * k3[i3];
                let sigma = if ksq > 0.0 {
                    let k = ksq.sqrt();
                    (0.5 * shape.slope * k.ln() - 0.5 * ksq / (shape.k_peak * shape.k_peak)).exp()
                } else {
                    0.0
                };
                out[[i1, i2, i3]] = Complex64::new(re, im) * sigma;
            }
        }
    }
    out
}

fn rescale_to(field: &mut SpectralVectorField, amplitude: f64) {
    let norm = field.l2_norm_sq().sqrt();
    let factor = if norm > 0.0 { amplitude / norm } else { 0.0 };
    for c in field.components_each_mut() {
        c.coeffs_mut().map_inplace(|v| *v *= factor);
    }
}

/// Random divergence-free vector field with exact L2 norm `amplitude`.
pub fn random_divfree_field(
    grid: &GridSpec,
    seed: u64,
    shape: SpectrumShape,
    amplitude: f64,
    horizontal_mean_free: bool,
) -> SpectralVectorField {
    assert!(amplitude >= 0.0, "amplitude must be nonnegative");
    let mut components = Vec::with_capacity(3);
    for comp in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(comp);
        let coeffs = shaped_noise(grid, &mut rng, shape);
        components.push(
            SpectralScalarField::from_coeffs(grid, coeffs).expect("shape matches by construction"),
        );
    }
    let mut field = SpectralVectorField::from_components(
        components.try_into().expect("exactly three components"),
    )
    .expect("components share one grid");
    if horizontal_mean_free {
        field.zero_horizontal_mean();
    }
    leray_project_inplace(&mut field);
    rescale_to(&mut field, amplitude);
    field
}

/// Axes along which a generated scalar field must be mean-free.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeanFree {
    pub x1: bool,
    pub x2: bool,
    pub x3: bool,
}

impl MeanFree {
    pub fn along(dirs: &[Dir]) -> MeanFree {
        let mut m = MeanFree::default();
        for d in dirs {
            match d {
                Dir::X1 => m.x1 = true,
                Dir::X2 => m.x2 = true,
                Dir::X3 => m.x3 = true,
            }
        }
        m
    }
}

/// Random scalar field with exact L2 norm `amplitude`, optionally mean-free
/// along chosen axes.
pub fn random_scalar_field(
    grid: &GridSpec,
    seed: u64,
    shape: SpectrumShape,
    amplitude: f64,
    mean_free: MeanFree,
) -> SpectralScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let coeffs = shaped_noise(grid, &mut rng, shape);
    let mut f =
        SpectralScalarField::from_coeffs(grid, coeffs).expect("shape matches by construction");
    if mean_free.x1 {
        f.zero_axis_mean(Dir::X1);
    }
    if mean_free.x2 {
        f.zero_axis_mean(Dir::X2);
    }
    if mean_free.x3 {
        f.zero_axis_mean(Dir::X3);
    }
    let norm = f.l2_norm_sq().sqrt();
    let factor = if norm > 0.0 { amplitude / norm } else { 0.0 };
    f.coeffs_mut().map_inplace(|v| *v *= factor);
    f
}
