//! Spectral scalar and vector fields on a periodic box.
//!
//! Coefficients follow the unitary-per-volume convention: the forward
//! transform divides by the total mode count, so a unit-amplitude cosine
//! carries two coefficients of magnitude 1/2 and Parseval reads
//! `||f||_L2^2 = V * sum |f_hat|^2`. Every constructed field is dealiased
//! and Hermitian-symmetric (real in physical space).

use ndarray::{Array3, Zip};
use num_complex::Complex64;

use crate::error::FieldError;
use crate::fft::{fft3_inplace, scale_inplace, Direction};
use crate::grid::{Dir, GridSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralScalarField {
    grid: GridSpec,
    coeffs: Array3<Complex64>,
}

impl SpectralScalarField {
    pub fn zeros(grid: &GridSpec) -> SpectralScalarField {
        SpectralScalarField {
            coeffs: Array3::zeros(grid.shape()),
            grid: grid.clone(),
        }
    }

    /// Wrap raw coefficients, enforcing the mask and Hermitian symmetry.
    pub fn from_coeffs(grid: &GridSpec, coeffs: Array3<Complex64>) -> Result<Self, FieldError> {
        if coeffs.dim() != grid.shape() {
            let (a, b, c) = coeffs.dim();
            return Err(FieldError::ShapeMismatch {
                got: [a, b, c],
                want: grid.n(),
            });
        }
        let mut f = SpectralScalarField {
            grid: grid.clone(),
            coeffs,
        };
        f.symmetrize_inplace();
        f.dealias_inplace();
        Ok(f)
    }

    /// Wrap raw coefficients that are already masked and symmetric to
    /// rounding, skipping the enforcement passes. Hot-path constructor for
    /// tendencies assembled from masked product transforms.
    pub(crate) fn from_coeffs_unchecked(
        grid: &GridSpec,
        coeffs: Array3<Complex64>,
    ) -> SpectralScalarField {
        debug_assert_eq!(coeffs.dim(), grid.shape());
        SpectralScalarField {
            grid: grid.clone(),
            coeffs,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array3<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Array3<Complex64> {
        self.coeffs
    }

    /// Zero every mode outside the kept band.
    pub fn dealias_inplace(&mut self) {
        let keep1 = self.grid.axis_keep(Dir::X1);
        let keep2 = self.grid.axis_keep(Dir::X2);
        let keep3 = self.grid.axis_keep(Dir::X3);
        Zip::indexed(&mut self.coeffs).par_for_each(|(i1, i2, i3), v| {
            if !(keep1[i1] && keep2[i2] && keep3[i3]) {
                *v = Complex64::default();
            }
        });
    }

    /// Project onto the Hermitian-symmetric part, making the physical-space
    /// field exactly real.
    pub fn symmetrize_inplace(&mut self) {
        let (n1, n2, n3) = self.grid.shape();
        let c = &mut self.coeffs;
        for i1 in 0..n1 {
            let j1 = (n1 - i1) % n1;
            for i2 in 0..n2 {
                let j2 = (n2 - i2) % n2;
                for i3 in 0..n3 {
                    let j3 = (n3 - i3) % n3;
                    let this = (i1, i2, i3);
                    let that = (j1, j2, j3);
                    if this < that {
                        let avg = 0.5 * (c[[i1, i2, i3]] + c[[j1, j2, j3]].conj());
                        c[[i1, i2, i3]] = avg;
                        c[[j1, j2, j3]] = avg.conj();
                    } else if this == that {
                        c[[i1, i2, i3]] = Complex64::new(c[[i1, i2, i3]].re, 0.0);
                    }
                }
            }
        }
    }

    /// Worst asymmetry `|c(-xi) - conj(c(xi))|` over the lattice.
    pub fn hermitian_defect(&self) -> f64 {
        let (n1, n2, n3) = self.grid.shape();
        let c = &self.coeffs;
        let mut worst = 0.0f64;
        for i1 in 0..n1 {
            let j1 = (n1 - i1) % n1;
            for i2 in 0..n2 {
                let j2 = (n2 - i2) % n2;
                for i3 in 0..n3 {
                    let j3 = (n3 - i3) % n3;
                    worst = worst.max((c[[j1, j2, j3]] - c[[i1, i2, i3]].conj()).norm());
                }
            }
        }
        worst
    }

    /// Inverse transform to collocation samples (real part; the imaginary
    /// part of a symmetric field is identically zero).
    pub fn to_physical(&self) -> Array3<f64> {
        let mut work = self.coeffs.clone();
        fft3_inplace(&mut work, Direction::Inverse);
        work.map(|v| v.re)
    }

    /// Inverse transform keeping complex storage, for in-place product
    /// pipelines.
    pub fn to_physical_complex(&self) -> Array3<Complex64> {
        let mut work = self.coeffs.clone();
        fft3_inplace(&mut work, Direction::Inverse);
        work
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Parseval norm: `||f||_L2^2 = V * sum |f_hat|^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.volume() * self.coeffs.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Zero all modes whose index vanishes along `axis` (line means).
    pub fn zero_axis_mean(&mut self, axis: Dir) {
        let keep: Vec<bool> = (0..self.grid.len(axis))
            .map(|i| self.grid.freq_index(axis, i) != 0)
            .collect();
        let ax = axis.index();
        Zip::indexed(&mut self.coeffs).par_for_each(|idx, v| {
            let i = [idx.0, idx.1, idx.2][ax];
            if !keep[i] {
                *v = Complex64::default();
            }
        });
    }

    /// Zero all modes with `xi_h = 0` (horizontal means at every height).
    pub fn zero_horizontal_mean(&mut self) {
        let (_, _, n3) = self.grid.shape();
        for i3 in 0..n3 {
            self.coeffs[[0, 0, i3]] = Complex64::default();
        }
    }

    /// Largest coefficient magnitude on the `xi_h = 0` column.
    pub fn horizontal_mean_magnitude(&self) -> f64 {
        let (_, _, n3) = self.grid.shape();
        (0..n3).fold(0.0f64, |m, i3| m.max(self.coeffs[[0, 0, i3]].norm()))
    }
}

/// Forward transform of real collocation samples.
pub fn forward_transform(
    samples: &Array3<f64>,
    grid: &GridSpec,
) -> Result<SpectralScalarField, FieldError> {
    if samples.dim() != grid.shape() {
        let (a, b, c) = samples.dim();
        return Err(FieldError::ShapeMismatch {
            got: [a, b, c],
            want: grid.n(),
        });
    }
    let mut work = samples.map(|&v| Complex64::new(v, 0.0));
    fft3_inplace(&mut work, Direction::Forward);
    scale_inplace(&mut work, 1.0 / grid.n_total() as f64);
    SpectralScalarField::from_coeffs(grid, work)
}

/// Inverse transform; see [`SpectralScalarField::to_physical`].
pub fn inverse_transform(f: &SpectralScalarField) -> Array3<f64> {
    f.to_physical()
}

/// Build a field by evaluating `f(x1, x2, x3)` on the collocation grid.
pub fn field_from_fn(
    grid: &GridSpec,
    f: impl Fn(f64, f64, f64) -> f64,
) -> SpectralScalarField {
    let (n1, n2, n3) = grid.shape();
    let mut samples = Array3::zeros((n1, n2, n3));
    for i1 in 0..n1 {
        let x1 = grid.coord(Dir::X1, i1);
        for i2 in 0..n2 {
            let x2 = grid.coord(Dir::X2, i2);
            for i3 in 0..n3 {
                samples[[i1, i2, i3]] = f(x1, x2, grid.coord(Dir::X3, i3));
            }
        }
    }
    forward_transform(&samples, grid).expect("shape matches by construction")
}

/// Real-part L2 pairing `<f, g> = integral f g dx` via Parseval.
pub fn l2_inner(a: &SpectralScalarField, b: &SpectralScalarField) -> f64 {
    debug_assert_eq!(a.grid, b.grid);
    a.grid.volume()
        * a.coeffs
            .iter()
            .zip(b.coeffs.iter())
            .map(|(x, y)| (x * y.conj()).re)
            .sum::<f64>()
}

/// Three-component spectral field sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVectorField {
    components: [SpectralScalarField; 3],
}

impl SpectralVectorField {
    pub fn zeros(grid: &GridSpec) -> SpectralVectorField {
        SpectralVectorField {
            components: [
                SpectralScalarField::zeros(grid),
                SpectralScalarField::zeros(grid),
                SpectralScalarField::zeros(grid),
            ],
        }
    }

    pub fn from_components(
        components: [SpectralScalarField; 3],
    ) -> Result<SpectralVectorField, FieldError> {
        if components[0].grid != components[1].grid || components[0].grid != components[2].grid {
            return Err(FieldError::GridMismatch);
        }
        Ok(SpectralVectorField { components })
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].grid()
    }

    pub fn component(&self, i: usize) -> &SpectralScalarField {
        &self.components[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut SpectralScalarField {
        &mut self.components[i]
    }

    pub fn components(&self) -> &[SpectralScalarField; 3] {
        &self.components
    }

    pub fn components_each_mut(&mut self) -> [&mut SpectralScalarField; 3] {
        self.components.each_mut()
    }

    pub fn map(&self, f: impl Fn(&SpectralScalarField) -> SpectralScalarField) -> Self {
        SpectralVectorField {
            components: [
                f(&self.components[0]),
                f(&self.components[1]),
                f(&self.components[2]),
            ],
        }
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c.l2_norm_sq()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    pub fn dealias_inplace(&mut self) {
        for c in &mut self.components {
            c.dealias_inplace();
        }
    }

    pub fn zero_horizontal_mean(&mut self) {
        for c in &mut self.components {
            c.zero_horizontal_mean();
        }
    }

    pub fn horizontal_mean_magnitude(&self) -> f64 {
        self.components
            .iter()
            .fold(0.0f64, |m, c| m.max(c.horizontal_mean_magnitude()))
    }

    pub fn to_physical(&self) -> [Array3<f64>; 3] {
        [
            self.components[0].to_physical(),
            self.components[1].to_physical(),
            self.components[2].to_physical(),
        ]
    }
}

/// Vector pairing `<a, b> = integral a . b dx`.
pub fn l2_inner_vec(a: &SpectralVectorField, b: &SpectralVectorField) -> f64 {
    (0..3).map(|i| l2_inner(a.component(i), b.component(i))).sum()
}

/// Largest pointwise Euclidean magnitude of a physical vector field.
pub fn max_pointwise_magnitude(v: &[Array3<f64>; 3]) -> f64 {
    let mut m = 0.0f64;
    for ((a, b), c) in v[0].iter().zip(v[1].iter()).zip(v[2].iter()) {
        m = m.max((a * a + b * b + c * c).sqrt());
    }
    m
}
