//! Linear spectral operators: derivatives, Laplacians, curl, divergence,
//! fractional horizontal powers, and the Leray projection.
//!
//! All operators are per-mode multipliers. Derivative multipliers zero the
//! unmatched Nyquist mode on their own axis; even multipliers (Laplacians,
//! `|xi_h|^s`, the projection) use the full wavenumber. On a dealiased grid
//! the two conventions act identically because the Nyquist band is masked.

use ndarray::parallel::prelude::*;
use ndarray::{Axis, Zip};
use num_complex::Complex64;

use crate::error::NormError;
use crate::field::{SpectralScalarField, SpectralVectorField};
use crate::grid::{Dir, GridSpec};

/// Default tolerance for horizontal-mean content under negative powers.
pub const ZERO_MODE_TOL: f64 = 1e-13;

/// Wavenumber table with the Nyquist entry zeroed, the multiplier used by
/// first-derivative operators.
pub fn deriv_wavenumbers(grid: &GridSpec, axis: Dir) -> Vec<f64> {
    (0..grid.len(axis))
        .map(|i| {
            if grid.is_nyquist(axis, i) {
                0.0
            } else {
                grid.wavenumber(axis, i)
            }
        })
        .collect()
}

/// Spectral partial derivative along `axis`.
pub fn derivative(f: &SpectralScalarField, axis: Dir) -> SpectralScalarField {
    let k = deriv_wavenumbers(f.grid(), axis);
    let ax = axis.index();
    let mut out = f.clone();
    Zip::indexed(out.coeffs_mut()).par_for_each(|idx, v| {
        let i = [idx.0, idx.1, idx.2][ax];
        *v *= Complex64::new(0.0, k[i]);
    });
    out
}

/// Horizontal Laplacian, the multiplier `-(k1^2 + k2^2)`.
pub fn laplacian_h(f: &SpectralScalarField) -> SpectralScalarField {
    let k1 = f.grid().wavenumbers(Dir::X1);
    let k2 = f.grid().wavenumbers(Dir::X2);
    let mut out = f.clone();
    Zip::indexed(out.coeffs_mut()).par_for_each(|(i1, i2, _), v| {
        *v *= -(k1[i1] * k1[i1] + k2[i2] * k2[i2]);
    });
    out
}

/// Full Laplacian, the multiplier `-|k|^2`.
pub fn laplacian_full(f: &SpectralScalarField) -> SpectralScalarField {
    let k1 = f.grid().wavenumbers(Dir::X1);
    let k2 = f.grid().wavenumbers(Dir::X2);
    let k3 = f.grid().wavenumbers(Dir::X3);
    let mut out = f.clone();
    Zip::indexed(out.coeffs_mut()).par_for_each(|(i1, i2, i3), v| {
        *v *= -(k1[i1] * k1[i1] + k2[i2] * k2[i2] + k3[i3] * k3[i3]);
    });
    out
}

pub fn grad(f: &SpectralScalarField) -> SpectralVectorField {
    SpectralVectorField::from_components([
        derivative(f, Dir::X1),
        derivative(f, Dir::X2),
        derivative(f, Dir::X3),
    ])
    .expect("components share the input grid")
}

pub fn divergence(v: &SpectralVectorField) -> SpectralScalarField {
    let grid = v.grid();
    let k1 = deriv_wavenumbers(grid, Dir::X1);
    let k2 = deriv_wavenumbers(grid, Dir::X2);
    let k3 = deriv_wavenumbers(grid, Dir::X3);
    let mut out = SpectralScalarField::zeros(grid);
    let (c1, c2, c3) = (
        v.component(0).coeffs(),
        v.component(1).coeffs(),
        v.component(2).coeffs(),
    );
    Zip::indexed(out.coeffs_mut()).par_for_each(|(i1, i2, i3), w| {
        let idx = [i1, i2, i3];
        *w = Complex64::new(0.0, k1[i1]) * c1[idx]
            + Complex64::new(0.0, k2[i2]) * c2[idx]
            + Complex64::new(0.0, k3[i3]) * c3[idx];
    });
    out
}

pub fn curl(v: &SpectralVectorField) -> SpectralVectorField {
    let grid = v.grid();
    let k1 = deriv_wavenumbers(grid, Dir::X1);
    let k2 = deriv_wavenumbers(grid, Dir::X2);
    let k3 = deriv_wavenumbers(grid, Dir::X3);
    let mut out = SpectralVectorField::zeros(grid);
    let (c1, c2, c3) = (
        v.component(0).coeffs(),
        v.component(1).coeffs(),
        v.component(2).coeffs(),
    );
    for comp in 0..3 {
        out.component_mut(comp)
            .coeffs_mut()
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i1, mut slab)| {
                let a1 = c1.index_axis(Axis(0), i1);
                let a2 = c2.index_axis(Axis(0), i1);
                let a3 = c3.index_axis(Axis(0), i1);
                for i2 in 0..slab.dim().0 {
                    for i3 in 0..slab.dim().1 {
                        let ik1 = Complex64::new(0.0, k1[i1]);
                        let ik2 = Complex64::new(0.0, k2[i2]);
                        let ik3 = Complex64::new(0.0, k3[i3]);
                        slab[[i2, i3]] = match comp {
                            0 => ik2 * a3[[i2, i3]] - ik3 * a2[[i2, i3]],
                            1 => ik3 * a1[[i2, i3]] - ik1 * a3[[i2, i3]],
                            _ => ik1 * a2[[i2, i3]] - ik2 * a1[[i2, i3]],
                        };
                    }
                }
            });
    }
    out
}

/// Gradient of the divergence, the multiplier `-k (k . v_hat)`.
pub fn grad_div(v: &SpectralVectorField) -> SpectralVectorField {
    let grid = v.grid();
    let k1 = deriv_wavenumbers(grid, Dir::X1);
    let k2 = deriv_wavenumbers(grid, Dir::X2);
    let k3 = deriv_wavenumbers(grid, Dir::X3);
    let mut out = SpectralVectorField::zeros(grid);
    let (c1, c2, c3) = (
        v.component(0).coeffs(),
        v.component(1).coeffs(),
        v.component(2).coeffs(),
    );
    for comp in 0..3 {
        out.component_mut(comp)
            .coeffs_mut()
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i1, mut slab)| {
                let a1 = c1.index_axis(Axis(0), i1);
                let a2 = c2.index_axis(Axis(0), i1);
                let a3 = c3.index_axis(Axis(0), i1);
                for i2 in 0..slab.dim().0 {
                    for i3 in 0..slab.dim().1 {
                        let k = [k1[i1], k2[i2], k3[i3]];
                        let kdotv =
                            k[0] * a1[[i2, i3]] + k[1] * a2[[i2, i3]] + k[2] * a3[[i2, i3]];
                        slab[[i2, i3]] = -k[comp] * kdotv;
                    }
                }
            });
    }
    out
}

/// Fractional horizontal derivative `Lambda_h^s`, the multiplier `|xi_h|^s`.
///
/// For `s >= 0` the `xi_h = 0` column is left untouched (`|xi_h|^0 = 1`)
/// or sent to zero naturally (`s > 0`). For `s < 0` the column must be
/// empty up to `zero_mode_tol`; it is then zeroed rather than regularized.
pub fn lambda_h_pow_with_tol(
    f: &SpectralScalarField,
    s: f64,
    zero_mode_tol: f64,
) -> Result<SpectralScalarField, NormError> {
    let grid = f.grid();
    if s < 0.0 {
        let magnitude = f.horizontal_mean_magnitude();
        if magnitude > zero_mode_tol {
            return Err(NormError::IllPosed {
                magnitude,
                tol: zero_mode_tol,
            });
        }
    }
    let k1 = grid.wavenumbers(Dir::X1);
    let k2 = grid.wavenumbers(Dir::X2);
    let mut out = f.clone();
    Zip::indexed(out.coeffs_mut()).par_for_each(|(i1, i2, _), v| {
        let kh2 = k1[i1] * k1[i1] + k2[i2] * k2[i2];
        if kh2 == 0.0 {
            // s == 0 is the identity on the column; any other power sends
            // it to zero (negative powers after the tolerance gate above).
            if s != 0.0 {
                *v = Complex64::default();
            }
        } else {
            *v *= kh2.powf(0.5 * s);
        }
    });
    Ok(out)
}

pub fn lambda_h_pow(f: &SpectralScalarField, s: f64) -> Result<SpectralScalarField, NormError> {
    lambda_h_pow_with_tol(f, s, ZERO_MODE_TOL)
}

pub fn lambda_h_pow_vec(
    v: &SpectralVectorField,
    s: f64,
) -> Result<SpectralVectorField, NormError> {
    SpectralVectorField::from_components([
        lambda_h_pow(v.component(0), s)?,
        lambda_h_pow(v.component(1), s)?,
        lambda_h_pow(v.component(2), s)?,
    ])
    .map_err(|_| unreachable!("components share the input grid"))
}

/// Leray projection onto divergence-free fields: `I - k k^T / |k|^2`
/// per mode, identity at `k = 0`.
pub fn leray_project(v: &SpectralVectorField) -> SpectralVectorField {
    let mut out = v.clone();
    leray_project_inplace(&mut out);
    out
}

pub fn leray_project_inplace(v: &mut SpectralVectorField) {
    let grid = v.grid().clone();
    let k1 = grid.wavenumbers(Dir::X1);
    let k2 = grid.wavenumbers(Dir::X2);
    let k3 = grid.wavenumbers(Dir::X3);
    let [c1, c2, c3] = v.components_each_mut();
    Zip::indexed(c1.coeffs_mut())
        .and(c2.coeffs_mut())
        .and(c3.coeffs_mut())
        .par_for_each(|(i1, i2, i3), a1, a2, a3| {
            let k = [k1[i1], k2[i2], k3[i3]];
            let k2n = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2n > 0.0 {
                let kdotv = (k[0] * *a1 + k[1] * *a2 + k[2] * *a3) / k2n;
                *a1 -= k[0] * kdotv;
                *a2 -= k[1] * kdotv;
                *a3 -= k[2] * kdotv;
            }
        });
}

/// Largest modal magnitude of the divergence, the constraint residual.
pub fn max_divergence(v: &SpectralVectorField) -> f64 {
    divergence(v).max_coeff_norm()
}
