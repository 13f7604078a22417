//! Time integration of the magneto-micropolar system with horizontal
//! dissipation.
//!
//! The pressure is eliminated by Leray projection. The diagonal linear part
//! (dissipation, `kappa grad div` on `w`, the `4 chi w` damping) is applied
//! exactly through per-mode exponentials; the nonlinear advection terms and
//! the `2 chi curl` exchange are integrated explicitly with classical RK4 in
//! the propagated variables.
//!
//! Advection is evaluated pseudo-spectrally in conservative form:
//!
//! - momentum:      `P div(B B^T - u u^T)` (symmetric tensor, 6 products)
//! - induction:     `div(B_j u_i - u_j B_i)` (antisymmetric, 3 products;
//!   its divergence vanishes structurally)
//! - micro-rotation: `-div(u_j w_i)` (9 products)
//!
//! With the 2/3 mask the conservative and convective forms coincide and the
//! discrete nonlinear energy transfer cancels exactly.

use ndarray::parallel::prelude::*;
use ndarray::{Array3, Axis, Zip};
use num_complex::Complex64;

use crate::error::{FieldError, StepError};
use crate::fft::{fft3_inplace, scale_inplace, Direction};
use crate::field::{max_pointwise_magnitude, SpectralScalarField, SpectralVectorField};
use crate::grid::{Dir, GridSpec};
use crate::ops::{curl, deriv_wavenumbers, leray_project_inplace};

/// CFL floor keeping the zero-velocity limit finite.
pub const CFL_VELOCITY_FLOOR: f64 = 1e-8;

/// The five positive coefficients of the system: kinematic viscosity `mu`,
/// magnetic diffusivity `nu`, spin viscosities `gamma` and `kappa`, vortex
/// viscosity `chi`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysParams {
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub chi: f64,
}

impl PhysParams {
    /// All five coefficients strictly positive.
    pub fn new(mu: f64, nu: f64, gamma: f64, kappa: f64, chi: f64) -> Result<PhysParams, String> {
        let p = PhysParams {
            mu,
            nu,
            gamma,
            kappa,
            chi,
        };
        p.validate(false)?;
        Ok(p)
    }

    /// Allows the degenerate `chi = 0` and/or `kappa = 0` cases, which are
    /// useful for isolating subsystems in experiments.
    pub fn new_with_degenerate_override(
        mu: f64,
        nu: f64,
        gamma: f64,
        kappa: f64,
        chi: f64,
    ) -> Result<PhysParams, String> {
        let p = PhysParams {
            mu,
            nu,
            gamma,
            kappa,
            chi,
        };
        p.validate(true)?;
        Ok(p)
    }

    pub fn validate(&self, allow_degenerate: bool) -> Result<(), String> {
        let strict = [("mu", self.mu), ("nu", self.nu), ("gamma", self.gamma)];
        let softenable = [("kappa", self.kappa), ("chi", self.chi)];
        for (name, v) in strict {
            if v <= 0.0 || !v.is_finite() {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        for (name, v) in softenable {
            let ok = if allow_degenerate { v >= 0.0 } else { v > 0.0 };
            if !ok || !v.is_finite() {
                return Err(format!(
                    "{name} must be {} positive, got {v} (degenerate values need the override)",
                    if allow_degenerate { "zero or" } else { "strictly" }
                ));
            }
        }
        Ok(())
    }
}

/// Divergence-constrained state `(u, B, w)` at time `t`. `u` and `B` are
/// projected and all fields dealiased on ingestion; `w` carries no
/// divergence constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    u: SpectralVectorField,
    b: SpectralVectorField,
    w: SpectralVectorField,
    t: f64,
}

impl State {
    pub fn new(
        u: SpectralVectorField,
        b: SpectralVectorField,
        w: SpectralVectorField,
        t: f64,
    ) -> Result<State, FieldError> {
        if u.grid() != b.grid() || u.grid() != w.grid() {
            return Err(FieldError::GridMismatch);
        }
        let mut s = State { u, b, w, t };
        leray_project_inplace(&mut s.u);
        leray_project_inplace(&mut s.b);
        s.u.dealias_inplace();
        s.b.dealias_inplace();
        s.w.dealias_inplace();
        Ok(s)
    }

    pub fn zero(grid: &GridSpec) -> State {
        State {
            u: SpectralVectorField::zeros(grid),
            b: SpectralVectorField::zeros(grid),
            w: SpectralVectorField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.u.grid()
    }

    pub fn u(&self) -> &SpectralVectorField {
        &self.u
    }

    pub fn b(&self) -> &SpectralVectorField {
        &self.b
    }

    pub fn w(&self) -> &SpectralVectorField {
        &self.w
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn fields(&self) -> [&SpectralVectorField; 3] {
        [&self.u, &self.b, &self.w]
    }

    /// Max modal divergence magnitudes of `(u, B)`.
    pub fn div_residuals(&self) -> (f64, f64) {
        (
            crate::ops::max_divergence(&self.u),
            crate::ops::max_divergence(&self.b),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.b.is_finite() && self.w.is_finite()
    }

    /// Combined `||(u, B, w)||_{L^2}^2`.
    pub fn energy(&self) -> f64 {
        self.u.l2_norm_sq() + self.b.l2_norm_sq() + self.w.l2_norm_sq()
    }

    pub fn zero_horizontal_mean(&mut self) {
        self.u.zero_horizontal_mean();
        self.b.zero_horizontal_mean();
        self.w.zero_horizontal_mean();
    }

    #[cfg(test)]
    pub(crate) fn with_time(mut self, t: f64) -> State {
        self.t = t;
        self
    }
}

/// The nine spectral component arrays of `(u, B, w)` as one algebraic value.
#[derive(Clone)]
pub(crate) struct Fields9 {
    pub arrays: [Array3<Complex64>; 9],
}

impl Fields9 {
    fn from_state(s: &State) -> Fields9 {
        let mut arrays: Vec<Array3<Complex64>> = Vec::with_capacity(9);
        for f in [&s.u, &s.b, &s.w] {
            for c in 0..3 {
                arrays.push(f.component(c).coeffs().clone());
            }
        }
        let Ok(arrays) = arrays.try_into() else {
            unreachable!("nine components")
        };
        Fields9 { arrays }
    }

    fn zeros(grid: &GridSpec) -> Fields9 {
        Fields9 {
            arrays: std::array::from_fn(|_| Array3::zeros(grid.shape())),
        }
    }

    fn assign(&mut self, other: &Fields9) {
        for (a, b) in self.arrays.iter_mut().zip(other.arrays.iter()) {
            a.assign(b);
        }
    }

    /// `self += factor * other`, the RK4 combination primitive.
    fn axpy(&mut self, factor: f64, other: &Fields9) {
        for (a, b) in self.arrays.iter_mut().zip(other.arrays.iter()) {
            Zip::from(a).and(b).par_for_each(|x, y| *x += factor * *y);
        }
    }

    fn is_finite(&self) -> bool {
        self.arrays
            .iter()
            .all(|a| a.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }
}

/// Per-mode exact propagator of the diagonal linear part over one `dt`.
///
/// The `w` block is realized by the split into components parallel and
/// perpendicular to `xi`; at `xi = 0` it degenerates to `exp(-4 chi dt) I`
/// while the `u` and `B` blocks are the identity.
pub struct Propagator {
    grid: GridSpec,
    exp_u: Array3<f64>,
    exp_b: Array3<f64>,
    exp_w_perp: Array3<f64>,
    exp_w_par: Array3<f64>,
}

/// Tabulate the propagator for step size `dt`.
pub fn linear_propagator(params: &PhysParams, grid: &GridSpec, dt: f64) -> Propagator {
    assert!(dt > 0.0, "dt must be positive");
    let k1 = grid.wavenumbers(Dir::X1);
    let k2 = grid.wavenumbers(Dir::X2);
    let k3 = grid.wavenumbers(Dir::X3);
    let shape = grid.shape();
    let mut exp_u = Array3::zeros(shape);
    let mut exp_b = Array3::zeros(shape);
    let mut exp_w_perp = Array3::zeros(shape);
    let mut exp_w_par = Array3::zeros(shape);
    let p = *params;
    Zip::indexed(&mut exp_u)
        .and(&mut exp_b)
        .and(&mut exp_w_perp)
        .and(&mut exp_w_par)
        .par_for_each(|(i1, i2, i3), eu, eb, ewp, ewl| {
            let kh2 = k1[i1] * k1[i1] + k2[i2] * k2[i2];
            let kk2 = kh2 + k3[i3] * k3[i3];
            *eu = (-(p.mu * kh2 + p.chi * kk2) * dt).exp();
            *eb = (-p.nu * kh2 * dt).exp();
            *ewp = (-(p.gamma * kh2 + 4.0 * p.chi) * dt).exp();
            *ewl = (-(p.gamma * kh2 + p.kappa * kk2 + 4.0 * p.chi) * dt).exp();
        });
    Propagator {
        grid: grid.clone(),
        exp_u,
        exp_b,
        exp_w_perp,
        exp_w_par,
    }
}

impl Propagator {
    /// Decay factors `(u, B, w_parallel, w_perpendicular)` at one mode, for
    /// closed-form checks.
    pub fn factors_at(&self, idx: [usize; 3]) -> (f64, f64, f64, f64) {
        (
            self.exp_u[idx],
            self.exp_b[idx],
            self.exp_w_par[idx],
            self.exp_w_perp[idx],
        )
    }

    fn apply(&self, f: &mut Fields9) {
        let (u, rest) = f.arrays.split_at_mut(3);
        let (b, w) = rest.split_at_mut(3);
        for c in u {
            Zip::from(c).and(&self.exp_u).par_for_each(|v, e| *v *= *e);
        }
        for c in b {
            Zip::from(c).and(&self.exp_b).par_for_each(|v, e| *v *= *e);
        }
        // w block: e_perp * w + (e_par - e_perp) * k (k . w)/|k|^2.
        let k1 = self.grid.wavenumbers(Dir::X1);
        let k2 = self.grid.wavenumbers(Dir::X2);
        let k3 = self.grid.wavenumbers(Dir::X3);
        let (w1, wrest) = w.split_at_mut(1);
        let (w2, w3) = wrest.split_at_mut(1);
        Zip::indexed(&mut w1[0])
            .and(&mut w2[0])
            .and(&mut w3[0])
            .and(&self.exp_w_perp)
            .and(&self.exp_w_par)
            .par_for_each(|(i1, i2, i3), a1, a2, a3, ep, el| {
                let k = [k1[i1], k2[i2], k3[i3]];
                let kk2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                if kk2 > 0.0 {
                    let kdotw = (k[0] * *a1 + k[1] * *a2 + k[2] * *a3) / kk2;
                    let dpar = *el - *ep;
                    *a1 = *ep * *a1 + dpar * k[0] * kdotw;
                    *a2 = *ep * *a2 + dpar * k[1] * kdotw;
                    *a3 = *ep * *a3 + dpar * k[2] * kdotw;
                } else {
                    *a1 *= *ep;
                    *a2 *= *ep;
                    *a3 *= *ep;
                }
            });
    }
}

/// Spectral forcing evaluated at stage times, used by the manufactured
/// solution harness.
pub trait Forcing {
    fn eval(&self, t: f64) -> VectorTriple;
}

/// Three vector fields, one per unknown: the shape of tendencies and
/// forcings.
pub type VectorTriple = (
    SpectralVectorField,
    SpectralVectorField,
    SpectralVectorField,
);

/// Nonlinear tendencies `(Nu, NB, Nw)` of the projected system.
pub fn nonlinear_tendency(s: &State) -> VectorTriple {
    let f9 = Fields9::from_state(s);
    let (out, _) = nonlinear_tendency_raw(&f9, s.grid());
    let [nu, nb, nw] = split_vec_fields(out, s.grid());
    (nu, nb, nw)
}

/// Coupling tendencies `Cu = 2 chi curl w`, `Cw = 2 chi curl u`.
pub fn coupling_tendency(
    s: &State,
    params: &PhysParams,
) -> (SpectralVectorField, SpectralVectorField) {
    let two_chi = 2.0 * params.chi;
    let mut cu = curl(s.w());
    let mut cw = curl(s.u());
    for c in cu.components_each_mut() {
        c.coeffs_mut().map_inplace(|v| *v *= two_chi);
    }
    for c in cw.components_each_mut() {
        c.coeffs_mut().map_inplace(|v| *v *= two_chi);
    }
    (cu, cw)
}

fn split_vec_fields(f: Fields9, grid: &GridSpec) -> [SpectralVectorField; 3] {
    let mut arrays = f.arrays.into_iter();
    std::array::from_fn(|_| {
        let comps: [SpectralScalarField; 3] = std::array::from_fn(|_| {
            SpectralScalarField::from_coeffs_unchecked(grid, arrays.next().expect("nine arrays"))
        });
        SpectralVectorField::from_components(comps).expect("shared grid")
    })
}

/// Physical-space maxima observed while forming the products, reused by the
/// CFL policy.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct AdvectionScales {
    pub max_u: f64,
    pub max_b: f64,
}

/// Conservative-form advection tendencies on raw arrays.
///
/// Returns the nine tendency arrays (momentum projected) plus pointwise
/// velocity maxima. All product transforms are masked before assembly.
fn nonlinear_tendency_raw(f: &Fields9, grid: &GridSpec) -> (Fields9, AdvectionScales) {
    let n_total = grid.n_total() as f64;
    // Physical samples of the nine components.
    let phys: Vec<Array3<f64>> = f
        .arrays
        .iter()
        .map(|a| {
            let mut w = a.clone();
            fft3_inplace(&mut w, Direction::Inverse);
            w.map(|v| v.re)
        })
        .collect();
    let (u, bw) = phys.split_at(3);
    let (b, w) = bw.split_at(3);

    let scales = AdvectionScales {
        max_u: max_pointwise_magnitude(&[u[0].clone(), u[1].clone(), u[2].clone()]),
        max_b: max_pointwise_magnitude(&[b[0].clone(), b[1].clone(), b[2].clone()]),
    };

    let keep1 = grid.axis_keep(Dir::X1);
    let keep2 = grid.axis_keep(Dir::X2);
    let keep3 = grid.axis_keep(Dir::X3);
    let transform_product = |prod: Array3<f64>| -> Array3<Complex64> {
        let mut c = prod.map(|&v| Complex64::new(v, 0.0));
        fft3_inplace(&mut c, Direction::Forward);
        scale_inplace(&mut c, 1.0 / n_total);
        Zip::indexed(&mut c).par_for_each(|(i1, i2, i3), v| {
            if !(keep1[i1] && keep2[i2] && keep3[i3]) {
                *v = Complex64::default();
            }
        });
        c
    };
    let product = |x: &Array3<f64>, y: &Array3<f64>| -> Array3<f64> {
        let mut out = x.clone();
        Zip::from(&mut out).and(y).par_for_each(|o, v| *o *= *v);
        out
    };
    let product_minus = |x: &Array3<f64>,
                         y: &Array3<f64>,
                         p: &Array3<f64>,
                         q: &Array3<f64>|
     -> Array3<f64> {
        // x*y - p*q
        let mut out = x.clone();
        Zip::from(&mut out)
            .and(y)
            .and(p)
            .and(q)
            .par_for_each(|o, vy, vp, vq| *o = *o * *vy - *vp * *vq);
        out
    };

    // Momentum tensor T_ij = B_i B_j - u_i u_j (symmetric, 6 entries).
    let mut t_hat: Vec<Array3<Complex64>> = Vec::with_capacity(6);
    for (i, j) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
        t_hat.push(transform_product(product_minus(&b[i], &b[j], &u[i], &u[j])));
    }
    let t_index = |i: usize, j: usize| -> usize {
        match (i.min(j), i.max(j)) {
            (0, 0) => 0,
            (0, 1) => 1,
            (0, 2) => 2,
            (1, 1) => 3,
            (1, 2) => 4,
            _ => 5,
        }
    };

    // Induction tensor A_ij = B_j u_i - u_j B_i (antisymmetric, 3 entries).
    let a12 = transform_product(product_minus(&b[1], &u[0], &u[1], &b[0]));
    let a13 = transform_product(product_minus(&b[2], &u[0], &u[2], &b[0]));
    let a23 = transform_product(product_minus(&b[2], &u[1], &u[2], &b[1]));

    // Micro-rotation tensor W_ij = w_i u_j (9 entries).
    let mut w_hat: Vec<Array3<Complex64>> = Vec::with_capacity(9);
    for wi in w.iter() {
        for uj in u.iter() {
            w_hat.push(transform_product(product(wi, uj)));
        }
    }

    let kd1 = deriv_wavenumbers(grid, Dir::X1);
    let kd2 = deriv_wavenumbers(grid, Dir::X2);
    let kd3 = deriv_wavenumbers(grid, Dir::X3);

    let mut out = Fields9::zeros(grid);
    // Momentum: Nu_i = i k_j T_ij, then projected.
    for i in 0..3 {
        let (t0, t1, t2) = (
            &t_hat[t_index(i, 0)],
            &t_hat[t_index(i, 1)],
            &t_hat[t_index(i, 2)],
        );
        Zip::indexed(&mut out.arrays[i]).par_for_each(|(i1, i2, i3), v| {
            let idx = [i1, i2, i3];
            *v = Complex64::new(0.0, kd1[i1]) * t0[idx]
                + Complex64::new(0.0, kd2[i2]) * t1[idx]
                + Complex64::new(0.0, kd3[i3]) * t2[idx];
        });
    }
    project_triplet(&mut out.arrays[0..3], grid);

    // Induction: NB_i = i k_j A_ij with A_ji = -A_ij.
    {
        let (nb1, rest) = out.arrays[3..6].split_at_mut(1);
        let (nb2, nb3) = rest.split_at_mut(1);
        Zip::indexed(&mut nb1[0])
            .and(&mut nb2[0])
            .and(&mut nb3[0])
            .par_for_each(|(i1, i2, i3), v1, v2, v3| {
                let idx = [i1, i2, i3];
                let ik1 = Complex64::new(0.0, kd1[i1]);
                let ik2 = Complex64::new(0.0, kd2[i2]);
                let ik3 = Complex64::new(0.0, kd3[i3]);
                *v1 = ik2 * a12[idx] + ik3 * a13[idx];
                *v2 = -ik1 * a12[idx] + ik3 * a23[idx];
                *v3 = -ik1 * a13[idx] - ik2 * a23[idx];
            });
    }

    // Micro-rotation: Nw_i = -i k_j W_ij.
    for i in 0..3 {
        let (w0, w1, w2) = (&w_hat[3 * i], &w_hat[3 * i + 1], &w_hat[3 * i + 2]);
        Zip::indexed(&mut out.arrays[6 + i]).par_for_each(|(i1, i2, i3), v| {
            let idx = [i1, i2, i3];
            *v = -(Complex64::new(0.0, kd1[i1]) * w0[idx]
                + Complex64::new(0.0, kd2[i2]) * w1[idx]
                + Complex64::new(0.0, kd3[i3]) * w2[idx]);
        });
    }

    (out, scales)
}

/// Leray projection on a raw component triplet.
fn project_triplet(c: &mut [Array3<Complex64>], grid: &GridSpec) {
    let k1 = grid.wavenumbers(Dir::X1);
    let k2 = grid.wavenumbers(Dir::X2);
    let k3 = grid.wavenumbers(Dir::X3);
    let (c1, rest) = c.split_at_mut(1);
    let (c2, c3) = rest.split_at_mut(1);
    Zip::indexed(&mut c1[0])
        .and(&mut c2[0])
        .and(&mut c3[0])
        .par_for_each(|(i1, i2, i3), a1, a2, a3| {
            let k = [k1[i1], k2[i2], k3[i3]];
            let kk2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if kk2 > 0.0 {
                let kdotv = (k[0] * *a1 + k[1] * *a2 + k[2] * *a3) / kk2;
                *a1 -= k[0] * kdotv;
                *a2 -= k[1] * kdotv;
                *a3 -= k[2] * kdotv;
            }
        });
}

/// Coupling tendency on raw arrays: adds `2 chi curl(w)` into the `u` slots
/// and `2 chi curl(u)` into the `w` slots of `out`.
fn add_coupling_raw(out: &mut Fields9, f: &Fields9, grid: &GridSpec, chi: f64) {
    if chi == 0.0 {
        return;
    }
    let two_chi = 2.0 * chi;
    let kd1 = deriv_wavenumbers(grid, Dir::X1);
    let kd2 = deriv_wavenumbers(grid, Dir::X2);
    let kd3 = deriv_wavenumbers(grid, Dir::X3);
    // (source component offset, destination offset): w -> u and u -> w.
    for (src, dst) in [(6usize, 0usize), (0usize, 6usize)] {
        let s1 = &f.arrays[src];
        let s2 = &f.arrays[src + 1];
        let s3 = &f.arrays[src + 2];
        for comp in 0..3 {
            out.arrays[dst + comp]
                .axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .for_each(|(i1, mut slab)| {
                    let a1 = s1.index_axis(Axis(0), i1);
                    let a2 = s2.index_axis(Axis(0), i1);
                    let a3 = s3.index_axis(Axis(0), i1);
                    let ik1 = Complex64::new(0.0, kd1[i1]);
                    for i2 in 0..slab.dim().0 {
                        let ik2 = Complex64::new(0.0, kd2[i2]);
                        for i3 in 0..slab.dim().1 {
                            let ik3 = Complex64::new(0.0, kd3[i3]);
                            let add = match comp {
                                0 => ik2 * a3[[i2, i3]] - ik3 * a2[[i2, i3]],
                                1 => ik3 * a1[[i2, i3]] - ik1 * a3[[i2, i3]],
                                _ => ik1 * a2[[i2, i3]] - ik2 * a1[[i2, i3]],
                            };
                            slab[[i2, i3]] += two_chi * add;
                        }
                    }
                });
        }
    }
}

/// Owns propagator tables and scratch policy for repeated stepping.
pub struct Stepper {
    grid: GridSpec,
    params: PhysParams,
    /// Re-zero the `xi_h = 0` column after every step, keeping negative
    /// horizontal norms well defined along the trajectory.
    pub horizontal_mean_free: bool,
    cached_dt: f64,
    half: Option<Propagator>,
    full: Option<Propagator>,
    last_scales: AdvectionScales,
}

impl Stepper {
    pub fn new(grid: &GridSpec, params: &PhysParams) -> Stepper {
        Stepper {
            grid: grid.clone(),
            params: *params,
            horizontal_mean_free: false,
            cached_dt: f64::NAN,
            half: None,
            full: None,
            last_scales: AdvectionScales::default(),
        }
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn ensure_propagators(&mut self, dt: f64) {
        if self.cached_dt != dt {
            self.half = Some(linear_propagator(&self.params, &self.grid, 0.5 * dt));
            self.full = Some(linear_propagator(&self.params, &self.grid, dt));
            self.cached_dt = dt;
        }
    }

    /// Pointwise `max(|u|, |B|)` seen during the most recent step.
    pub fn last_velocity_scale(&self) -> f64 {
        self.last_scales.max_u.max(self.last_scales.max_b)
    }

    /// One integrating-factor RK4 step of size `dt`.
    pub fn step(&mut self, s: &State, dt: f64) -> Result<State, StepError> {
        self.step_inner(s, dt, None)
    }

    /// One step with an explicit forcing added to the tendencies.
    pub fn step_forced(
        &mut self,
        s: &State,
        dt: f64,
        forcing: &dyn Forcing,
    ) -> Result<State, StepError> {
        self.step_inner(s, dt, Some(forcing))
    }

    fn explicit_tendency(&mut self, f: &Fields9, t: f64, forcing: Option<&dyn Forcing>) -> Fields9 {
        let (mut out, scales) = nonlinear_tendency_raw(f, &self.grid);
        self.last_scales = scales;
        add_coupling_raw(&mut out, f, &self.grid, self.params.chi);
        if let Some(forcing) = forcing {
            let (fu, fb, fw) = forcing.eval(t);
            for (slot, field) in [(0usize, &fu), (3, &fb), (6, &fw)] {
                for c in 0..3 {
                    Zip::from(&mut out.arrays[slot + c])
                        .and(field.component(c).coeffs())
                        .par_for_each(|x, y| *x += *y);
                }
            }
            // Forcing must not reintroduce divergence in the momentum slots.
            project_triplet(&mut out.arrays[0..3], &self.grid);
        }
        out
    }

    fn step_inner(
        &mut self,
        s: &State,
        dt: f64,
        forcing: Option<&dyn Forcing>,
    ) -> Result<State, StepError> {
        assert!(dt > 0.0, "dt must be positive");
        self.ensure_propagators(dt);
        let t = s.t;
        let x0 = Fields9::from_state(s);

        let n1 = self.explicit_tendency(&x0, t, forcing);

        // S2 = E_half (X0 + dt/2 n1)
        let mut stage = x0.clone();
        stage.axpy(0.5 * dt, &n1);
        self.half.as_ref().unwrap().apply(&mut stage);
        let n2 = self.explicit_tendency(&stage, t + 0.5 * dt, forcing);

        // S3 = E_half X0 + dt/2 n2
        let mut ehalf_x0 = x0.clone();
        self.half.as_ref().unwrap().apply(&mut ehalf_x0);
        stage.assign(&ehalf_x0);
        stage.axpy(0.5 * dt, &n2);
        let mut n3 = self.explicit_tendency(&stage, t + 0.5 * dt, forcing);

        // S4 = E_full X0 + dt E_half n3
        self.half.as_ref().unwrap().apply(&mut n3); // n3 <- E_half n3
        self.half.as_ref().unwrap().apply(&mut ehalf_x0); // ehalf_x0 <- E_full X0
        stage.assign(&ehalf_x0);
        stage.axpy(dt, &n3);
        let n4 = self.explicit_tendency(&stage, t + dt, forcing);

        // X1 = E_full X0 + dt/6 (E_full n1 + 2 E_half n2 + 2 E_half n3 + n4)
        let mut result = ehalf_x0;
        let mut n1 = n1;
        self.full.as_ref().unwrap().apply(&mut n1);
        let mut n2 = n2;
        self.half.as_ref().unwrap().apply(&mut n2);
        result.axpy(dt / 6.0, &n1);
        result.axpy(dt / 3.0, &n2);
        result.axpy(dt / 3.0, &n3);
        result.axpy(dt / 6.0, &n4);

        if !result.is_finite() {
            return Err(StepError::BlowUp { t: t + dt });
        }

        project_triplet(&mut result.arrays[0..3], &self.grid);
        project_triplet(&mut result.arrays[3..6], &self.grid);
        let [mut u, mut b, mut w] = split_vec_fields(result, &self.grid);
        for f in [&mut u, &mut b, &mut w] {
            f.dealias_inplace();
            for c in f.components_each_mut() {
                c.symmetrize_inplace();
            }
            if self.horizontal_mean_free {
                f.zero_horizontal_mean();
            }
        }
        Ok(State {
            u,
            b,
            w,
            t: t + dt,
        })
    }
}

/// One step as a pure function; repeated stepping should hold a [`Stepper`]
/// to reuse propagator tables.
pub fn step(s: &State, params: &PhysParams, dt: f64) -> Result<State, StepError> {
    Stepper::new(s.grid(), params).step(s, dt)
}

/// Advective CFL bound: `safety * min_j(spacing_j) / (vmax + floor)` with
/// `vmax` the pointwise maximum of `max(|u|, |B|)`.
pub fn cfl_dt(s: &State, safety: f64) -> f64 {
    assert!(safety > 0.0 && safety <= 1.0, "safety must lie in (0, 1]");
    let vmax = max_pointwise_magnitude(&s.u.to_physical())
        .max(max_pointwise_magnitude(&s.b.to_physical()));
    let min_spacing = Dir::ALL
        .iter()
        .map(|&d| s.grid().spacing(d))
        .fold(f64::INFINITY, f64::min);
    safety * min_spacing / (vmax + CFL_VELOCITY_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{field_from_fn, l2_inner_vec};
    use crate::init::{random_divfree_field, SpectrumShape};
    use std::f64::consts::PI;

    fn grid16() -> GridSpec {
        GridSpec::cubic(16, 2.0 * PI).unwrap()
    }

    fn params() -> PhysParams {
        PhysParams::new(1.0, 1.2, 0.9, 1.1, 0.5).unwrap()
    }

    fn vec_field(
        g: &GridSpec,
        f1: impl Fn(f64, f64, f64) -> f64,
        f2: impl Fn(f64, f64, f64) -> f64,
        f3: impl Fn(f64, f64, f64) -> f64,
    ) -> SpectralVectorField {
        SpectralVectorField::from_components([
            field_from_fn(g, f1),
            field_from_fn(g, f2),
            field_from_fn(g, f3),
        ])
        .unwrap()
    }

    #[test]
    fn params_reject_nonpositive_without_override() {
        assert!(PhysParams::new(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(PhysParams::new(1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(PhysParams::new(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(PhysParams::new_with_degenerate_override(1.0, 1.0, 1.0, 0.0, 0.0).is_ok());
        assert!(PhysParams::new_with_degenerate_override(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn state_ingestion_projects_and_dealiases() {
        let g = grid16();
        let dirty = vec_field(
            &g,
            |x1, _, _| x1.sin(),
            |_, x2, _| x2.sin(),
            |_, _, x3| x3.sin(),
        ); // has divergence
        let s = State::new(
            dirty.clone(),
            dirty.clone(),
            dirty,
            0.0,
        )
        .unwrap();
        let (du, db) = s.div_residuals();
        assert!(du < 1e-13 && db < 1e-13);
    }

    #[test]
    fn zero_state_has_zero_tendencies_and_steps_to_zero() {
        let g = grid16();
        let s = State::zero(&g);
        let (nu, nb, nw) = nonlinear_tendency(&s);
        assert_eq!(nu.l2_norm_sq() + nb.l2_norm_sq() + nw.l2_norm_sq(), 0.0);
        let next = step(&s, &params(), 0.01).unwrap();
        assert_eq!(next.energy(), 0.0);
        assert!((next.t() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn axial_magnetic_mode_has_zero_tendencies() {
        let g = grid16();
        let b = vec_field(&g, |_, _, _| 0.0, |_, _, _| 0.0, |x1, _, _| x1.sin());
        let s = State::new(
            SpectralVectorField::zeros(&g),
            b,
            SpectralVectorField::zeros(&g),
            0.0,
        )
        .unwrap();
        let (nu, nb, nw) = nonlinear_tendency(&s);
        assert!(nu.l2_norm_sq().sqrt() < 1e-14);
        assert!(nb.l2_norm_sq().sqrt() < 1e-14);
        assert!(nw.l2_norm_sq().sqrt() < 1e-14);
    }

    #[test]
    fn advection_conserves_energy_discretely() {
        let g = grid16();
        let shape = SpectrumShape {
            slope: 2.0,
            k_peak: 2.5,
        };
        let u = random_divfree_field(&g, 1, shape, 0.8, false);
        let b = random_divfree_field(&g, 2, shape, 0.6, false);
        let w = random_divfree_field(&g, 3, shape, 0.7, false);
        let s = State::new(u, b, w, 0.0).unwrap();
        let (nu, nb, nw) = nonlinear_tendency(&s);
        let transfer =
            l2_inner_vec(&nu, s.u()) + l2_inner_vec(&nb, s.b()) + l2_inner_vec(&nw, s.w());
        let scale = nu.l2_norm_sq().sqrt() * s.u().l2_norm_sq().sqrt()
            + nb.l2_norm_sq().sqrt() * s.b().l2_norm_sq().sqrt()
            + nw.l2_norm_sq().sqrt() * s.w().l2_norm_sq().sqrt();
        assert!(
            transfer.abs() <= 1e-11 * scale,
            "nonlinear transfer {transfer} vs scale {scale}"
        );
    }

    #[test]
    fn momentum_and_induction_tendencies_are_divergence_free() {
        let g = grid16();
        let shape = SpectrumShape::default();
        let s = State::new(
            random_divfree_field(&g, 10, shape, 1.0, false),
            random_divfree_field(&g, 11, shape, 0.5, false),
            random_divfree_field(&g, 12, shape, 0.5, false),
            0.0,
        )
        .unwrap();
        let (nu, nb, _) = nonlinear_tendency(&s);
        assert!(crate::ops::max_divergence(&nu) < 1e-12);
        assert!(crate::ops::max_divergence(&nb) < 1e-12);
    }

    #[test]
    fn coupling_matches_symbolic_curl() {
        let g = grid16();
        let p = params();
        let u = vec_field(&g, |_, _, _| 0.0, |_, _, _| 0.0, |x1, _, _| x1.sin());
        let s = State::new(u, SpectralVectorField::zeros(&g), SpectralVectorField::zeros(&g), 0.0)
            .unwrap();
        let (cu, cw) = coupling_tendency(&s, &p);
        assert_eq!(cu.l2_norm_sq(), 0.0, "w = 0 gives no feedback on u");
        let want = field_from_fn(&g, |x1, _, _| -2.0 * p.chi * x1.cos());
        let diff: f64 = cw
            .component(1)
            .coeffs()
            .iter()
            .zip(want.coeffs().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
        assert!(cw.component(0).max_coeff_norm() < 1e-15);
        assert!(cw.component(2).max_coeff_norm() < 1e-15);
        assert!(crate::ops::max_divergence(&cu) < 1e-13);

        let p0 = PhysParams::new_with_degenerate_override(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let (cu0, cw0) = coupling_tendency(&s, &p0);
        assert_eq!(cu0.l2_norm_sq() + cw0.l2_norm_sq(), 0.0);
    }

    #[test]
    fn propagator_closed_forms() {
        let g = grid16();
        let p = params();
        let dt = 0.37;
        let prop = linear_propagator(&p, &g, dt);
        // Mode (0, 0, 1): |xi_h| = 0, |xi| = 1.
        let (eu, eb, ewl, ewp) = prop.factors_at([0, 0, 1]);
        assert!((eu - (-p.chi * dt).exp()).abs() < 1e-15);
        assert!((eb - 1.0).abs() < 1e-15);
        assert!((ewl - (-(p.kappa + 4.0 * p.chi) * dt).exp()).abs() < 1e-15);
        assert!((ewp - (-4.0 * p.chi * dt).exp()).abs() < 1e-15);
        // Mode (1, 0, 0): |xi_h| = 1.
        let (eu, eb, _, _) = prop.factors_at([1, 0, 0]);
        assert!((eu - (-(p.mu + p.chi) * dt).exp()).abs() < 1e-15);
        assert!((eb - (-p.nu * dt).exp()).abs() < 1e-15);
        // xi = 0 with the chi = 0 override: all identity.
        let p0 = PhysParams::new_with_degenerate_override(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let prop0 = linear_propagator(&p0, &g, dt);
        let (eu, eb, ewl, ewp) = prop0.factors_at([0, 0, 0]);
        assert_eq!((eu, eb, ewl, ewp), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn linear_micro_rotation_mode_decays_exactly() {
        let g = grid16();
        let p = params();
        let amp = 0.8;
        let w = vec_field(&g, |_, _, _| 0.0, |_, _, _| 0.0, |_, _, x3| amp * x3.sin());
        let mut s = State::new(
            SpectralVectorField::zeros(&g),
            SpectralVectorField::zeros(&g),
            w,
            0.0,
        )
        .unwrap();
        let norm0 = s.w().l2_norm_sq().sqrt();
        let dt = 0.05;
        let mut stepper = Stepper::new(&g, &p);
        for _ in 0..20 {
            s = stepper.step(&s, dt).unwrap();
        }
        let rate = p.kappa + 4.0 * p.chi;
        let want = norm0 * (-rate * s.t()).exp();
        let got = s.w().l2_norm_sq().sqrt();
        assert!(
            (got - want).abs() / want < 1e-10,
            "w mode: got {got}, want {want}"
        );
        assert!(s.u().l2_norm_sq() < 1e-28, "curl-free w never excites u");
    }

    #[test]
    fn linear_magnetic_mode_decays_exactly() {
        let g = grid16();
        let p = params();
        let b = vec_field(&g, |_, _, _| 0.0, |_, _, _| 0.0, |x1, _, _| x1.sin());
        let mut s = State::new(
            SpectralVectorField::zeros(&g),
            b,
            SpectralVectorField::zeros(&g),
            0.0,
        )
        .unwrap();
        let norm0 = s.b().l2_norm_sq().sqrt();
        let mut stepper = Stepper::new(&g, &p);
        let dt = 0.1;
        for _ in 0..10 {
            s = stepper.step(&s, dt).unwrap();
        }
        let want = norm0 * (-p.nu * s.t()).exp();
        let got = s.b().l2_norm_sq().sqrt();
        assert!((got - want).abs() / want < 1e-10);
    }

    #[test]
    fn energy_is_nonincreasing_on_random_data() {
        let g = grid16();
        let p = params();
        let shape = SpectrumShape {
            slope: 2.0,
            k_peak: 2.0,
        };
        let mut s = State::new(
            random_divfree_field(&g, 21, shape, 0.3, false),
            random_divfree_field(&g, 22, shape, 0.2, false),
            random_divfree_field(&g, 23, shape, 0.25, false),
            0.0,
        )
        .unwrap();
        let mut stepper = Stepper::new(&g, &p);
        let mut prev = s.energy().sqrt();
        for _ in 0..25 {
            s = stepper.step(&s, 1e-3).unwrap();
            let cur = s.energy().sqrt();
            assert!(
                cur <= prev * (1.0 + 1e-10),
                "L2 norm grew: {prev} -> {cur}"
            );
            prev = cur;
        }
    }

    #[test]
    fn divergence_stays_tiny_along_runs() {
        let g = grid16();
        let p = params();
        let shape = SpectrumShape::default();
        let mut s = State::new(
            random_divfree_field(&g, 31, shape, 0.4, false),
            random_divfree_field(&g, 32, shape, 0.3, false),
            random_divfree_field(&g, 33, shape, 0.3, false),
            0.0,
        )
        .unwrap();
        let mut stepper = Stepper::new(&g, &p);
        for _ in 0..10 {
            s = stepper.step(&s, 0.01).unwrap();
            let (du, db) = s.div_residuals();
            assert!(du <= 1e-11 && db <= 1e-11, "divergence drifted: {du}, {db}");
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let g = grid16();
        let p = params();
        let shape = SpectrumShape::default();
        let s = State::new(
            random_divfree_field(&g, 41, shape, 0.5, false),
            random_divfree_field(&g, 42, shape, 0.5, false),
            random_divfree_field(&g, 43, shape, 0.5, false),
            0.0,
        )
        .unwrap();
        let a = Stepper::new(&g, &p).step(&s, 0.02).unwrap();
        let b = Stepper::new(&g, &p).step(&s, 0.02).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cfl_scalings() {
        let g = grid16();
        let u = vec_field(&g, |_, x2, _| 0.3 * x2.sin(), |_, _, _| 0.0, |_, _, _| 0.0);
        let u2 = vec_field(&g, |_, x2, _| 0.6 * x2.sin(), |_, _, _| 0.0, |_, _, _| 0.0);
        let zero = SpectralVectorField::zeros(&g);
        let s1 = State::new(u, zero.clone(), zero.clone(), 0.0).unwrap();
        let s2 = State::new(u2, zero.clone(), zero.clone(), 0.0).unwrap();
        let d1 = cfl_dt(&s1, 1.0);
        let d2 = cfl_dt(&s2, 1.0);
        assert!((d1 / d2 - 2.0).abs() < 1e-6, "doubling u halves dt");
        assert!((cfl_dt(&s1, 0.5) / d1 - 0.5).abs() < 1e-12);
        let zero_state = State::zero(&g);
        let dz = cfl_dt(&zero_state, 1.0);
        let spacing = g.spacing(Dir::X1);
        assert!((dz - spacing / CFL_VELOCITY_FLOOR).abs() / dz < 1e-12);
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        let g = grid16();
        let p = params();
        let shape = SpectrumShape::default();
        // Amplitude large enough that an oversized explicit step overflows.
        let s = State::new(
            random_divfree_field(&g, 51, shape, 1e6, false),
            random_divfree_field(&g, 52, shape, 1e6, false),
            random_divfree_field(&g, 53, shape, 1e6, false),
            0.0,
        )
        .unwrap();
        let mut stepper = Stepper::new(&g, &p);
        let mut state = s;
        let mut saw_blowup = false;
        for _ in 0..40 {
            match stepper.step(&state, 5.0) {
                Ok(next) => state = next,
                Err(StepError::BlowUp { t }) => {
                    assert!(t > 0.0);
                    saw_blowup = true;
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(saw_blowup, "expected a blow-up report");
    }
}
