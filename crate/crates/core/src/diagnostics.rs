//! Norms, energy-identity audit, smallness verdicts, and algebraic decay
//! fits along trajectories.
//!
//! All norms are evaluated in coefficient space through Parseval. The audit
//! measures the one-step defect of the energy identity `d/dt E + D = G`
//! with `E = ||(u,B,w)||^2 / 2`, dissipation
//! `D = mu ||grad_h u||^2 + nu ||grad_h B||^2 + gamma ||grad_h w||^2 +
//! kappa ||div w||^2 + chi ||grad u||^2 + 4 chi ||w||^2`, and exchange
//! `G = 4 chi <w, curl u>`, using trapezoidal quadrature of `D` and `G`
//! over the step.
//!
//! The rate-form residual is second order in `dt`; the per-step defect
//! `residual * dt` is third order and is the audited quantity.

use std::io::Write;

use crate::dynamics::{PhysParams, State};
use crate::error::{DiagnosticsError, NormError};
use crate::field::SpectralVectorField;
use crate::grid::Dir;
use crate::ops::{deriv_wavenumbers, ZERO_MODE_TOL};

/// Snapshot of every tracked norm at one sample time. Negative-norm entries
/// are absent when the state is not horizontal-mean-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub t: f64,
    pub l2_u: f64,
    pub l2_d3u: f64,
    pub l2_gradh_u: f64,
    pub h1_u: f64,
    pub negh_u: Option<f64>,
    pub negh_d3u: Option<f64>,
    pub div_u_max: f64,
    pub div_b_max: f64,
}

/// Accumulates the weighted coefficient sums of one vector field.
#[derive(Default, Clone, Copy)]
struct WeightedSums {
    plain: f64,
    d3: f64,
    gradh: f64,
    grad: f64,
    negh: f64,
    negh_d3: f64,
}

fn weighted_sums(v: &SpectralVectorField, sigma: Option<f64>) -> WeightedSums {
    let grid = v.grid();
    let k1 = grid.wavenumbers(Dir::X1);
    let k2 = grid.wavenumbers(Dir::X2);
    let k3 = grid.wavenumbers(Dir::X3);
    let kd3 = deriv_wavenumbers(grid, Dir::X3);
    let mut acc = WeightedSums::default();
    for c in v.components() {
        for ((i1, i2, i3), val) in c.coeffs().indexed_iter() {
            let m = val.norm_sqr();
            if m == 0.0 {
                continue;
            }
            let kh2 = k1[i1] * k1[i1] + k2[i2] * k2[i2];
            let k2full = kh2 + k3[i3] * k3[i3];
            let d3w = kd3[i3] * kd3[i3];
            acc.plain += m;
            acc.d3 += d3w * m;
            acc.gradh += kh2 * m;
            acc.grad += k2full * m;
            if let Some(s) = sigma {
                if kh2 > 0.0 {
                    let neg = kh2.powf(-s);
                    acc.negh += neg * m;
                    acc.negh_d3 += neg * d3w * m;
                }
            }
        }
    }
    acc
}

/// Compute every norm of the report; `sigma` requests the negative
/// horizontal norms, which are flagged absent unless all fields are
/// horizontal-mean-free to [`ZERO_MODE_TOL`].
pub fn norms(s: &State, sigma: Option<f64>) -> NormReport {
    let vol = s.grid().volume();
    let mean_mag = s
        .fields()
        .iter()
        .fold(0.0f64, |m, f| m.max(f.horizontal_mean_magnitude()));
    let neg_ok = sigma.is_some() && mean_mag <= ZERO_MODE_TOL;
    let sig = if neg_ok { sigma } else { None };
    let mut total = WeightedSums::default();
    for f in s.fields() {
        let part = weighted_sums(f, sig);
        total.plain += part.plain;
        total.d3 += part.d3;
        total.gradh += part.gradh;
        total.grad += part.grad;
        total.negh += part.negh;
        total.negh_d3 += part.negh_d3;
    }
    let (div_u_max, div_b_max) = s.div_residuals();
    NormReport {
        t: s.t(),
        l2_u: (vol * total.plain).sqrt(),
        l2_d3u: (vol * total.d3).sqrt(),
        l2_gradh_u: (vol * total.gradh).sqrt(),
        h1_u: (vol * (total.plain + total.grad)).sqrt(),
        negh_u: neg_ok.then(|| (vol * total.negh).sqrt()),
        negh_d3u: neg_ok.then(|| (vol * total.negh_d3).sqrt()),
        div_u_max,
        div_b_max,
    }
}

/// Strict variant that errors instead of flagging when negative norms are
/// requested on fields with horizontal-mean content.
pub fn norms_strict(s: &State, sigma: f64) -> Result<NormReport, NormError> {
    let mean_mag = s
        .fields()
        .iter()
        .fold(0.0f64, |m, f| m.max(f.horizontal_mean_magnitude()));
    if mean_mag > ZERO_MODE_TOL {
        return Err(NormError::IllPosed {
            magnitude: mean_mag,
            tol: ZERO_MODE_TOL,
        });
    }
    Ok(norms(s, Some(sigma)))
}

/// Time series of reports with strictly increasing sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSeries {
    samples: Vec<NormReport>,
    sigma: f64,
}

impl NormSeries {
    pub fn new(sigma: f64) -> Result<NormSeries, DiagnosticsError> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(DiagnosticsError::NonpositiveValue {
                t: 0.0,
                value: sigma,
            });
        }
        Ok(NormSeries {
            samples: Vec::new(),
            sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn push(&mut self, report: NormReport) -> Result<(), DiagnosticsError> {
        if let Some(last) = self.samples.last() {
            if report.t <= last.t {
                return Err(DiagnosticsError::NonMonotoneTime);
            }
        }
        self.samples.push(report);
        Ok(())
    }

    pub fn samples(&self) -> &[NormReport] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }
}

/// One-step defect record of the energy identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAuditRecord {
    pub t: f64,
    /// Rate-form residual `[E(next) - E(prev)]/dt + trap(D) - trap(G)`.
    pub residual: f64,
    /// Per-step energy defect, `residual * dt`; this is the quantity that
    /// shrinks at third order under step halving.
    pub defect: f64,
}

/// Dissipation functional `D` and exchange term `G` of one state.
pub fn dissipation_and_exchange(s: &State, p: &PhysParams) -> (f64, f64) {
    let grid = s.grid();
    let vol = grid.volume();
    let k1 = grid.wavenumbers(Dir::X1);
    let k2 = grid.wavenumbers(Dir::X2);
    let k3 = grid.wavenumbers(Dir::X3);

    let mut gradh_u = 0.0;
    let mut grad_u = 0.0;
    let mut gradh_b = 0.0;
    let mut gradh_w = 0.0;
    let mut l2_w = 0.0;
    for (field, gh, full) in [
        (s.u(), &mut gradh_u, Some(&mut grad_u)),
        (s.b(), &mut gradh_b, None),
        (s.w(), &mut gradh_w, None),
    ] {
        let mut full = full;
        for c in field.components() {
            for ((i1, i2, i3), v) in c.coeffs().indexed_iter() {
                let m = v.norm_sqr();
                if m == 0.0 {
                    continue;
                }
                let kh2 = k1[i1] * k1[i1] + k2[i2] * k2[i2];
                *gh += kh2 * m;
                if let Some(g) = full.as_deref_mut() {
                    *g += (kh2 + k3[i3] * k3[i3]) * m;
                }
            }
        }
    }
    for c in s.w().components() {
        l2_w += c.coeffs().iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    // ||div w||^2 and <w, curl u> need the cross terms; one fused pass.
    let mut div_w = 0.0;
    let mut w_dot_curl_u = 0.0;
    let w1 = s.w().component(0).coeffs();
    let w2 = s.w().component(1).coeffs();
    let w3 = s.w().component(2).coeffs();
    let u1 = s.u().component(0).coeffs();
    let u2 = s.u().component(1).coeffs();
    let u3 = s.u().component(2).coeffs();
    for ((i1, i2, i3), a1) in w1.indexed_iter() {
        let idx = [i1, i2, i3];
        let (kk1, kk2, kk3) = (k1[i1], k2[i2], k3[i3]);
        let a2 = w2[idx];
        let a3 = w3[idx];
        let kdotw = kk1 * a1 + kk2 * a2 + kk3 * a3;
        div_w += kdotw.norm_sqr();
        // curl u in coefficients: i k x u.
        let c1 = num_complex::Complex64::new(0.0, 1.0) * (kk2 * u3[idx] - kk3 * u2[idx]);
        let c2 = num_complex::Complex64::new(0.0, 1.0) * (kk3 * u1[idx] - kk1 * u3[idx]);
        let c3 = num_complex::Complex64::new(0.0, 1.0) * (kk1 * u2[idx] - kk2 * u1[idx]);
        w_dot_curl_u += (a1 * c1.conj() + a2 * c2.conj() + a3 * c3.conj()).re;
    }

    let d = vol
        * (p.mu * gradh_u
            + p.nu * gradh_b
            + p.gamma * gradh_w
            + p.kappa * div_w
            + p.chi * grad_u
            + 4.0 * p.chi * l2_w);
    let g = vol * 4.0 * p.chi * w_dot_curl_u;
    (d, g)
}

/// Audit the energy identity across one step.
pub fn energy_audit(
    prev: &State,
    next: &State,
    p: &PhysParams,
    dt: f64,
) -> Result<EnergyAuditRecord, DiagnosticsError> {
    let expected = prev.t() + dt;
    if (next.t() - expected).abs() > 1e-9 * expected.abs().max(1.0) {
        return Err(DiagnosticsError::TimeMismatch {
            next_t: next.t(),
            expected,
        });
    }
    let e_prev = 0.5 * prev.energy();
    let e_next = 0.5 * next.energy();
    let (d_prev, g_prev) = dissipation_and_exchange(prev, p);
    let (d_next, g_next) = dissipation_and_exchange(next, p);
    let residual =
        (e_next - e_prev) / dt + 0.5 * (d_prev + d_next) - 0.5 * (g_prev + g_next);
    Ok(EnergyAuditRecord {
        t: next.t(),
        residual,
        defect: residual * dt,
    })
}

/// Verdict of the stability smallness check `sup_t (l2_U + l2_d3U) <= c eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallnessVerdict {
    pub sup: f64,
    pub t_at_sup: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn smallness_check(
    series: &NormSeries,
    eps: f64,
    c_bound: f64,
) -> Result<SmallnessVerdict, DiagnosticsError> {
    if series.is_empty() {
        return Err(DiagnosticsError::TooFewSamples {
            t0: 0.0,
            t1: 0.0,
            got: 0,
            need: 1,
        });
    }
    let (mut sup, mut t_at) = (f64::NEG_INFINITY, 0.0);
    for r in series.samples() {
        let v = r.l2_u + r.l2_d3u;
        if v > sup {
            sup = v;
            t_at = r.t;
        }
    }
    let bound = c_bound * eps;
    Ok(SmallnessVerdict {
        sup,
        t_at_sup: t_at,
        bound,
        pass: sup <= bound,
    })
}

/// Quantity selectors for decay fitting, all squared norms as in the decay
/// statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayQuantity {
    /// `l2_U^2 + l2_d3U^2`, expected slope `-sigma`.
    EnergyWithVertical,
    /// `l2_gradhU^2`, expected slope `-(1 + sigma)`.
    GradHSquared,
    /// `l2_U^2` alone.
    EnergyOnly,
}

impl DecayQuantity {
    pub fn extract(self, r: &NormReport) -> f64 {
        match self {
            DecayQuantity::EnergyWithVertical => r.l2_u * r.l2_u + r.l2_d3u * r.l2_d3u,
            DecayQuantity::GradHSquared => r.l2_gradh_u * r.l2_gradh_u,
            DecayQuantity::EnergyOnly => r.l2_u * r.l2_u,
        }
    }
}

/// Result of a log-log least-squares fit `y ~ prefactor * (1+t)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_samples: usize,
}

/// Ordinary least squares on raw pairs; returns `(slope, intercept, r2)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res = syy - slope * sxy;
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

/// Fit `log(value)` against `log(1 + t)` over `[t0, t1]` on raw samples.
pub fn fit_decay_points(
    points: &[(f64, f64)],
    t0: f64,
    t1: f64,
) -> Result<DecayFit, DiagnosticsError> {
    let window: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(t, _)| *t >= t0 && *t <= t1)
        .collect();
    if window.len() < 8 {
        return Err(DiagnosticsError::TooFewSamples {
            t0,
            t1,
            got: window.len(),
            need: 8,
        });
    }
    for &(t, v) in &window {
        if v <= 0.0 || v.is_nan() {
            return Err(DiagnosticsError::NonpositiveValue { t, value: v });
        }
    }
    let xs: Vec<f64> = window.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = window.iter().map(|(_, v)| v.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(DecayFit {
        exponent: slope,
        prefactor: intercept.exp(),
        window: (t0, t1),
        r_squared: r2,
        n_samples: window.len(),
    })
}

/// Fit a selected quantity of a norm series.
pub fn fit_decay(
    series: &NormSeries,
    quantity: DecayQuantity,
    t0: f64,
    t1: f64,
) -> Result<DecayFit, DiagnosticsError> {
    let points: Vec<(f64, f64)> = series
        .samples()
        .iter()
        .map(|r| (r.t, quantity.extract(r)))
        .collect();
    fit_decay_points(&points, t0, t1)
}

/// Slope of `log y` against `log(1+t)` between two adjacent samples.
pub fn instantaneous_log_slope(t0: f64, y0: f64, t1: f64, y1: f64) -> f64 {
    (y1.ln() - y0.ln()) / ((1.0 + t1).ln() - (1.0 + t0).ln())
}

/// CSV column order of the series contract.
pub const CSV_HEADER: &str =
    "t,l2_U,l2_d3U,l2_gradhU,h1_U,negh_U,negh_d3U,div_u_max,div_B_max,audit_residual";

/// Emit the series CSV; `audits` pairs one rate-form residual with each
/// sample (0 for the initial sample).
pub fn write_series_csv<W: Write>(
    out: &mut W,
    series: &NormSeries,
    audits: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (i, r) in series.samples().iter().enumerate() {
        let audit = audits.get(i).copied().unwrap_or(0.0);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.l2_u,
            r.l2_d3u,
            r.l2_gradh_u,
            r.h1_u,
            r.negh_u.unwrap_or(f64::NAN),
            r.negh_d3u.unwrap_or(f64::NAN),
            r.div_u_max,
            r.div_b_max,
            audit
        )?;
    }
    Ok(())
}
