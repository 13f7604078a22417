//! Scalar reductions of the decay machinery: the nonlinear decay ODE, the
//! exponent-iteration recursion, and the bootstrap bound monitor.
//!
//! The differential inequality behind the `H^1` decay statement is
//! integrated as an equality `X' = -c X^{(1+sigma)/sigma}` with a chosen
//! rate constant; its closed form
//! `X(t) = (X(0)^{-1/sigma} + (c/sigma) t)^{-sigma}` makes the integrator
//! itself testable. The exponent recursion `a_n = (a_{n-1} - sigma)/2 + a_0`
//! with `a_0 = 2 sigma` has closed form `a_n = 3 sigma - sigma / 2^n`; for
//! `sigma > 1/2` the iterates eventually exceed `1 + sigma`, which is why
//! the gradient norm settles at the `(1+t)^{-(1+sigma)}` rate.

use crate::diagnostics::NormSeries;
use crate::error::{DiagnosticsError, OdeError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerConfig {
    pub sigma: f64,
    pub c: f64,
    pub x0: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl LedgerConfig {
    pub fn validate(&self) -> Result<(), OdeError> {
        if self.sigma <= 0.0 || self.sigma >= 1.0 || self.sigma.is_nan() {
            return Err(OdeError::BadConfig(format!(
                "sigma must lie in (0, 1), got {}",
                self.sigma
            )));
        }
        for (name, v) in [
            ("c", self.c),
            ("x0", self.x0),
            ("t_end", self.t_end),
            ("dt", self.dt),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(OdeError::BadConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Closed-form solution of the decay ODE.
pub fn closed_form_decay(cfg: &LedgerConfig, t: f64) -> f64 {
    (cfg.x0.powf(-1.0 / cfg.sigma) + (cfg.c / cfg.sigma) * t).powf(-cfg.sigma)
}

/// Fixed-step RK4 integration of `X' = -c X^{(1+sigma)/sigma}`.
///
/// Returns `(t, X)` samples including the initial point. Fails if any stage
/// or accepted value leaves the positive half-line.
pub fn integrate_decay_ode(cfg: &LedgerConfig) -> Result<Vec<(f64, f64)>, OdeError> {
    cfg.validate()?;
    let power = (1.0 + cfg.sigma) / cfg.sigma;
    let rhs = |x: f64| -cfg.c * x.powf(power);
    let n_steps = (cfg.t_end / cfg.dt).ceil() as usize;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut x = cfg.x0;
    let mut t = 0.0;
    out.push((t, x));
    for step in 0..n_steps {
        let dt = cfg.dt.min(cfg.t_end - t);
        if dt <= 0.0 {
            break;
        }
        let k1 = rhs(x);
        let x2 = x + 0.5 * dt * k1;
        if x2 <= 0.0 {
            return Err(OdeError::StepTooLarge { t });
        }
        let k2 = rhs(x2);
        let x3 = x + 0.5 * dt * k2;
        if x3 <= 0.0 {
            return Err(OdeError::StepTooLarge { t });
        }
        let k3 = rhs(x3);
        let x4 = x + dt * k3;
        if x4 <= 0.0 {
            return Err(OdeError::StepTooLarge { t });
        }
        let k4 = rhs(x4);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if x <= 0.0 || !x.is_finite() {
            return Err(OdeError::StepTooLarge { t });
        }
        t = cfg.dt * (step + 1) as f64;
        out.push((t, x));
    }
    Ok(out)
}

/// Exponent iterates `a_0 .. a_n` of the gradient-decay recursion.
pub fn iterate_exponents(sigma: f64, n: usize) -> Vec<f64> {
    assert!(sigma > 0.0 && sigma < 1.0, "sigma must lie in (0, 1)");
    let a0 = 2.0 * sigma;
    let mut out = Vec::with_capacity(n + 1);
    out.push(a0);
    let mut a = a0;
    for _ in 0..n {
        a = 0.5 * (a - sigma) + a0;
        out.push(a);
    }
    out
}

/// Closed form `a_n = 3 sigma - sigma / 2^n`.
pub fn exponent_closed_form(sigma: f64, n: usize) -> f64 {
    3.0 * sigma - sigma / f64::powi(2.0, n as i32)
}

/// The rate that actually governs the gradient bound at iteration `n`:
/// `min(1 + sigma, a_n)`.
pub fn effective_exponent(sigma: f64, n: usize) -> f64 {
    (1.0 + sigma).min(exponent_closed_form(sigma, n))
}

/// Outcome of tracking the negative-norm bootstrap bounds along a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapReport {
    pub e0: f64,
    /// `sup_t (negh_U^2 + negh_d3U^2)`.
    pub sup: f64,
    pub t_at_sup: f64,
    /// First sample index and time where the working bound `2 E0` failed.
    pub first_crossing: Option<(usize, f64)>,
    /// Whether the improved bound `1.5 E0` held on the whole series.
    pub improved_bound_held: bool,
    /// Whether the improved bound held for `t >= transient_t`.
    pub improved_bound_held_after_transient: bool,
    pub transient_t: f64,
}

/// Check `negh_U^2 + negh_d3U^2 <= 2 E0` along the run, plus the improved
/// `1.5 E0` bound (everywhere and past `transient_t`).
pub fn bootstrap_monitor(
    series: &NormSeries,
    e0: f64,
    transient_t: f64,
) -> Result<BootstrapReport, DiagnosticsError> {
    if series.is_empty() {
        return Err(DiagnosticsError::TooFewSamples {
            t0: 0.0,
            t1: 0.0,
            got: 0,
            need: 1,
        });
    }
    let mut sup = f64::NEG_INFINITY;
    let mut t_at_sup = 0.0;
    let mut first_crossing = None;
    let mut improved_all = true;
    let mut improved_tail = true;
    for (i, r) in series.samples().iter().enumerate() {
        let (nu, nd) = match (r.negh_u, r.negh_d3u) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(DiagnosticsError::MissingNegativeNorms),
        };
        let v = nu * nu + nd * nd;
        if v > sup {
            sup = v;
            t_at_sup = r.t;
        }
        if v > 2.0 * e0 && first_crossing.is_none() {
            first_crossing = Some((i, r.t));
        }
        if v > 1.5 * e0 {
            improved_all = false;
            if r.t >= transient_t {
                improved_tail = false;
            }
        }
    }
    Ok(BootstrapReport {
        e0,
        sup,
        t_at_sup,
        first_crossing,
        improved_bound_held: improved_all,
        improved_bound_held_after_transient: improved_tail,
        transient_t,
    })
}
