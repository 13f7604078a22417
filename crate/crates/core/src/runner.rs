//! Experiment drivers: reproducible simulation runs, decay studies, and
//! stability sweeps.
//!
//! A run samples diagnostics on a fixed cadence, audits the energy identity
//! across the step landing on each sample, checkpoints periodically
//! (overwriting the latest), and writes the series CSV plus a status record.
//! Config plus seed fixes every output byte for any worker count.

use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::save_checkpoint;
use crate::config::RunConfig;
use crate::diagnostics::{
    energy_audit, fit_decay, norms, write_series_csv, DecayFit, DecayQuantity, NormSeries,
};
use crate::dynamics::{cfl_dt, PhysParams, State, Stepper, CFL_VELOCITY_FLOOR};
use crate::error::{ConfigError, DiagnosticsError, RunError, StepError};
use crate::grid::{Dir, GridSpec};
use crate::init::{derive_seed, random_divfree_field, SpectrumShape};
use crate::reduced_ode::{bootstrap_monitor, BootstrapReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Clean,
    BlowUp { t: f64 },
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub series: NormSeries,
    /// Rate-form audit residual of the step landing on each sample
    /// (0 for the initial sample).
    pub audits: Vec<f64>,
    /// `||grad_h (u,B,w)||_{H^1}^2` per sample, the integrand of the
    /// dissipation-integral bound.
    pub gradh_h1_sq: Vec<f64>,
    pub final_state: State,
    pub params: PhysParams,
    pub series_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub status_path: PathBuf,
}

/// `||grad_h U||_{H^1}^2 = sum kh^2 (1 + |k|^2) |coeff|^2 * V` over all
/// nine components.
pub fn gradh_h1_sq(s: &State) -> f64 {
    let grid = s.grid();
    let k1 = grid.wavenumbers(Dir::X1);
    let k2 = grid.wavenumbers(Dir::X2);
    let k3 = grid.wavenumbers(Dir::X3);
    let mut sum = 0.0;
    for f in s.fields() {
        for c in f.components() {
            for ((i1, i2, i3), v) in c.coeffs().indexed_iter() {
                let m = v.norm_sqr();
                if m == 0.0 {
                    continue;
                }
                let kh2 = k1[i1] * k1[i1] + k2[i2] * k2[i2];
                let kk2 = kh2 + k3[i3] * k3[i3];
                sum += kh2 * (1.0 + kk2) * m;
            }
        }
    }
    grid.volume() * sum
}

/// Build the initial state of a config: three shaped random fields with
/// per-field derived seeds, projected and (optionally) horizontal-mean-free.
pub fn initial_state(cfg: &RunConfig) -> Result<(GridSpec, PhysParams, State), RunError> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let params = cfg.params.build()?;
    let shape = SpectrumShape {
        slope: cfg.init.spectrum_slope,
        k_peak: cfg.init.k_peak,
    };
    let u = random_divfree_field(
        &grid,
        derive_seed(cfg.init.seed, 0),
        shape,
        cfg.init.amp_u,
        cfg.init.horizontal_mean_free,
    );
    let b = random_divfree_field(
        &grid,
        derive_seed(cfg.init.seed, 1),
        shape,
        cfg.init.amp_b,
        cfg.init.horizontal_mean_free,
    );
    let w = random_divfree_field(
        &grid,
        derive_seed(cfg.init.seed, 2),
        shape,
        cfg.init.amp_w,
        cfg.init.horizontal_mean_free,
    );
    let state = State::new(u, b, w, 0.0).expect("generated fields share the grid");
    Ok((grid, params, state))
}

fn resolve(out_dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| RunError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    fs::write(path, bytes).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Execute one configured run, writing CSV, checkpoints, and status record.
pub fn run_simulation(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let (grid, params, mut state) = initial_state(cfg)?;
    let series_path = resolve(out_dir, &cfg.output.series_path);
    let checkpoint_path = resolve(out_dir, &cfg.output.checkpoint_path);
    let status_path = series_path.with_extension("status");
    // Fail on unwritable output before any compute.
    write_file(&status_path, b"status=running\n")?;

    let mut stepper = Stepper::new(&grid, &params);
    stepper.horizontal_mean_free = cfg.init.horizontal_mean_free;

    let mut series = NormSeries::new(cfg.sigma)?;
    let mut audits = Vec::new();
    let mut gradh = Vec::new();
    series.push(norms(&state, Some(cfg.sigma)))?;
    audits.push(0.0);
    gradh.push(gradh_h1_sq(&state));

    let t_end = cfg.time.t_end;
    let interval = cfg.time.sample_interval;
    let eps_t = 1e-9 * t_end.max(1.0);
    let mut next_sample = interval.min(t_end);
    let mut next_checkpoint = cfg.output.checkpoint_interval;
    let mut cfl_limit = cfl_dt(&state, cfg.time.cfl_safety);
    let mut status = RunStatus::Clean;

    while state.t() + eps_t < t_end {
        let gap = next_sample - state.t();
        // A non-finite velocity scale drives the CFL limit to zero; floor it
        // so the offending step runs and surfaces as a blow-up report.
        let dt_free = cfg.time.dt_max.min(cfl_limit).max(f64::MIN_POSITIVE);
        let (dt, lands) = if gap <= dt_free * (1.0 + 1e-12) {
            (gap, true)
        } else {
            (dt_free, false)
        };
        let prev = lands.then(|| state.clone());
        match stepper.step(&state, dt) {
            Ok(next) => state = next,
            Err(StepError::BlowUp { t }) => {
                status = RunStatus::BlowUp { t };
                break;
            }
            Err(e) => return Err(e.into()),
        }
        cfl_limit = cfg.time.cfl_safety
            * Dir::ALL
                .iter()
                .map(|&d| grid.spacing(d))
                .fold(f64::INFINITY, f64::min)
            / (stepper.last_velocity_scale() + CFL_VELOCITY_FLOOR);
        if lands {
            let rec = energy_audit(prev.as_ref().unwrap(), &state, &params, dt)?;
            series.push(norms(&state, Some(cfg.sigma)))?;
            audits.push(rec.residual);
            gradh.push(gradh_h1_sq(&state));
            next_sample = (next_sample + interval).min(t_end);
        }
        if state.t() + eps_t >= next_checkpoint {
            save_checkpoint(&checkpoint_path, &state, &params)?;
            while next_checkpoint <= state.t() + eps_t {
                next_checkpoint += cfg.output.checkpoint_interval;
            }
        }
    }
    if matches!(status, RunStatus::Clean) && t_end > 0.0 {
        save_checkpoint(&checkpoint_path, &state, &params)?;
    }

    let mut csv = Vec::new();
    write_series_csv(&mut csv, &series, &audits).expect("in-memory write");
    write_file(&series_path, &csv)?;
    let status_text = match status {
        RunStatus::Clean => "status=clean\n".to_string(),
        RunStatus::BlowUp { t } => format!("status=blowup\nt={t}\n"),
    };
    write_file(&status_path, status_text.as_bytes())?;

    Ok(RunOutcome {
        status,
        series,
        audits,
        gradh_h1_sq: gradh,
        final_state: state,
        params,
        series_path,
        checkpoint_path,
        status_path,
    })
}

/// Decay-study result: both algebraic fits, the bootstrap bound report, and
/// the torus-floor detection.
#[derive(Debug)]
pub struct DecayStudy {
    pub outcome: RunOutcome,
    pub window: (f64, f64),
    /// Fit of `l2_U^2 + l2_d3U^2`, target exponent `-sigma`.
    pub fit_energy: DecayFit,
    /// Fit of `l2_gradhU^2`, target exponent `-(1 + sigma)`.
    pub fit_gradh: DecayFit,
    pub bootstrap: BootstrapReport,
    /// Time at which the instantaneous log-slope of the energy quantity
    /// first dropped below `-(2 + sigma)`, the exponential-floor signature.
    pub floor_at: Option<f64>,
    /// Whether the floor arrived before eight pre-floor samples existed.
    pub floor_limited: bool,
}

/// Instantaneous log-log slopes of a quantity along the series.
fn log_slopes(series: &NormSeries, quantity: DecayQuantity) -> Vec<(f64, f64)> {
    let samples = series.samples();
    samples
        .windows(2)
        .filter_map(|pair| {
            let y0 = quantity.extract(&pair[0]);
            let y1 = quantity.extract(&pair[1]);
            if y0 > 0.0 && y1 > 0.0 {
                Some((
                    pair[1].t,
                    crate::diagnostics::instantaneous_log_slope(pair[0].t, y0, pair[1].t, y1),
                ))
            } else {
                None
            }
        })
        .collect()
}

pub fn run_decay_study(
    cfg: &RunConfig,
    out_dir: &Path,
    window: Option<(f64, f64)>,
) -> Result<DecayStudy, RunError> {
    if !cfg.init.horizontal_mean_free {
        return Err(ConfigError::Range {
            field: "init.horizontal_mean_free",
            reason: "decay studies track negative horizontal norms; set it to true".into(),
        }
        .into());
    }
    let outcome = run_simulation(cfg, out_dir)?;
    let sigma = cfg.sigma;

    let floor_threshold = -(2.0 + sigma);
    let slopes = log_slopes(&outcome.series, DecayQuantity::EnergyWithVertical);
    let floor_at = slopes
        .iter()
        .find(|(_, s)| *s < floor_threshold)
        .map(|(t, _)| *t);

    let (t0, t1) = window.unwrap_or_else(|| {
        let t_last = floor_at.unwrap_or(cfg.time.t_end).min(cfg.time.t_end);
        // Skip the dissipative transient: start once the energy quantity is
        // genuinely decaying, at the earliest slope below half the target.
        let onset = slopes
            .iter()
            .find(|(_, s)| *s <= -0.5 * sigma)
            .map(|(t, _)| *t)
            .unwrap_or(0.0);
        (onset.min(0.5 * t_last), t_last)
    });
    let in_window = outcome
        .series
        .samples()
        .iter()
        .filter(|r| r.t >= t0 && r.t <= t1)
        .count();
    let floor_limited = floor_at.is_some() && in_window < 8;

    let fit_energy = fit_decay(&outcome.series, DecayQuantity::EnergyWithVertical, t0, t1)
        .map_err(RunError::Diagnostics)?;
    let fit_gradh = fit_decay(&outcome.series, DecayQuantity::GradHSquared, t0, t1)
        .map_err(RunError::Diagnostics)?;

    let first = outcome.series.samples()[0];
    let e0 = match (first.negh_u, first.negh_d3u) {
        (Some(a), Some(b)) => a * a + b * b,
        _ => return Err(DiagnosticsError::MissingNegativeNorms.into()),
    };
    let bootstrap =
        bootstrap_monitor(&outcome.series, e0, 1.0).map_err(RunError::Diagnostics)?;

    Ok(DecayStudy {
        outcome,
        window: (t0, t1),
        fit_energy,
        fit_gradh,
        bootstrap,
        floor_at,
        floor_limited,
    })
}

impl DecayStudy {
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "window [{:.4}, {:.4}] ({} samples)\n",
            self.window.0, self.window.1, self.fit_energy.n_samples
        ));
        s.push_str(&format!(
            "energy fit: exponent {:.4} prefactor {:.4e} r2 {:.6}\n",
            self.fit_energy.exponent, self.fit_energy.prefactor, self.fit_energy.r_squared
        ));
        s.push_str(&format!(
            "gradh fit: exponent {:.4} prefactor {:.4e} r2 {:.6}\n",
            self.fit_gradh.exponent, self.fit_gradh.prefactor, self.fit_gradh.r_squared
        ));
        s.push_str(&format!(
            "bootstrap: E0 {:.6e} sup {:.6e} crossing {:?} improved_held {} improved_after_t1 {}\n",
            self.bootstrap.e0,
            self.bootstrap.sup,
            self.bootstrap.first_crossing,
            self.bootstrap.improved_bound_held,
            self.bootstrap.improved_bound_held_after_transient
        ));
        match self.floor_at {
            Some(t) => s.push_str(&format!(
                "torus floor reached at t = {t:.4} (limited: {})\n",
                self.floor_limited
            )),
            None => s.push_str("torus floor not reached\n"),
        }
        s
    }
}

/// Per-amplitude record of a stability sweep.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonOutcome {
    pub eps: f64,
    pub status: RunStatus,
    /// `sup_t (l2_U + l2_d3U) / eps` (0 for the trivial zero run).
    pub sup_ratio: f64,
    pub h1_initial: f64,
    pub h1_sup: f64,
    /// Discrete-trapezoid `integral ||grad_h U||_{H^1}^2 dt`.
    pub gradh_h1_integral: f64,
    /// Fraction of that integral contributed by the last 20% of the window.
    pub tail_fraction: f64,
    pub bounded: bool,
}

#[derive(Debug)]
pub struct SweepReport {
    pub per_eps: Vec<EpsilonOutcome>,
    pub largest_bounded: Option<f64>,
}

/// Boundedness gates of the sweep verdict.
pub const SWEEP_H1_BOUND_FACTOR: f64 = 2.0;
pub const SWEEP_TAIL_BOUND: f64 = 0.5;

/// Trapezoid integral of per-sample values plus the fraction carried by the
/// final 20% of the time window.
pub fn series_integral_and_tail(ts: &[f64], values: &[f64]) -> (f64, f64) {
    let mut total = 0.0;
    let mut tail = 0.0;
    if ts.len() < 2 {
        return (0.0, 0.0);
    }
    let t_start = ts[0];
    let t_cut = t_start + 0.8 * (ts[ts.len() - 1] - t_start);
    for i in 1..ts.len() {
        let piece = 0.5 * (values[i] + values[i - 1]) * (ts[i] - ts[i - 1]);
        total += piece;
        if ts[i] > t_cut {
            tail += piece;
        }
    }
    (total, if total > 0.0 { tail / total } else { 0.0 })
}

/// Run the base config at each amplitude, recording stability verdicts.
/// Amplitudes are applied as `amp_u = amp_b = amp_w = eps / sqrt(3)`, so the
/// initial `L^2` norm of `(u, B, w)` equals `eps` exactly.
pub fn run_stability_sweep(
    cfg: &RunConfig,
    out_dir: &Path,
    epsilons: &[f64],
) -> Result<SweepReport, RunError> {
    for pair in epsilons.windows(2) {
        if pair[1] <= pair[0] {
            return Err(ConfigError::Range {
                field: "epsilons",
                reason: "must be ascending".into(),
            }
            .into());
        }
    }
    if epsilons.iter().any(|e| *e < 0.0) {
        return Err(ConfigError::Range {
            field: "epsilons",
            reason: "must be nonnegative".into(),
        }
        .into());
    }
    let mut per_eps = Vec::with_capacity(epsilons.len());
    for (idx, &eps) in epsilons.iter().enumerate() {
        let mut member = cfg.clone();
        let amp = eps / 3.0f64.sqrt();
        member.init.amp_u = amp;
        member.init.amp_b = amp;
        member.init.amp_w = amp;
        let member_dir = out_dir.join(format!("eps_{idx:03}"));
        let outcome = run_simulation(&member, &member_dir)?;
        let samples = outcome.series.samples();
        let sup = samples
            .iter()
            .map(|r| r.l2_u + r.l2_d3u)
            .fold(f64::NEG_INFINITY, f64::max);
        let h1_initial = samples[0].h1_u;
        let h1_sup = samples.iter().map(|r| r.h1_u).fold(f64::NEG_INFINITY, f64::max);
        let ts: Vec<f64> = samples.iter().map(|r| r.t).collect();
        let (integral, tail_fraction) = series_integral_and_tail(&ts, &outcome.gradh_h1_sq);
        let clean = matches!(outcome.status, RunStatus::Clean);
        let bounded = if eps == 0.0 {
            clean
        } else {
            clean
                && h1_sup <= SWEEP_H1_BOUND_FACTOR * h1_initial
                && tail_fraction <= SWEEP_TAIL_BOUND
        };
        per_eps.push(EpsilonOutcome {
            eps,
            status: outcome.status,
            sup_ratio: if eps > 0.0 { sup / eps } else { 0.0 },
            h1_initial,
            h1_sup,
            gradh_h1_integral: integral,
            tail_fraction,
            bounded,
        });
    }
    let largest_bounded = per_eps
        .iter()
        .filter(|o| o.bounded)
        .map(|o| o.eps)
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
    let report = SweepReport {
        per_eps,
        largest_bounded,
    };
    let mut text = String::from(
        "eps,status,sup_ratio,h1_initial,h1_sup,gradh_h1_integral,tail_fraction,bounded\n",
    );
    for o in &report.per_eps {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            o.eps,
            match o.status {
                RunStatus::Clean => "clean".to_string(),
                RunStatus::BlowUp { t } => format!("blowup@{t}"),
            },
            o.sup_ratio,
            o.h1_initial,
            o.h1_sup,
            o.gradh_h1_integral,
            o.tail_fraction,
            o.bounded
        ));
    }
    write_file(&out_dir.join("sweep.csv"), text.as_bytes())?;
    Ok(report)
}

/// Build a rayon pool honoring the `MMP_THREADS` cap, when set.
pub fn thread_pool_from_env() -> Option<rayon::ThreadPool> {
    let n: usize = std::env::var("MMP_THREADS").ok()?.parse().ok()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .ok()
}
