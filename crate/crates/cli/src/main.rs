//! `mmp` — experiment drivers for the magneto-micropolar spectral solver.
//!
//! Exit codes: 0 clean, 2 config error, 3 blow-up, 4 i/o error, 1 other.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mmp_core::config::{parse_config, RunConfig};
use mmp_core::diagnostics::linear_fit;
use mmp_core::dynamics::{PhysParams, Stepper};
use mmp_core::error::RunError;
use mmp_core::grid::GridSpec;
use mmp_core::inequality::{suite, SuiteKind};
use mmp_core::init::SpectrumShape;
use mmp_core::mms::mms_convergence;
use mmp_core::reduced_ode::{
    exponent_closed_form, integrate_decay_ode, iterate_exponents, LedgerConfig,
};
use mmp_core::runner::{
    run_decay_study, run_simulation, run_stability_sweep, thread_pool_from_env, RunStatus,
};

#[derive(Parser)]
#[command(name = "mmp", about = "pseudo-spectral magneto-micropolar experiments")]
struct Cli {
    /// Output directory for artifacts (CSV, checkpoints, reports).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to a run configuration document.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configured run, sampling diagnostics to CSV.
    Simulate(ConfigArg),
    /// Run a simulation and fit the algebraic decay exponents.
    DecayStudy {
        #[command(flatten)]
        config: ConfigArg,
        /// Fit window start (defaults to automatic pre-floor selection).
        #[arg(long)]
        t0: Option<f64>,
        /// Fit window end.
        #[arg(long)]
        t1: Option<f64>,
    },
    /// Rerun the base config over an amplitude ladder.
    StabilitySweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated ascending amplitudes.
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<f64>,
    },
    /// Randomized measurement of the anisotropic estimates.
    IneqSuite {
        #[arg(long, value_enum)]
        kind: IneqKind,
        /// Modes per axis of the cubic sample grid.
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Lebesgue exponent for lemma22 (use "inf" for the sup norm).
        #[arg(long, default_value = "inf")]
        q: String,
        /// Smoothness for lemma22.
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long, default_value_t = 2.0)]
        slope: f64,
        #[arg(long, default_value_t = 2.0)]
        k_peak: f64,
    },
    /// Step-halving audit of the discrete energy identity.
    EnergyAudit {
        #[command(flatten)]
        config: ConfigArg,
        /// Coarsest step size.
        #[arg(long, default_value_t = 2e-3)]
        dt0: f64,
        /// Number of halvings below dt0.
        #[arg(long, default_value_t = 3)]
        halvings: usize,
        /// Steps taken at the coarsest level (finer levels scale up).
        #[arg(long, default_value_t = 4)]
        steps: usize,
    },
    /// Temporal-order verification against the manufactured solution.
    MmsConvergence {
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 0.04)]
        base_dt: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 0.4)]
        t_end: f64,
        #[arg(long, default_value_t = 0.7)]
        mu: f64,
        #[arg(long, default_value_t = 1.3)]
        nu: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 1.1)]
        kappa: f64,
        #[arg(long, default_value_t = 0.4)]
        chi: f64,
    },
    /// Scalar decay-ODE ledger and exponent-iteration table.
    OdeLedger {
        #[arg(long, default_value_t = 0.8)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        x0: f64,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Number of exponent iterates to tabulate.
        #[arg(long, default_value_t = 20)]
        iters: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum IneqKind {
    Lemma21a,
    Lemma21b,
    Lemma22,
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = seed {
        cfg.init.seed = seed;
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    if let Some(run) = err.downcast_ref::<RunError>() {
        return match run {
            RunError::Config(_) => ExitCode::from(2),
            RunError::Step(_) => ExitCode::from(3),
            RunError::Io { .. } | RunError::Checkpoint(_) => ExitCode::from(4),
            _ => ExitCode::from(1),
        };
    }
    if err.downcast_ref::<mmp_core::error::ConfigError>().is_some() {
        return ExitCode::from(2);
    }
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> anyhow::Result<ExitCode> {
        match dispatch(&cli) {
            Ok(code) => Ok(code),
            Err(e) => Err(e),
        }
    };
    let result = match thread_pool_from_env() {
        Some(pool) => pool.install(run),
        None => run(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Simulate(cfg_arg) => {
            let cfg = load_config(&cfg_arg.config, cli.seed)?;
            let outcome = run_simulation(&cfg, &cli.out)?;
            println!("series: {}", outcome.series_path.display());
            println!("checkpoint: {}", outcome.checkpoint_path.display());
            match outcome.status {
                RunStatus::Clean => {
                    println!("status: clean ({} samples)", outcome.series.len());
                    Ok(ExitCode::SUCCESS)
                }
                RunStatus::BlowUp { t } => {
                    println!("status: blow-up at t = {t}");
                    Ok(ExitCode::from(3))
                }
            }
        }
        Command::DecayStudy { config, t0, t1 } => {
            let cfg = load_config(&config.config, cli.seed)?;
            let window = match (t0, t1) {
                (Some(a), Some(b)) => Some((*a, *b)),
                (None, None) => None,
                _ => anyhow::bail!("provide both --t0 and --t1 or neither"),
            };
            let study = run_decay_study(&cfg, &cli.out, window)?;
            let report = study.report_text();
            print!("{report}");
            std::fs::write(cli.out.join("decay_report.txt"), report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::StabilitySweep { config, epsilons } => {
            let cfg = load_config(&config.config, cli.seed)?;
            let report = run_stability_sweep(&cfg, &cli.out, epsilons)?;
            for o in &report.per_eps {
                println!(
                    "eps {:>10.3e}  sup/eps {:>8.4}  h1 sup/init {:>8.4}  tail {:>6.3}  bounded {}",
                    o.eps,
                    o.sup_ratio,
                    o.h1_sup / o.h1_initial.max(f64::MIN_POSITIVE),
                    o.tail_fraction,
                    o.bounded
                );
            }
            match report.largest_bounded {
                Some(e) => println!("largest bounded amplitude: {e:e}"),
                None => println!("no bounded amplitude in the tested ladder"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::IneqSuite {
            kind,
            n,
            samples,
            seed,
            q,
            s,
            slope,
            k_peak,
        } => {
            let grid = GridSpec::cubic(*n, 2.0 * std::f64::consts::PI)
                .map_err(|e| anyhow::anyhow!("bad grid: {e}"))?;
            let kind = match kind {
                IneqKind::Lemma21a => SuiteKind::Lemma21A,
                IneqKind::Lemma21b => SuiteKind::Lemma21B,
                IneqKind::Lemma22 => {
                    let q = if q == "inf" {
                        f64::INFINITY
                    } else {
                        q.parse::<f64>()
                            .map_err(|_| anyhow::anyhow!("bad --q value {q}"))?
                    };
                    SuiteKind::Lemma22 { q, s: *s }
                }
            };
            let shape = SpectrumShape {
                slope: *slope,
                k_peak: *k_peak,
            };
            let report = suite(kind, &grid, *samples, cli.seed.unwrap_or(*seed), shape)?;
            println!("{report}");
            std::fs::create_dir_all(&cli.out)?;
            let mut csv = Vec::new();
            report.write_csv(&mut csv)?;
            std::fs::write(cli.out.join("ineq_samples.csv"), csv)?;
            std::fs::write(cli.out.join("ineq_report.txt"), format!("{report}\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::EnergyAudit {
            config,
            dt0,
            halvings,
            steps,
        } => {
            let cfg = load_config(&config.config, cli.seed)?;
            let (grid, params, state0) = mmp_core::runner::initial_state(&cfg)?;
            println!("dt,max_defect,max_residual");
            let mut defects = Vec::new();
            for level in 0..=*halvings {
                let dt = dt0 / f64::powi(2.0, level as i32);
                let n_steps = steps * (1 << level);
                let mut stepper = Stepper::new(&grid, &params);
                let mut s = state0.clone();
                let mut worst_defect = 0.0f64;
                let mut worst_residual = 0.0f64;
                for _ in 0..n_steps {
                    let next = stepper.step(&s, dt)?;
                    let rec = mmp_core::diagnostics::energy_audit(&s, &next, &params, dt)?;
                    worst_defect = worst_defect.max(rec.defect.abs());
                    worst_residual = worst_residual.max(rec.residual.abs());
                    s = next;
                }
                println!("{dt},{worst_defect},{worst_residual}");
                defects.push(worst_defect);
            }
            for pair in defects.windows(2) {
                println!("halving ratio: {}", pair[0] / pair[1]);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::MmsConvergence {
            n,
            base_dt,
            levels,
            t_end,
            mu,
            nu,
            gamma,
            kappa,
            chi,
        } => {
            let grid = GridSpec::cubic(*n, 2.0 * std::f64::consts::PI)
                .map_err(|e| anyhow::anyhow!("bad grid: {e}"))?;
            let params = PhysParams::new(*mu, *nu, *gamma, *kappa, *chi)
                .map_err(|e| anyhow::anyhow!("bad params: {e}"))?;
            let report = mms_convergence(&grid, &params, *base_dt, *levels, *t_end)?;
            println!("dt,error");
            for (dt, err) in &report.levels {
                println!("{dt},{err}");
            }
            println!("observed order: {:.4}", report.observed_order);
            println!("spatial residual: {:.3e}", report.spatial_error);
            Ok(ExitCode::SUCCESS)
        }
        Command::OdeLedger {
            sigma,
            c,
            x0,
            t_end,
            dt,
            iters,
        } => {
            let cfg = LedgerConfig {
                sigma: *sigma,
                c: *c,
                x0: *x0,
                t_end: *t_end,
                dt: *dt,
            };
            let series = integrate_decay_ode(&cfg)?;
            std::fs::create_dir_all(&cli.out)?;
            let mut csv = String::from("t,x\n");
            for (t, x) in &series {
                csv.push_str(&format!("{t},{x}\n"));
            }
            std::fs::write(cli.out.join("ode_series.csv"), csv)?;
            let iterates = iterate_exponents(*sigma, *iters);
            let mut table = String::from("n,a_n,closed_form,effective\n");
            for (i, a) in iterates.iter().enumerate() {
                table.push_str(&format!(
                    "{i},{a},{},{}\n",
                    exponent_closed_form(*sigma, i),
                    mmp_core::reduced_ode::effective_exponent(*sigma, i)
                ));
            }
            std::fs::write(cli.out.join("exponent_table.csv"), &table)?;
            // Late-window slope against the known asymptotics.
            let points: Vec<(f64, f64)> = series.to_vec();
            let tail: Vec<(f64, f64)> = points
                .iter()
                .filter(|(t, _)| *t >= 0.5 * t_end)
                .copied()
                .collect();
            if tail.len() >= 8 {
                let xs: Vec<f64> = tail.iter().map(|(t, _)| (1.0 + t).ln()).collect();
                let ys: Vec<f64> = tail.iter().map(|(_, x)| x.ln()).collect();
                let (slope, _, _) = linear_fit(&xs, &ys);
                println!("late-window slope: {slope:.4} (expect ~ {})", -sigma);
            }
            println!("wrote ode_series.csv and exponent_table.csv");
            Ok(ExitCode::SUCCESS)
        }
    }
}
