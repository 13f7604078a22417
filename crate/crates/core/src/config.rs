//! Experiment configuration: structured text with explicit sections, no
//! positional physics values. Unknown keys are rejected by name; range
//! violations name the offending field.

use serde::{Deserialize, Serialize};

use crate::dynamics::PhysParams;
use crate::error::ConfigError;
use crate::grid::GridSpec;

pub const REQUIRED_SECTIONS: &str = "sigma, [grid], [params], [init], [time], [output]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
}

fn default_dealias() -> f64 {
    GridSpec::DEFAULT_DEALIAS_FRACTION
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::new(
            [self.n1, self.n2, self.n3],
            [self.l1, self.l2, self.l3],
            self.dealias_fraction,
        )
        .map_err(|e| ConfigError::Range {
            field: "grid",
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub chi: f64,
    /// Permit the degenerate `chi = 0` / `kappa = 0` subsystems.
    #[serde(default)]
    pub allow_degenerate: bool,
}

impl ParamsConfig {
    pub fn build(&self) -> Result<PhysParams, ConfigError> {
        let r = if self.allow_degenerate {
            PhysParams::new_with_degenerate_override(
                self.mu, self.nu, self.gamma, self.kappa, self.chi,
            )
        } else {
            PhysParams::new(self.mu, self.nu, self.gamma, self.kappa, self.chi)
        };
        r.map_err(|reason| ConfigError::Range {
            field: "params",
            reason,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub seed: u64,
    pub spectrum_slope: f64,
    pub k_peak: f64,
    pub amp_u: f64,
    pub amp_b: f64,
    pub amp_w: f64,
    #[serde(default)]
    pub horizontal_mean_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub sample_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub series_path: String,
    pub checkpoint_path: String,
    pub checkpoint_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sigma: f64,
    pub grid: GridConfig,
    pub params: ParamsConfig,
    pub init: InitConfig,
    pub time: TimeConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid.build()?;
        self.params.build()?;
        if self.sigma <= 0.0 || self.sigma >= 1.0 || self.sigma.is_nan() {
            return Err(ConfigError::Range {
                field: "sigma",
                reason: format!("must lie in (0, 1), got {}", self.sigma),
            });
        }
        if self.time.t_end < 0.0 || self.time.t_end.is_nan() {
            return Err(ConfigError::Range {
                field: "time.t_end",
                reason: format!("must be nonnegative, got {}", self.time.t_end),
            });
        }
        if self.time.dt_max <= 0.0 || self.time.dt_max.is_nan() {
            return Err(ConfigError::Range {
                field: "time.dt_max",
                reason: format!("must be positive, got {}", self.time.dt_max),
            });
        }
        if self.time.cfl_safety <= 0.0 || self.time.cfl_safety > 1.0 || self.time.cfl_safety.is_nan() {
            return Err(ConfigError::Range {
                field: "time.cfl_safety",
                reason: format!("must lie in (0, 1], got {}", self.time.cfl_safety),
            });
        }
        if self.time.sample_interval <= 0.0 || self.time.sample_interval.is_nan() {
            return Err(ConfigError::Range {
                field: "time.sample_interval",
                reason: format!("must be positive, got {}", self.time.sample_interval),
            });
        }
        for (name, v) in [
            ("init.amp_u", self.init.amp_u),
            ("init.amp_b", self.init.amp_b),
            ("init.amp_w", self.init.amp_w),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(ConfigError::Range {
                    field: match name {
                        "init.amp_u" => "init.amp_u",
                        "init.amp_b" => "init.amp_b",
                        _ => "init.amp_w",
                    },
                    reason: format!("must be nonnegative, got {v}"),
                });
            }
        }
        if self.init.k_peak <= 0.0 || self.init.k_peak.is_nan() {
            return Err(ConfigError::Range {
                field: "init.k_peak",
                reason: format!("must be positive, got {}", self.init.k_peak),
            });
        }
        if self.output.series_path.is_empty() {
            return Err(ConfigError::Range {
                field: "output.series_path",
                reason: "must be nonempty".into(),
            });
        }
        if self.output.checkpoint_path.is_empty() {
            return Err(ConfigError::Range {
                field: "output.checkpoint_path",
                reason: "must be nonempty".into(),
            });
        }
        if self.output.checkpoint_interval <= 0.0 || self.output.checkpoint_interval.is_nan() {
            return Err(ConfigError::Range {
                field: "output.checkpoint_interval",
                reason: format!("must be positive, got {}", self.output.checkpoint_interval),
            });
        }
        Ok(())
    }

    /// Advisory gate from the decay theory at its smallest admissible
    /// regularity: `sigma` outside `(3/4, 1)` still computes, with a warning.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.sigma <= 0.75 {
            out.push(format!(
                "sigma = {} lies outside the admissible window (3/4, 1); decay targets assume it",
                self.sigma
            ));
        }
        out
    }
}

/// Parse a config document, rejecting unknown keys and bad ranges.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    if text.trim().is_empty() {
        return Err(ConfigError::Empty(REQUIRED_SECTIONS));
    }
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Emit a config document that parses back to an equal value.
pub fn emit_config(cfg: &RunConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}
