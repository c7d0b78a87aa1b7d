//! Scenario configuration files.
//!
//! A configuration is a flat TOML document. Generator parameters live in an
//! optional `[synth]` table and threshold calibration settings in an
//! optional `[calibration]` table. Relative paths are resolved against the
//! directory of the configuration file.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `seed` | 1 | seed of every random draw |
//! | `formula` | `current` | price formula of `run` |
//! | `formulas` | all | formulas of `sweep` |
//! | `aggregation` | `ratio_of_sums` | aFRR price aggregation |
//! | `total_capacity_mw` | 0 | fleet power of `run` |
//! | `capacities_mw` | `[0, 100, 200, 400, 600]` | fleet powers of `sweep` |
//! | `split_neutral`, `split_medium`, `split_averse` | 0.2, 0.6, 0.2 | risk group shares |
//! | `delay_min` | 2 | price publication delay |
//! | `c_rate` | 0.5 | power over energy capacity |
//! | `cycle_limit` | 2.0 | full cycles per day |
//! | `efficiency` | 1.0 | round-trip efficiency |
//! | `asset_size_mw` | 10 | power of one asset |
//! | `upper_<group>`, `lower_<group>` | | explicit thresholds |
//! | `thresholds_file` | | thresholds CSV from `calibrate` |
//! | `si_path`, `bids_path` | | input files; synthetic data otherwise |
//! | `synth_days` | 365 | length of synthetic data |
//! | `date_from`, `date_to` | | simulated range, period aligned |
//! | `output_dir` | `out` | destination of output files |

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::calibration::{CalibrationGrid, CvarReading, Valuation, CVAR_LEVEL};
use crate::fleet::{FleetConfig, RiskGroup, RiskSplit, Thresholds};
use crate::market_data::{parse_minute, SynthParams};
use crate::pricing::{AfrrAggregation, FormulaKind, PriceRule};
use crate::simulator::{DataSource, ScenarioConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("split_neutral + split_medium + split_averse must equal 1 (got {neutral} + {medium} + {averse} = {sum})")]
    InvalidSplit {
        neutral: f64,
        medium: f64,
        averse: f64,
        sum: f64,
    },
    #[error("invalid config value: {0}")]
    Invalid(String),
}

fn default_seed() -> u64 {
    1
}

fn default_capacities() -> Vec<f64> {
    vec![0.0, 100.0, 200.0, 400.0, 600.0]
}

fn default_formulas() -> Vec<FormulaKind> {
    FormulaKind::ALL.to_vec()
}

fn default_split() -> [f64; 3] {
    [0.2, 0.6, 0.2]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub formula: FormulaKind,
    #[serde(default = "default_formulas")]
    pub formulas: Vec<FormulaKind>,
    #[serde(default)]
    pub aggregation: AfrrAggregation,
    #[serde(default)]
    pub total_capacity_mw: f64,
    #[serde(default = "default_capacities")]
    pub capacities_mw: Vec<f64>,
    #[serde(default = "split_neutral")]
    pub split_neutral: f64,
    #[serde(default = "split_medium")]
    pub split_medium: f64,
    #[serde(default = "split_averse")]
    pub split_averse: f64,
    #[serde(default = "delay")]
    pub delay_min: usize,
    #[serde(default = "c_rate")]
    pub c_rate: f64,
    #[serde(default = "cycle_limit")]
    pub cycle_limit: f64,
    #[serde(default = "efficiency")]
    pub efficiency: f64,
    #[serde(default = "asset_size")]
    pub asset_size_mw: f64,
    pub upper_neutral: Option<f64>,
    pub lower_neutral: Option<f64>,
    pub upper_medium: Option<f64>,
    pub lower_medium: Option<f64>,
    pub upper_averse: Option<f64>,
    pub lower_averse: Option<f64>,
    pub thresholds_file: Option<PathBuf>,
    pub si_path: Option<PathBuf>,
    pub bids_path: Option<PathBuf>,
    #[serde(default = "synth_days")]
    pub synth_days: usize,
    pub date_from: Option<String>,
    pub date_to: Option<String>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub synth: SynthParams,
    pub calibration: Option<CalibrationBlock>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn split_neutral() -> f64 {
    default_split()[0]
}
fn split_medium() -> f64 {
    default_split()[1]
}
fn split_averse() -> f64 {
    default_split()[2]
}
fn delay() -> usize {
    2
}
fn c_rate() -> f64 {
    0.5
}
fn cycle_limit() -> f64 {
    2.0
}
fn efficiency() -> f64 {
    1.0
}
fn asset_size() -> f64 {
    10.0
}
fn synth_days() -> usize {
    365
}

/// Settings of the `[calibration]` table.
///
/// Without `prices_path`, the training prices are the intermediate prices of
/// a run without fleet on synthetic data drawn with `seed` (by default the
/// scenario seed plus one, so training and evaluation data differ).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationBlock {
    pub prices_path: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default = "synth_days")]
    pub days: usize,
    #[serde(default = "grid_min")]
    pub grid_min: f64,
    #[serde(default = "grid_max")]
    pub grid_max: f64,
    #[serde(default = "grid_step")]
    pub grid_step: f64,
    #[serde(default = "level")]
    pub level: f64,
    #[serde(default)]
    pub valuation: Valuation,
    #[serde(default)]
    pub cvar_reading: CvarReading,
}

fn grid_min() -> f64 {
    -200.0
}
fn grid_max() -> f64 {
    600.0
}
fn grid_step() -> f64 {
    25.0
}
fn level() -> f64 {
    CVAR_LEVEL
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        CalibrationBlock {
            prices_path: None,
            seed: None,
            days: synth_days(),
            grid_min: grid_min(),
            grid_max: grid_max(),
            grid_step: grid_step(),
            level: level(),
            valuation: Valuation::default(),
            cvar_reading: CvarReading::default(),
        }
    }
}

impl CalibrationBlock {
    pub fn grid(&self) -> CalibrationGrid {
        let candidates = CalibrationGrid::range(self.grid_min, self.grid_max, self.grid_step);
        CalibrationGrid {
            upper_candidates: candidates.clone(),
            lower_candidates: candidates,
            w: 0.0,
            level: self.level,
            valuation: self.valuation,
            reading: self.cvar_reading,
        }
    }
}

impl Config {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            message: e.message().to_string(),
        })?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let (neutral, medium, averse) = (self.split_neutral, self.split_medium, self.split_averse);
        let sum = neutral + medium + averse;
        if neutral < 0.0 || medium < 0.0 || averse < 0.0 || (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::InvalidSplit {
                neutral,
                medium,
                averse,
                sum,
            });
        }
        if self.si_path.is_some() != self.bids_path.is_some() {
            return Err(ConfigError::Invalid("si_path and bids_path must be given together".into()));
        }
        if self.formulas.is_empty() || self.capacities_mw.is_empty() {
            return Err(ConfigError::Invalid("formulas and capacities_mw must not be empty".into()));
        }
        if self.capacities_mw.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(ConfigError::Invalid("capacities_mw must be non-negative".into()));
        }
        if self.synth_days == 0 {
            return Err(ConfigError::Invalid("synth_days must be positive".into()));
        }
        self.synth
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[synth] {e}")))?;
        for group in RiskGroup::ALL {
            match self.explicit_thresholds(group) {
                (Some(u), Some(l)) => {
                    Thresholds::new(u, l).map_err(|e| ConfigError::Invalid(format!("{group} thresholds: {e}")))?;
                }
                (None, None) => {}
                _ => {
                    return Err(ConfigError::Invalid(format!(
                        "upper_{group} and lower_{group} must be given together"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Resolves a configured path against the configuration's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn thresholds_path(&self) -> Option<PathBuf> {
        self.thresholds_file.as_deref().map(|p| self.resolve(p))
    }

    pub fn explicit_thresholds(&self, group: RiskGroup) -> (Option<f64>, Option<f64>) {
        match group {
            RiskGroup::RiskNeutral => (self.upper_neutral, self.lower_neutral),
            RiskGroup::Medium => (self.upper_medium, self.lower_medium),
            RiskGroup::RiskAverse => (self.upper_averse, self.lower_averse),
        }
    }

    pub fn split(&self) -> RiskSplit {
        RiskSplit {
            neutral: self.split_neutral,
            medium: self.split_medium,
            averse: self.split_averse,
        }
    }

    pub fn data_source(&self) -> DataSource {
        match (&self.si_path, &self.bids_path) {
            (Some(si), Some(bids)) => DataSource::Files {
                si_path: self.resolve(si),
                bids_path: self.resolve(bids),
            },
            _ => DataSource::Synthetic {
                seed: self.seed,
                days: self.synth_days,
                params: self.synth.clone(),
            },
        }
    }

    /// Fleet parameters with the explicitly configured thresholds.
    pub fn fleet(&self) -> FleetConfig {
        let mut fleet = FleetConfig {
            total_capacity: self.total_capacity_mw,
            split: self.split(),
            cycle_limit_per_day: self.cycle_limit,
            publication_delay: self.delay_min,
            c_rate: self.c_rate,
            round_trip_efficiency: self.efficiency,
            ..FleetConfig::default()
        };
        for group in RiskGroup::ALL {
            if let (Some(u), Some(l)) = self.explicit_thresholds(group) {
                fleet.thresholds[group.index()] = Some(Thresholds { upper: u, lower: l });
            }
        }
        fleet
    }

    pub fn scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let parse = |s: &Option<String>| -> Result<_, ConfigError> {
            s.as_deref()
                .map(|v| parse_minute(v).map_err(|e| ConfigError::Invalid(format!("date range: {e}"))))
                .transpose()
        };
        Ok(ScenarioConfig {
            rule: PriceRule {
                formula: self.formula,
                aggregation: self.aggregation,
            },
            fleet: self.fleet(),
            asset_size: self.asset_size_mw,
            data: self.data_source(),
            date_from: parse(&self.date_from)?,
            date_to: parse(&self.date_to)?,
        })
    }

    /// The calibration settings, defaulted when the table is absent.
    pub fn calibration(&self) -> CalibrationBlock {
        self.calibration.clone().unwrap_or_default()
    }

    pub fn calibration_seed(&self) -> u64 {
        self.calibration
            .as_ref()
            .and_then(|c| c.seed)
            .unwrap_or(self.seed.wrapping_add(1))
    }
}
