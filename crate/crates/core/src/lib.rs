//! Minute-level simulation of imbalance price formulas under the feedback of
//! a price-responsive battery fleet.
//!
//! The crate resolves each minute's system imbalance with a merit-order
//! reserve dispatch, turns the activations into intermediate and settlement
//! prices under one of several formulas, and lets a fleet of storage assets
//! react to the delayed published price.

pub mod calibration;
pub mod cli;
pub mod config;
pub mod dispatch;
pub mod fleet;
pub mod market_data;
pub mod metrics;
pub mod pricing;
pub mod simulator;

pub use calibration::{calibrate, calibrate_groups, CalibrationError, CalibrationGrid, Selection};
pub use config::{Config, ConfigError};
pub use dispatch::{dispatch_minute, DispatchResult, DispatchTarget};
pub use fleet::{BessAsset, FleetConfig, RiskGroup, RiskSplit, Thresholds};
pub use market_data::{BidLadder, DataError, SynthParams, SystemImbalanceSeries};
pub use metrics::{MetricRow, MetricsError};
pub use pricing::{FormulaKind, IspAccumulator, PriceRule};
pub use simulator::{run_capacity_sweep, run_scenario, ScenarioConfig, ScenarioResult, SimError};
