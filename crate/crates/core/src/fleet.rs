//! Battery fleet reacting to published imbalance prices with two-threshold
//! bang-bang control, limited by state of charge and a daily cycle budget.
//!
//! Setpoints are in MW, positive when injecting into the grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::MINUTE_HOURS;

#[derive(Debug, Error, PartialEq)]
pub enum FleetError {
    #[error("risk split must be non-negative and sum to 1, got neutral={neutral} medium={medium} averse={averse}")]
    InvalidSplit { neutral: f64, medium: f64, averse: f64 },
    #[error("no thresholds configured for risk group {0}")]
    ThresholdsMissing(RiskGroup),
    #[error("upper threshold {upper} is below lower threshold {lower}")]
    InvertedThresholds { upper: f64, lower: f64 },
    #[error("invalid fleet configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskGroup {
    #[serde(rename = "neutral")]
    RiskNeutral,
    Medium,
    #[serde(rename = "averse")]
    RiskAverse,
}

impl RiskGroup {
    pub const ALL: [RiskGroup; 3] = [RiskGroup::RiskNeutral, RiskGroup::Medium, RiskGroup::RiskAverse];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskGroup::RiskNeutral => "neutral",
            RiskGroup::Medium => "medium",
            RiskGroup::RiskAverse => "averse",
        }
    }

    /// Weight of the tail-risk term in threshold calibration.
    pub fn risk_weight(self) -> f64 {
        match self {
            RiskGroup::RiskNeutral => 0.0,
            RiskGroup::Medium => 0.5,
            RiskGroup::RiskAverse => 0.8,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RiskGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "neutral" | "risk_neutral" => Ok(RiskGroup::RiskNeutral),
            "medium" => Ok(RiskGroup::Medium),
            "averse" | "risk_averse" => Ok(RiskGroup::RiskAverse),
            other => Err(format!("unknown risk group `{other}`")),
        }
    }
}

/// Price band of the bang-bang controller (EUR/MWh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub upper: f64,
    pub lower: f64,
}

impl Thresholds {
    pub fn new(upper: f64, lower: f64) -> Result<Self, FleetError> {
        if !(upper.is_finite() && lower.is_finite()) || upper < lower {
            return Err(FleetError::InvertedThresholds { upper, lower });
        }
        Ok(Thresholds { upper, lower })
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Energy bookkeeping of one asset, used to audit conservation and cycling.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyLedger {
    pub initial_soc: f64,
    /// Energy added to storage, after charging losses (MWh).
    pub stored: CompensatedSum,
    /// Energy taken from storage (MWh).
    pub released: CompensatedSum,
    /// Grid-side energy throughput of the current day (MWh).
    pub day_throughput: f64,
    pub max_day_throughput: f64,
    pub active_minutes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BessAsset {
    pub power_max_discharge: f64,
    pub power_max_charge: f64,
    pub energy_capacity: f64,
    pub soc: f64,
    pub cycle_budget_remaining: f64,
    pub cycle_limit_per_day: f64,
    pub thresholds: Thresholds,
    pub risk_group: RiskGroup,
    pub round_trip_efficiency: f64,
    pub ledger: EnergyLedger,
}

/// Outcome of one controller decision before it is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Step {
    power: f64,
    grid_energy: f64,
    stored: f64,
    released: f64,
    new_soc: f64,
}

impl BessAsset {
    /// Symmetric asset of `power` MW with energy `power / c_rate`, starting half full.
    pub fn new(
        power: f64,
        c_rate: f64,
        thresholds: Thresholds,
        risk_group: RiskGroup,
        round_trip_efficiency: f64,
        cycle_limit_per_day: f64,
    ) -> Result<Self, FleetError> {
        if !(power > 0.0 && power.is_finite()) {
            return Err(FleetError::InvalidConfig(format!("asset power must be positive, got {power}")));
        }
        if !(c_rate > 0.0 && c_rate.is_finite()) {
            return Err(FleetError::InvalidConfig(format!("c-rate must be positive, got {c_rate}")));
        }
        if !(round_trip_efficiency > 0.0 && round_trip_efficiency <= 1.0) {
            return Err(FleetError::InvalidConfig(format!(
                "round-trip efficiency must lie in (0, 1], got {round_trip_efficiency}"
            )));
        }
        if !(cycle_limit_per_day >= 0.0 && cycle_limit_per_day.is_finite()) {
            return Err(FleetError::InvalidConfig(format!(
                "cycle limit must be non-negative, got {cycle_limit_per_day}"
            )));
        }
        let energy_capacity = power / c_rate;
        let soc = energy_capacity / 2.0;
        Ok(BessAsset {
            power_max_discharge: power,
            power_max_charge: power,
            energy_capacity,
            soc,
            cycle_budget_remaining: cycle_limit_per_day,
            cycle_limit_per_day,
            thresholds,
            risk_group,
            round_trip_efficiency,
            ledger: EnergyLedger {
                initial_soc: soc,
                ..EnergyLedger::default()
            },
        })
    }

    /// Grid-side energy still allowed today (MWh).
    pub fn throughput_allowance(&self) -> f64 {
        (self.cycle_budget_remaining * 2.0 * self.energy_capacity).max(0.0)
    }

    fn plan(&self, price: Option<f64>) -> Step {
        let idle = Step {
            power: 0.0,
            grid_energy: 0.0,
            stored: 0.0,
            released: 0.0,
            new_soc: self.soc,
        };
        let Some(price) = price else { return idle };
        if price > self.thresholds.upper {
            let requested = self.power_max_discharge * MINUTE_HOURS;
            let energy = requested.min(self.soc).min(self.throughput_allowance());
            if energy <= 0.0 {
                return idle;
            }
            let new_soc = if energy >= self.soc { 0.0 } else { self.soc - energy };
            Step {
                power: energy / MINUTE_HOURS,
                grid_energy: energy,
                stored: 0.0,
                released: energy,
                new_soc,
            }
        } else if price < self.thresholds.lower {
            let headroom = (self.energy_capacity - self.soc).max(0.0);
            let eta = self.round_trip_efficiency;
            let requested = self.power_max_charge * MINUTE_HOURS;
            let headroom_grid = headroom / eta;
            let grid_energy = requested.min(headroom_grid).min(self.throughput_allowance());
            if grid_energy <= 0.0 {
                return idle;
            }
            let (stored, new_soc) = if grid_energy >= headroom_grid {
                (headroom, self.energy_capacity)
            } else {
                let stored = grid_energy * eta;
                (stored, (self.soc + stored).min(self.energy_capacity))
            };
            Step {
                power: -grid_energy / MINUTE_HOURS,
                grid_energy,
                stored,
                released: 0.0,
                new_soc,
            }
        } else {
            idle
        }
    }

    fn apply(&mut self, step: &Step) {
        if step.grid_energy == 0.0 {
            return;
        }
        self.soc = step.new_soc;
        self.ledger.stored.add(step.stored);
        self.ledger.released.add(step.released);
        self.cycle_budget_remaining = (self.cycle_budget_remaining
            - step.grid_energy / (2.0 * self.energy_capacity))
            .max(0.0);
        self.ledger.day_throughput += step.grid_energy;
        self.ledger.max_day_throughput = self.ledger.max_day_throughput.max(self.ledger.day_throughput);
        self.ledger.active_minutes += 1;
    }

    /// Applies one minute at the given published price and returns the setpoint.
    pub fn step(&mut self, price: Option<f64>) -> f64 {
        let step = self.plan(price);
        self.apply(&step);
        step.power
    }

    /// Restores the daily cycle budget.
    pub fn start_new_day(&mut self) {
        self.cycle_budget_remaining = self.cycle_limit_per_day;
        self.ledger.day_throughput = 0.0;
    }

    /// `soc - initial - (stored - released)`; zero up to rounding.
    pub fn conservation_residual(&self) -> f64 {
        self.soc - self.ledger.initial_soc - (self.ledger.stored.value() - self.ledger.released.value())
    }

    pub fn soc_in_bounds(&self) -> bool {
        self.soc >= 0.0 && self.soc <= self.energy_capacity
    }

    /// Daily throughput never exceeded the cycle limit.
    pub fn within_cycle_limit(&self) -> bool {
        let limit = self.cycle_limit_per_day * 2.0 * self.energy_capacity;
        self.ledger.max_day_throughput <= limit * (1.0 + 1e-12) + 1e-12
    }
}

/// Clipped setpoint of the controller for the latest published price.
pub fn asset_setpoint(asset: &BessAsset, last_published_price: Option<f64>) -> f64 {
    asset.plan(last_published_price).power
}

/// Steps every asset and returns the total response `V_brp` in MW.
pub fn step_fleet(fleet: &mut [BessAsset], last_published_price: Option<f64>) -> f64 {
    step_fleet_by_group(fleet, last_published_price).iter().sum()
}

/// Steps every asset and returns the response per risk group.
pub fn step_fleet_by_group(fleet: &mut [BessAsset], last_published_price: Option<f64>) -> [f64; 3] {
    let mut by_group = [0.0; 3];
    for asset in fleet.iter_mut() {
        by_group[asset.risk_group.index()] += asset.step(last_published_price);
    }
    by_group
}

/// Share of the fleet capacity per risk group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSplit {
    pub neutral: f64,
    pub medium: f64,
    pub averse: f64,
}

impl Default for RiskSplit {
    fn default() -> Self {
        RiskSplit {
            neutral: 0.2,
            medium: 0.6,
            averse: 0.2,
        }
    }
}

impl RiskSplit {
    pub fn new(neutral: f64, medium: f64, averse: f64) -> Result<Self, FleetError> {
        let split = RiskSplit {
            neutral,
            medium,
            averse,
        };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<(), FleetError> {
        let parts = [self.neutral, self.medium, self.averse];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(FleetError::InvalidSplit {
                neutral: self.neutral,
                medium: self.medium,
                averse: self.averse,
            });
        }
        Ok(())
    }

    pub fn fraction(&self, group: RiskGroup) -> f64 {
        match group {
            RiskGroup::RiskNeutral => self.neutral,
            RiskGroup::Medium => self.medium,
            RiskGroup::RiskAverse => self.averse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub total_capacity: f64,
    pub split: RiskSplit,
    pub thresholds: [Option<Thresholds>; 3],
    pub cycle_limit_per_day: f64,
    pub publication_delay: usize,
    pub c_rate: f64,
    pub round_trip_efficiency: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            total_capacity: 0.0,
            split: RiskSplit::default(),
            thresholds: [None; 3],
            cycle_limit_per_day: 2.0,
            publication_delay: 2,
            c_rate: 0.5,
            round_trip_efficiency: 1.0,
        }
    }
}

impl FleetConfig {
    pub fn group_capacity(&self, group: RiskGroup) -> f64 {
        self.total_capacity * self.split.fraction(group)
    }

    pub fn thresholds_for(&self, group: RiskGroup) -> Option<Thresholds> {
        self.thresholds[group.index()]
    }

    pub fn set_thresholds(&mut self, group: RiskGroup, thresholds: Thresholds) {
        self.thresholds[group.index()] = Some(thresholds);
    }
}

/// Splits the fleet capacity into homogeneous assets of `asset_size` MW per
/// risk group. A remainder smaller than one asset enlarges the group's last asset.
pub fn build_fleet(config: &FleetConfig, asset_size: f64) -> Result<Vec<BessAsset>, FleetError> {
    config.split.validate()?;
    if !(config.total_capacity >= 0.0 && config.total_capacity.is_finite()) {
        return Err(FleetError::InvalidConfig(format!(
            "total capacity must be non-negative, got {}",
            config.total_capacity
        )));
    }
    if !(asset_size > 0.0 && asset_size.is_finite()) {
        return Err(FleetError::InvalidConfig(format!("asset size must be positive, got {asset_size}")));
    }
    let mut fleet = Vec::new();
    for group in RiskGroup::ALL {
        let capacity = config.group_capacity(group);
        if capacity <= 1e-9 {
            continue;
        }
        let thresholds = config
            .thresholds_for(group)
            .ok_or(FleetError::ThresholdsMissing(group))?;
        let full = ((capacity + 1e-9) / asset_size).floor() as usize;
        let mut sizes = vec![asset_size; full];
        let remainder = capacity - full as f64 * asset_size;
        if remainder > 1e-9 {
            match sizes.last_mut() {
                Some(last) => *last += remainder,
                None => sizes.push(remainder),
            }
        }
        for size in sizes {
            fleet.push(BessAsset::new(
                size,
                config.c_rate,
                thresholds,
                group,
                config.round_trip_efficiency,
                config.cycle_limit_per_day,
            )?);
        }
    }
    Ok(fleet)
}

/// Installed discharge capacity per risk group (MW).
pub fn group_capacities(fleet: &[BessAsset]) -> [f64; 3] {
    let mut caps = [0.0; 3];
    for asset in fleet {
        caps[asset.risk_group.index()] += asset.power_max_discharge;
    }
    caps
}
