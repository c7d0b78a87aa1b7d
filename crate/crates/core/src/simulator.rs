//! Closed feedback loop between reserve dispatch, price publication and the
//! simulated fleet.
//!
//! Each minute the fleet reacts to the price published `delay` minutes
//! earlier, the net imbalance is resolved with reserves, the settlement
//! period accumulator is updated and a new intermediate price is queued for
//! publication. The last minute of a period fixes its settlement price.

use std::path::PathBuf;

use chrono::{DateTime, Timelike, Utc};
use rayon::prelude::*;
use thiserror::Error;

use crate::dispatch::{dispatch_minute, DispatchError, DispatchSummary, DispatchTarget};
use crate::fleet::{build_fleet, group_capacities, step_fleet_by_group, BessAsset, FleetConfig, FleetError};
use crate::market_data::{
    format_minute, generate_synthetic, is_isp_aligned, load_bid_ladders, load_si_series, BidLadder,
    DataError, MinuteIndex, PriceSeries, SynthParams, SystemImbalanceSeries, ISP_HOURS, ISP_MINUTES, MINUTE_HOURS,
};
use crate::metrics::{scenario_metrics, MetricRow};
use crate::pricing::{FormulaKind, IspAccumulator, PriceRule, PricingError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error("pricing invariant violated: {0}")]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("no bid ladder covers the settlement period starting {0}")]
    MissingLadder(String),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
}

impl SimError {
    /// Whether the error stems from an internal invariant rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, SimError::Pricing(_))
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

/// Where the exogenous inputs come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { si_path: PathBuf, bids_path: PathBuf },
    Synthetic { seed: u64, days: usize, params: SynthParams },
}

impl DataSource {
    pub fn load(&self) -> Result<MarketInputs> {
        let (si, ladders) = match self {
            DataSource::Files { si_path, bids_path } => {
                (load_si_series(si_path)?, load_bid_ladders(bids_path)?)
            }
            DataSource::Synthetic { seed, days, params } => generate_synthetic(*seed, *days, params)?,
        };
        MarketInputs::new(si, ladders)
    }
}

/// Imbalance series with the ladder valid in each settlement period.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInputs {
    si: SystemImbalanceSeries,
    ladders: Vec<BidLadder>,
    ladder_of_isp: Vec<usize>,
}

impl MarketInputs {
    pub fn new(si: SystemImbalanceSeries, mut ladders: Vec<BidLadder>) -> Result<Self> {
        ladders.sort_by_key(|l| l.window_start());
        let mut ladder_of_isp = Vec::with_capacity(si.isp_count());
        let mut cursor = 0;
        for isp in 0..si.isp_count() {
            let start = si.timestamp(isp * ISP_MINUTES);
            let end = si.timestamp((isp + 1) * ISP_MINUTES);
            while cursor < ladders.len() && ladders[cursor].window_end() <= start {
                cursor += 1;
            }
            match ladders.get(cursor) {
                Some(l) if l.window_start() <= start && l.window_end() >= end => ladder_of_isp.push(cursor),
                _ => return Err(SimError::MissingLadder(format_minute(start))),
            }
        }
        Ok(MarketInputs {
            si,
            ladders,
            ladder_of_isp,
        })
    }

    pub fn si(&self) -> &SystemImbalanceSeries {
        &self.si
    }

    pub fn ladders(&self) -> &[BidLadder] {
        &self.ladders
    }

    pub fn isp_count(&self) -> usize {
        self.ladder_of_isp.len()
    }

    pub fn ladder_for_isp(&self, isp: usize) -> &BidLadder {
        &self.ladders[self.ladder_of_isp[isp]]
    }

    /// Restricts the inputs to `[from, to)`; both ends must lie on period boundaries.
    pub fn restrict(&self, from: Option<DateTime<Utc>>, to: Option<DateTime<Utc>>) -> Result<Self> {
        let start = self.si.start();
        let isp_of = |at: DateTime<Utc>| -> Result<usize> {
            if !is_isp_aligned(at) || at < start {
                return Err(SimError::InvalidConfig(format!(
                    "date range bound {} must be a settlement period boundary inside the data",
                    format_minute(at)
                )));
            }
            Ok(((at - start).num_minutes() as usize / ISP_MINUTES).min(self.isp_count()))
        };
        let first = from.map(isp_of).transpose()?.unwrap_or(0);
        let last = to.map(isp_of).transpose()?.unwrap_or(self.isp_count());
        if last <= first {
            return Err(SimError::InvalidConfig("date range is empty".into()));
        }
        MarketInputs::new(self.si.slice_isps(first, last - first), self.ladders.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub rule: PriceRule,
    pub fleet: FleetConfig,
    /// Power of one fleet asset (MW).
    pub asset_size: f64,
    pub data: DataSource,
    pub date_from: Option<DateTime<Utc>>,
    pub date_to: Option<DateTime<Utc>>,
}

impl ScenarioConfig {
    pub fn new(formula: FormulaKind, fleet: FleetConfig, data: DataSource) -> Self {
        ScenarioConfig {
            rule: PriceRule::new(formula),
            fleet,
            asset_size: 10.0,
            data,
            date_from: None,
            date_to: None,
        }
    }

    pub fn load_inputs(&self) -> Result<MarketInputs> {
        let inputs = self.data.load()?;
        if self.date_from.is_some() || self.date_to.is_some() {
            inputs.restrict(self.date_from, self.date_to)
        } else {
            Ok(inputs)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinuteTrace {
    pub minute: MinuteIndex,
    pub si_exogenous: f64,
    pub v_brp: f64,
    pub net_imbalance: f64,
    pub dispatch: DispatchSummary,
    pub intermediate_price: f64,
    pub published_price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IspRecord {
    pub isp: usize,
    pub start: DateTime<Utc>,
    pub settlement_price: f64,
    /// Sum of the per-minute activation costs (EUR).
    pub activation_cost: f64,
    /// Imbalance settlement of the simulated fleet; positive when the operator pays.
    pub brp_payment: f64,
    pub si_avg_15min: f64,
    /// Net energy injected per risk group (MWh).
    pub group_energy: [f64; 3],
    pub minutes: Vec<MinuteTrace>,
}

impl IspRecord {
    pub fn balancing_cost(&self) -> f64 {
        self.activation_cost + self.brp_payment
    }
}

/// Fleet invariant audit of a completed run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FleetAudit {
    pub assets: usize,
    pub soc_violations: usize,
    pub cycle_violations: usize,
    pub max_conservation_residual: f64,
    pub active_minutes: usize,
}

impl FleetAudit {
    pub fn is_clean(&self, tolerance: f64) -> bool {
        self.soc_violations == 0 && self.cycle_violations == 0 && self.max_conservation_residual < tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub capacity_mw: f64,
    pub formula: FormulaKind,
    pub publication_delay: usize,
    pub cycle_limit_per_day: f64,
    pub group_capacity: [f64; 3],
    pub records: Vec<IspRecord>,
    pub audit: FleetAudit,
}

impl ScenarioResult {
    /// Intermediate prices of every simulated minute as a price series.
    pub fn intermediate_prices(&self) -> Result<PriceSeries> {
        let start = self
            .records
            .first()
            .map(|r| r.start)
            .ok_or_else(|| SimError::InvalidConfig("scenario produced no periods".into()))?;
        let values = self
            .records
            .iter()
            .flat_map(|r| r.minutes.iter().map(|m| m.intermediate_price))
            .collect();
        Ok(PriceSeries::new(start, values)?)
    }
}

/// Minute-by-minute closed-loop simulation over prepared inputs.
pub struct Simulation<'a> {
    inputs: &'a MarketInputs,
    rule: PriceRule,
    delay: usize,
    fleet: Vec<BessAsset>,
    group_capacity: [f64; 3],
    acc: IspAccumulator,
    prices: Vec<f64>,
    minute: usize,
    current: Vec<MinuteTrace>,
    activation_cost: f64,
    v_brp_sum: f64,
    group_energy: [f64; 3],
    records: Vec<IspRecord>,
    audit: FleetAudit,
    config: FleetConfig,
}

impl<'a> Simulation<'a> {
    pub fn new(inputs: &'a MarketInputs, config: &ScenarioConfig) -> Result<Self> {
        let delay = config.fleet.publication_delay;
        if delay == 0 {
            return Err(SimError::InvalidConfig(
                "publication delay must be at least one minute".into(),
            ));
        }
        let fleet = build_fleet(&config.fleet, config.asset_size)?;
        Ok(Simulation {
            inputs,
            rule: config.rule,
            delay,
            group_capacity: group_capacities(&fleet),
            audit: FleetAudit {
                assets: fleet.len(),
                ..FleetAudit::default()
            },
            fleet,
            acc: IspAccumulator::new(0.0),
            prices: Vec::with_capacity(inputs.si().len()),
            minute: 0,
            current: Vec::with_capacity(ISP_MINUTES),
            activation_cost: 0.0,
            v_brp_sum: 0.0,
            group_energy: [0.0; 3],
            records: Vec::with_capacity(inputs.isp_count()),
            config: config.fleet.clone(),
        })
    }

    pub fn is_finished(&self) -> bool {
        self.minute >= self.inputs.isp_count() * ISP_MINUTES
    }

    pub fn fleet(&self) -> &[BessAsset] {
        &self.fleet
    }

    pub fn records(&self) -> &[IspRecord] {
        &self.records
    }

    /// Replaces the intermediate price computed at `minute` before it is published.
    pub fn override_price(&mut self, minute: usize, price: f64) {
        self.prices[minute] = price;
    }

    /// Simulates one minute and returns its trace, or `None` once the inputs are exhausted.
    pub fn step_minute(&mut self) -> Result<Option<MinuteTrace>> {
        if self.is_finished() {
            return Ok(None);
        }
        let t = self.minute;
        let index = MinuteIndex::from_absolute(t);
        let ladder = self.inputs.ladder_for_isp(index.isp);
        let ts = self.inputs.si().timestamp(t);
        if t > 0 && ts.hour() == 0 && ts.minute() == 0 {
            self.fleet.iter_mut().for_each(BessAsset::start_new_day);
        }

        let published = t.checked_sub(self.delay).map(|k| self.prices[k]);
        let by_group = step_fleet_by_group(&mut self.fleet, published);
        let v_brp: f64 = by_group.iter().sum();
        self.audit.soc_violations += self.fleet.iter().filter(|a| !a.soc_in_bounds()).count();

        let si = self.inputs.si().values()[t];
        let net = si + v_brp;
        let result = dispatch_minute(DispatchTarget::from_imbalance(net)?, ladder);
        self.acc = self.acc.update(net, &result, ladder)?;
        let price = self.rule.intermediate_price(&self.acc)?;
        self.prices.push(price);

        self.activation_cost += result.cost_per_minute;
        self.v_brp_sum += v_brp;
        for (energy, p) in self.group_energy.iter_mut().zip(by_group) {
            *energy += p * MINUTE_HOURS;
        }
        let trace = MinuteTrace {
            minute: index,
            si_exogenous: si,
            v_brp,
            net_imbalance: net,
            dispatch: result.summary(),
            intermediate_price: price,
            published_price: published,
        };
        self.current.push(trace);
        self.minute += 1;

        if index.is_last() {
            self.close_period(index.isp)?;
        }
        Ok(Some(trace))
    }

    fn close_period(&mut self, isp: usize) -> Result<()> {
        let settlement_price = self.rule.settlement_price(&self.acc)?;
        let mean_v_brp = self.v_brp_sum / ISP_MINUTES as f64;
        let group_energy = std::mem::take(&mut self.group_energy);
        self.records.push(IspRecord {
            isp,
            start: self.inputs.si().timestamp(isp * ISP_MINUTES),
            settlement_price,
            activation_cost: self.activation_cost,
            brp_payment: settlement_price * mean_v_brp * ISP_HOURS,
            si_avg_15min: self.acc.si_cum_avg(),
            group_energy,
            minutes: std::mem::replace(&mut self.current, Vec::with_capacity(ISP_MINUTES)),
        });
        self.acc = self.acc.next_period();
        self.activation_cost = 0.0;
        self.v_brp_sum = 0.0;
        Ok(())
    }

    pub fn run_to_end(mut self) -> Result<ScenarioResult> {
        while self.step_minute()?.is_some() {}
        Ok(self.finish())
    }

    pub fn finish(self) -> ScenarioResult {
        let mut audit = self.audit;
        for asset in &self.fleet {
            if !asset.within_cycle_limit() {
                audit.cycle_violations += 1;
            }
            audit.max_conservation_residual =
                audit.max_conservation_residual.max(asset.conservation_residual().abs());
            audit.active_minutes += asset.ledger.active_minutes;
        }
        ScenarioResult {
            capacity_mw: self.config.total_capacity,
            formula: self.rule.formula,
            publication_delay: self.delay,
            cycle_limit_per_day: self.config.cycle_limit_per_day,
            group_capacity: self.group_capacity,
            records: self.records,
            audit,
        }
    }
}

/// Runs one scenario over already loaded inputs.
pub fn simulate(inputs: &MarketInputs, config: &ScenarioConfig) -> Result<ScenarioResult> {
    Simulation::new(inputs, config)?.run_to_end()
}

/// Loads the configured inputs and runs the scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    let inputs = config.load_inputs()?;
    simulate(&inputs, config)
}

/// One row of `isp_records.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IspRow {
    pub capacity_mw: f64,
    pub formula: FormulaKind,
    pub isp: usize,
    pub settlement_price: f64,
    pub activation_cost: f64,
    pub brp_payment: f64,
    pub si_avg_mw: f64,
}

impl IspRow {
    pub fn rows(result: &ScenarioResult) -> Vec<IspRow> {
        result
            .records
            .iter()
            .map(|r| IspRow {
                capacity_mw: result.capacity_mw,
                formula: result.formula,
                isp: r.isp,
                settlement_price: r.settlement_price,
                activation_cost: r.activation_cost,
                brp_payment: r.brp_payment,
                si_avg_mw: r.si_avg_15min,
            })
            .collect()
    }
}

/// Metrics and records of one (capacity, formula) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub capacity_mw: f64,
    pub formula: FormulaKind,
    pub rows: Vec<IspRow>,
    pub metrics: Vec<MetricRow>,
    pub audit: FleetAudit,
}

impl SweepCell {
    pub fn metric(&self, name: &str, aggregation: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.metric == name && m.aggregation == aggregation)
            .map(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, capacity_mw: f64, formula: FormulaKind) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.capacity_mw == capacity_mw && c.formula == formula)
    }

    pub fn metric_rows(&self) -> impl Iterator<Item = &MetricRow> {
        self.cells.iter().flat_map(|c| c.metrics.iter())
    }

    pub fn isp_rows(&self) -> impl Iterator<Item = &IspRow> {
        self.cells.iter().flat_map(|c| c.rows.iter())
    }
}

/// Runs every (capacity, formula) cell on shared inputs. Cells are
/// independent and evaluated in parallel; the table is ordered by capacity,
/// then by the order of `formulas`.
pub fn sweep_inputs(
    inputs: &MarketInputs,
    base: &ScenarioConfig,
    capacities: &[f64],
    formulas: &[FormulaKind],
) -> Result<SweepTable> {
    if capacities.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimError::InvalidConfig("sweep capacities must be sorted ascending".into()));
    }
    if capacities.is_empty() || formulas.is_empty() {
        return Err(SimError::InvalidConfig("sweep needs at least one capacity and one formula".into()));
    }
    let grid: Vec<(f64, FormulaKind)> = capacities
        .iter()
        .flat_map(|&c| formulas.iter().map(move |&f| (c, f)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(capacity, formula)| {
            let mut config = base.clone();
            config.fleet.total_capacity = capacity;
            config.rule.formula = formula;
            let result = simulate(inputs, &config)?;
            Ok(SweepCell {
                capacity_mw: capacity,
                formula,
                rows: IspRow::rows(&result),
                metrics: scenario_metrics(&result),
                audit: result.audit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { cells })
}

/// Loads the base scenario's inputs once and sweeps capacity and formula.
pub fn run_capacity_sweep(
    base: &ScenarioConfig,
    capacities: &[f64],
    formulas: &[FormulaKind],
) -> Result<SweepTable> {
    let inputs = base.load_inputs()?;
    sweep_inputs(&inputs, base, capacities, formulas)
}
