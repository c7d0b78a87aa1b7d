//! Summary statistics of simulation runs and the tabular metrics output.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::fleet::RiskGroup;
use crate::simulator::{IspRecord, IspRow, ScenarioResult};

/// Lower edge of the middle imbalance bin (MW).
pub const SI_BIN_LOW: f64 = 25.0;
/// Upper edge of the middle imbalance bin (MW).
pub const SI_BIN_HIGH: f64 = 150.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("risk group {0} has no installed capacity")]
    EmptyGroup(RiskGroup),
    #[error("no samples")]
    Empty,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Root-mean-square deviation of the intermediate prices of a period from
/// its settlement price.
pub fn rmse_per_isp(record: &IspRecord) -> f64 {
    if record.minutes.is_empty() {
        return 0.0;
    }
    let sq: f64 = record
        .minutes
        .iter()
        .map(|m| (m.intermediate_price - record.settlement_price).powi(2))
        .sum();
    (sq / record.minutes.len() as f64).sqrt()
}

/// Population standard deviation of the net imbalance within a period.
pub fn within_isp_std(record: &IspRecord) -> f64 {
    population_std(record.minutes.iter().map(|m| m.net_imbalance))
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// Time resolution at which imbalance magnitudes are binned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiLevel {
    OneMinute,
    FifteenMinute,
}

impl SiLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            SiLevel::OneMinute => "1min",
            SiLevel::FifteenMinute => "15min",
        }
    }
}

/// Shares of `|SI|` in `[0, 25)`, `[25, 150]` and `(150, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiBins {
    pub level: SiLevel,
    pub below: f64,
    pub middle: f64,
    pub above: f64,
}

impl SiBins {
    pub const LABELS: [&'static str; 3] = ["below_25", "25_to_150", "above_150"];

    pub fn shares(&self) -> [f64; 3] {
        [self.below, self.middle, self.above]
    }
}

pub fn si_bins(values: &[f64], level: SiLevel) -> Result<SiBins, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts = [0usize; 3];
    for v in values {
        let a = v.abs();
        let bin = if a < SI_BIN_LOW {
            0
        } else if a <= SI_BIN_HIGH {
            1
        } else {
            2
        };
        counts[bin] += 1;
    }
    let n = values.len() as f64;
    Ok(SiBins {
        level,
        below: counts[0] as f64 / n,
        middle: counts[1] as f64 / n,
        above: counts[2] as f64 / n,
    })
}

/// Net imbalance of every simulated minute.
pub fn minute_imbalances(result: &ScenarioResult) -> Vec<f64> {
    result
        .records
        .iter()
        .flat_map(|r| r.minutes.iter().map(|m| m.net_imbalance))
        .collect()
}

/// Period averages of the net imbalance.
pub fn isp_imbalances(result: &ScenarioResult) -> Vec<f64> {
    result.records.iter().map(|r| r.si_avg_15min).collect()
}

/// Mean per-period cost of balancing: activation cost plus the fleet's settlement.
pub fn balancing_cost(records: &[IspRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(IspRecord::balancing_cost).sum::<f64>() / records.len() as f64
}

/// Mean per-period profit of a risk group per MW installed.
pub fn fleet_profit(records: &[IspRecord], group: RiskGroup, capacity_mw: f64) -> Result<f64, MetricsError> {
    if capacity_mw <= 0.0 {
        return Err(MetricsError::EmptyGroup(group));
    }
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let revenue: f64 = records
        .iter()
        .map(|r| r.settlement_price * r.group_energy[group.index()])
        .sum();
    Ok(revenue / records.len() as f64 / capacity_mw)
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-plot statistics; whiskers reach the most extreme samples within 1.5 IQR of the quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub std: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let whisker_low = sorted.iter().copied().find(|&v| v >= lo_fence).unwrap_or(q1);
        let whisker_high = sorted.iter().rev().copied().find(|&v| v <= hi_fence).unwrap_or(q3);
        Ok(BoxStats {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile_sorted(&sorted, 0.5),
            q1,
            q3,
            whisker_low,
            whisker_high,
            std: population_std(values.iter().copied()),
        })
    }

    fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("mean", self.mean),
            ("median", self.median),
            ("q1", self.q1),
            ("q3", self.q3),
            ("whisker_low", self.whisker_low),
            ("whisker_high", self.whisker_high),
            ("std", self.std),
        ]
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub capacity_mw: f64,
    pub formula: String,
    pub metric: String,
    pub aggregation: String,
    pub value: f64,
}

/// The full metric set of one run.
pub fn scenario_metrics(result: &ScenarioResult) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    let mut push = |metric: &str, aggregation: &str, value: f64| {
        rows.push(MetricRow {
            capacity_mw: result.capacity_mw,
            formula: result.formula.as_str().to_string(),
            metric: metric.to_string(),
            aggregation: aggregation.to_string(),
            value,
        })
    };
    let records = &result.records;
    if records.is_empty() {
        return rows;
    }

    let settlement: Vec<f64> = records.iter().map(|r| r.settlement_price).collect();
    let rmse: Vec<f64> = records.iter().map(rmse_per_isp).collect();
    let spread: Vec<f64> = records.iter().map(within_isp_std).collect();
    for (name, values) in [
        ("settlement_price", &settlement),
        ("rmse_intermediate", &rmse),
        ("within_isp_std", &spread),
    ] {
        if let Ok(stats) = BoxStats::from_values(values) {
            for (agg, v) in stats.named() {
                push(name, agg, v);
            }
        }
    }

    for (level, values) in [
        (SiLevel::OneMinute, minute_imbalances(result)),
        (SiLevel::FifteenMinute, isp_imbalances(result)),
    ] {
        if let Ok(bins) = si_bins(&values, level) {
            let name = format!("si_share_{}", level.as_str());
            for (label, share) in SiBins::LABELS.iter().zip(bins.shares()) {
                push(&name, label, share);
            }
        }
    }

    let n = records.len() as f64;
    push("balancing_cost", "mean", balancing_cost(records));
    push(
        "activation_cost",
        "mean",
        records.iter().map(|r| r.activation_cost).sum::<f64>() / n,
    );
    push("brp_payment", "mean", records.iter().map(|r| r.brp_payment).sum::<f64>() / n);

    for group in RiskGroup::ALL {
        if let Ok(p) = fleet_profit(records, group, result.group_capacity[group.index()]) {
            push("fleet_profit", group.as_str(), p);
        }
    }
    rows
}

pub const METRICS_HEADER: [&str; 5] = ["capacity_mw", "formula", "metric", "aggregation", "value"];

/// Writes metric rows as CSV after the given comment preamble lines.
pub fn write_metrics<W: Write>(
    mut out: W,
    preamble: &[String],
    rows: impl IntoIterator<Item = impl std::borrow::Borrow<MetricRow>>,
) -> Result<(), MetricsError> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for row in rows {
        let row = row.borrow();
        w.write_record([
            row.capacity_mw.to_string(),
            row.formula.clone(),
            row.metric.clone(),
            row.aggregation.clone(),
            row.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_metrics(
    path: &Path,
    preamble: &[String],
    rows: impl IntoIterator<Item = impl std::borrow::Borrow<MetricRow>>,
) -> Result<(), MetricsError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_metrics(file, preamble, rows)
}

pub const ISP_RECORDS_HEADER: [&str; 7] = [
    "capacity_mw",
    "formula",
    "isp",
    "settlement_price",
    "activation_cost_eur",
    "brp_payment_eur",
    "si_avg_mw",
];

/// Writes per-period records as CSV after the given comment preamble lines.
pub fn write_isp_records<W: Write>(
    mut out: W,
    preamble: &[String],
    rows: impl IntoIterator<Item = impl std::borrow::Borrow<IspRow>>,
) -> Result<(), MetricsError> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ISP_RECORDS_HEADER)?;
    for row in rows {
        let row = row.borrow();
        w.write_record([
            row.capacity_mw.to_string(),
            row.formula.as_str().to_string(),
            row.isp.to_string(),
            row.settlement_price.to_string(),
            row.activation_cost.to_string(),
            row.brp_payment.to_string(),
            row.si_avg_mw.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_isp_records(
    path: &Path,
    preamble: &[String],
    rows: impl IntoIterator<Item = impl std::borrow::Borrow<IspRow>>,
) -> Result<(), MetricsError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_isp_records(file, preamble, rows)
}
