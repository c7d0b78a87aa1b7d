//! Threshold calibration per risk group.
//!
//! Every candidate price band is replayed on a historical minute-level price
//! series with a unit asset. The daily profits give an expected profit and a
//! tail-risk figure per candidate; both are min-max normalized across the
//! grid and the band minimizing `w * risk - (1 - w) * mean` is selected.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{BessAsset, RiskGroup, Thresholds};
use crate::market_data::{PriceSeries, ISP_MINUTES, MINUTE_HOURS};

/// Tail level of the risk measure.
pub const CVAR_LEVEL: f64 = 0.05;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("price series is empty")]
    EmptySeries,
    #[error("need at least one profit sample, got {0}")]
    TooFewSamples(usize),
    #[error("tail level must lie in (0, 1], got {0}")]
    InvalidLevel(f64),
    #[error("risk weight must lie in [0, 1], got {0}")]
    InvalidWeight(f64),
    #[error("grid has {0} candidate pairs; at least 2 are needed for normalization")]
    DegenerateGrid(usize),
    #[error("settlement valuation needs a series of whole settlement periods starting on a boundary")]
    MisalignedSeries,
    #[error("thresholds file: {0}")]
    Thresholds(String),
}

/// Price at which replayed trades are valued.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valuation {
    /// The minute-level price of the trading minute.
    #[default]
    Minute,
    /// The settlement price of the trading minute's period (its last minute).
    Settlement,
}

/// Reading of the tail term of the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvarReading {
    /// Negated mean of the worst tail: large when tail losses are large.
    #[default]
    ExpectedShortfall,
    /// Mean of the worst tail itself.
    TailMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitSample {
    pub period: NaiveDate,
    pub profit: f64,
    pub active_minutes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub upper_candidates: Vec<f64>,
    pub lower_candidates: Vec<f64>,
    /// Risk weight used by [`calibrate`].
    pub w: f64,
    pub level: f64,
    pub valuation: Valuation,
    pub reading: CvarReading,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        let steps = CalibrationGrid::range(-200.0, 600.0, 25.0);
        CalibrationGrid {
            upper_candidates: steps.clone(),
            lower_candidates: steps,
            w: 0.0,
            level: CVAR_LEVEL,
            valuation: Valuation::Minute,
            reading: CvarReading::ExpectedShortfall,
        }
    }
}

impl CalibrationGrid {
    /// Evenly spaced candidates from `min` to `max` inclusive.
    pub fn range(min: f64, max: f64, step: f64) -> Vec<f64> {
        if !(step > 0.0) || max < min {
            return vec![min];
        }
        let n = ((max - min) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| min + step * i as f64).collect()
    }

    /// Candidate pairs with `upper >= lower`, upper-major order.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.upper_candidates
            .iter()
            .flat_map(|&u| {
                self.lower_candidates
                    .iter()
                    .filter(move |&&l| u >= l)
                    .map(move |&l| (u, l))
            })
            .collect()
    }
}

/// Replays the controller with band `(upper, lower)` on `prices` and returns
/// one gross profit sample per calendar day. The asset starts from the
/// template's state of charge; its cycle budget resets at midnight.
pub fn replay_profit(
    prices: &PriceSeries,
    upper: f64,
    lower: f64,
    asset: &BessAsset,
    valuation: Valuation,
) -> Result<Vec<ProfitSample>, CalibrationError> {
    let layout = SeriesLayout::new(prices, valuation)?;
    Ok(replay_with_layout(prices, &layout, upper, lower, asset))
}

/// Day boundaries and valuation prices, shared by all candidates.
struct SeriesLayout {
    day_starts: Vec<(usize, NaiveDate)>,
    valuation_prices: Vec<f64>,
}

impl SeriesLayout {
    fn new(prices: &PriceSeries, valuation: Valuation) -> Result<Self, CalibrationError> {
        if prices.is_empty() {
            return Err(CalibrationError::EmptySeries);
        }
        let mut day_starts = vec![(0, prices.start().date_naive())];
        for i in 1..prices.len() {
            let ts = prices.timestamp(i);
            if ts.hour() == 0 && ts.minute() == 0 {
                day_starts.push((i, ts.date_naive()));
            }
        }
        let values = prices.values();
        let valuation_prices = match valuation {
            Valuation::Minute => values.to_vec(),
            Valuation::Settlement => {
                if !crate::market_data::is_isp_aligned(prices.start())
                    || !values.len().is_multiple_of(ISP_MINUTES)
                {
                    return Err(CalibrationError::MisalignedSeries);
                }
                values
                    .chunks(ISP_MINUTES)
                    .flat_map(|isp| std::iter::repeat_n(isp[ISP_MINUTES - 1], ISP_MINUTES))
                    .collect()
            }
        };
        Ok(SeriesLayout {
            day_starts,
            valuation_prices,
        })
    }
}

fn replay_with_layout(
    prices: &PriceSeries,
    layout: &SeriesLayout,
    upper: f64,
    lower: f64,
    template: &BessAsset,
) -> Vec<ProfitSample> {
    let mut asset = template.clone();
    asset.thresholds = Thresholds { upper, lower };
    asset.start_new_day();
    let values = prices.values();
    let mut samples = Vec::with_capacity(layout.day_starts.len());
    for (d, &(start, period)) in layout.day_starts.iter().enumerate() {
        let end = layout.day_starts.get(d + 1).map_or(values.len(), |&(i, _)| i);
        if d > 0 {
            asset.start_new_day();
        }
        let mut profit = 0.0;
        let mut active_minutes = 0;
        for (&price, &value_at) in values[start..end].iter().zip(&layout.valuation_prices[start..end]) {
            let setpoint = asset.step(Some(price));
            if setpoint != 0.0 {
                active_minutes += 1;
                profit += setpoint * MINUTE_HOURS * value_at;
            }
        }
        samples.push(ProfitSample {
            period,
            profit,
            active_minutes,
        });
    }
    samples
}

/// Number of samples in the tail at `level`: `ceil(level * n)`, at least one.
pub fn tail_count(n: usize, level: f64) -> usize {
    (((level * n as f64) - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// Tail risk of raw values under the given reading.
pub fn cvar_of(values: &[f64], level: f64, reading: CvarReading) -> Result<f64, CalibrationError> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(CalibrationError::InvalidLevel(level));
    }
    if values.is_empty() {
        return Err(CalibrationError::TooFewSamples(0));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = tail_count(sorted.len(), level);
    let tail_mean = sorted[..k].iter().sum::<f64>() / k as f64;
    Ok(match reading {
        CvarReading::ExpectedShortfall => -tail_mean,
        CvarReading::TailMean => tail_mean,
    })
}

/// Expected shortfall of the profit samples: the negated mean of the worst
/// `ceil(level * n)` samples.
pub fn cvar(samples: &[ProfitSample], level: f64) -> Result<f64, CalibrationError> {
    let values: Vec<f64> = samples.iter().map(|s| s.profit).collect();
    cvar_of(&values, level, CvarReading::ExpectedShortfall)
}

/// Mean profit and tail risk of one candidate band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub upper: f64,
    pub lower: f64,
    pub mean_profit: f64,
    pub cvar: f64,
}

impl CandidateScore {
    pub fn from_samples(
        upper: f64,
        lower: f64,
        samples: &[f64],
        level: f64,
        reading: CvarReading,
    ) -> Result<Self, CalibrationError> {
        let cvar = cvar_of(samples, level, reading)?;
        let mean_profit = samples.iter().sum::<f64>() / samples.len() as f64;
        Ok(CandidateScore {
            upper,
            lower,
            mean_profit,
            cvar,
        })
    }
}

/// Selected band together with its scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub upper: f64,
    pub lower: f64,
    pub mean_profit: f64,
    pub cvar: f64,
    pub objective: f64,
    /// Every candidate had the same objective; the first one was returned.
    pub degenerate: bool,
}

impl Selection {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            upper: self.upper,
            lower: self.lower,
        }
    }
}

fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    values
        .iter()
        .map(|v| if range > 0.0 { (v - min) / range } else { 0.0 })
        .collect()
}

/// Argmin of `w * risk_norm - (1 - w) * mean_norm` over scored candidates.
/// Ties go to the wider band, then to the earlier candidate.
pub fn select(scores: &[CandidateScore], w: f64) -> Result<Selection, CalibrationError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(CalibrationError::InvalidWeight(w));
    }
    if scores.len() < 2 {
        return Err(CalibrationError::DegenerateGrid(scores.len()));
    }
    let means: Vec<f64> = scores.iter().map(|s| s.mean_profit).collect();
    let risks: Vec<f64> = scores.iter().map(|s| s.cvar).collect();
    let mean_n = min_max_normalize(&means);
    let risk_n = min_max_normalize(&risks);
    let objectives: Vec<f64> = (0..scores.len())
        .map(|i| w * risk_n[i] - (1.0 - w) * mean_n[i])
        .collect();

    let lo = objectives.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = objectives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = hi - lo <= TIE_EPS;
    let mut best = 0;
    if !degenerate {
        for i in 1..scores.len() {
            let better = objectives[i] < objectives[best] - TIE_EPS;
            let tie = (objectives[i] - objectives[best]).abs() <= TIE_EPS;
            let wider = scores[i].upper - scores[i].lower > scores[best].upper - scores[best].lower;
            if better || (tie && wider) {
                best = i;
            }
        }
    }
    let s = scores[best];
    Ok(Selection {
        upper: s.upper,
        lower: s.lower,
        mean_profit: s.mean_profit,
        cvar: s.cvar,
        objective: objectives[best],
        degenerate,
    })
}

/// Scores every candidate pair of the grid on the price series.
pub fn evaluate_grid(
    grid: &CalibrationGrid,
    prices: &PriceSeries,
    asset: &BessAsset,
) -> Result<Vec<CandidateScore>, CalibrationError> {
    let layout = SeriesLayout::new(prices, grid.valuation)?;
    grid.pairs()
        .par_iter()
        .map(|&(upper, lower)| {
            let samples = replay_with_layout(prices, &layout, upper, lower, asset);
            let profits: Vec<f64> = samples.iter().map(|s| s.profit).collect();
            CandidateScore::from_samples(upper, lower, &profits, grid.level, grid.reading)
        })
        .collect()
}

/// Calibrates one band for the grid's risk weight.
pub fn calibrate(
    grid: &CalibrationGrid,
    prices: &PriceSeries,
    asset: &BessAsset,
) -> Result<Selection, CalibrationError> {
    let pairs = grid.pairs().len();
    if pairs < 2 {
        return Err(CalibrationError::DegenerateGrid(pairs));
    }
    select(&evaluate_grid(grid, prices, asset)?, grid.w)
}

/// Calibrates all risk groups from a single evaluation of the grid.
pub fn calibrate_groups(
    grid: &CalibrationGrid,
    prices: &PriceSeries,
    asset: &BessAsset,
) -> Result<BTreeMap<RiskGroup, Selection>, CalibrationError> {
    let pairs = grid.pairs().len();
    if pairs < 2 {
        return Err(CalibrationError::DegenerateGrid(pairs));
    }
    let scores = evaluate_grid(grid, prices, asset)?;
    RiskGroup::ALL
        .into_iter()
        .map(|g| Ok((g, select(&scores, g.risk_weight())?)))
        .collect()
}

const THRESHOLD_HEADER: [&str; 5] = ["risk_group", "upper_eur_mwh", "lower_eur_mwh", "mean_profit", "cvar"];

/// Writes `risk_group,upper_eur_mwh,lower_eur_mwh,mean_profit,cvar`.
pub fn write_thresholds<W: Write>(
    out: W,
    selections: &BTreeMap<RiskGroup, Selection>,
) -> Result<(), CalibrationError> {
    let err = |e: csv::Error| CalibrationError::Thresholds(e.to_string());
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(THRESHOLD_HEADER).map_err(err)?;
    for (group, s) in selections {
        wtr.write_record([
            group.as_str().to_string(),
            s.upper.to_string(),
            s.lower.to_string(),
            s.mean_profit.to_string(),
            s.cvar.to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush()
        .map_err(|e| CalibrationError::Thresholds(e.to_string()))
}

pub fn read_thresholds<R: Read>(input: R) -> Result<BTreeMap<RiskGroup, Thresholds>, CalibrationError> {
    let err = |msg: String| CalibrationError::Thresholds(msg);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?;
    if headers.iter().ne(THRESHOLD_HEADER) {
        return Err(err(format!("expected header `{}`", THRESHOLD_HEADER.join(","))));
    }
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let group: RiskGroup = record[0].parse().map_err(err)?;
        let num = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| err(format!("invalid number `{}`", &record[i])))
        };
        let thresholds = Thresholds::new(num(1)?, num(2)?).map_err(|e| err(e.to_string()))?;
        out.insert(group, thresholds);
    }
    Ok(out)
}

pub fn load_thresholds(path: impl AsRef<Path>) -> Result<BTreeMap<RiskGroup, Thresholds>, CalibrationError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| CalibrationError::Thresholds(format!("{}: {e}", path.display())))?;
    read_thresholds(file)
}
