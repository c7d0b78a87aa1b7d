//! Intermediate and settlement imbalance prices.
//!
//! Every minute the clearing information of the settlement period so far is
//! folded into an [`IspAccumulator`]. Price components (aFRR, mFRR, spot) are
//! derived from it and combined by one of three formulas, after which the
//! alpha correction for large imbalances is added.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::DispatchResult;
use crate::market_data::{BidGroup, BidLadder, Direction, ISP_MINUTES};

/// Half-width of the deadband around zero imbalance (MW).
pub const DEADBAND_MW: f64 = 25.0;
/// Imbalance magnitude beyond which the alpha correction applies (MW).
pub const ALPHA_THRESHOLD_MW: f64 = 150.0;

const ALPHA_A: f64 = 0.0;
const ALPHA_B: f64 = 200.0;
const ALPHA_C: f64 = 450.0;
const ALPHA_D: f64 = 65.0;

#[derive(Debug, Error, PartialEq)]
pub enum PricingError {
    #[error("settlement period already holds {ISP_MINUTES} minutes")]
    IspFull,
    #[error("settlement period incomplete: {0} of {ISP_MINUTES} minutes")]
    IspIncomplete(usize),
    #[error("no bids available in the {0:?} direction")]
    NoBidsAvailable(Direction),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormulaKind {
    /// Spot in the deadband, max/min of aFRR and mFRR outside it.
    #[default]
    Current,
    /// Max/min with a smoothed deadband.
    Mmsd,
    /// Volume-weighted average of aFRR and mFRR with dynamic weights.
    Wadw,
}

impl FormulaKind {
    pub const ALL: [FormulaKind; 3] = [FormulaKind::Current, FormulaKind::Mmsd, FormulaKind::Wadw];

    pub fn as_str(self) -> &'static str {
        match self {
            FormulaKind::Current => "current",
            FormulaKind::Mmsd => "mmsd",
            FormulaKind::Wadw => "wadw",
        }
    }
}

impl fmt::Display for FormulaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormulaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "current" => Ok(FormulaKind::Current),
            "mmsd" => Ok(FormulaKind::Mmsd),
            "wadw" => Ok(FormulaKind::Wadw),
            other => Err(format!("unknown formula `{other}` (expected current, mmsd or wadw)")),
        }
    }
}

/// How per-minute activations are aggregated over the settlement period
/// for the aFRR price and the aFRR weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfrrAggregation {
    /// Total value over total volume: a volume-weighted average.
    #[default]
    RatioOfSums,
    /// Sum over minutes of the per-minute ratio.
    SumOfRatios,
}

/// Running clearing state of one settlement period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IspAccumulator {
    minute_count: usize,
    si_sum: f64,
    afrr_value_sum: f64,
    afrr_volume_sum: f64,
    total_volume_sum: f64,
    afrr_price_ratio_sum: f64,
    afrr_price_minutes: usize,
    afrr_weight_ratio_sum: f64,
    mfrr_up_max: Option<f64>,
    mfrr_down_min: Option<f64>,
    voaa_up: Option<f64>,
    voaa_down: Option<f64>,
    prev_isp_si_avg: f64,
}

impl Default for IspAccumulator {
    fn default() -> Self {
        IspAccumulator::new(0.0)
    }
}

impl IspAccumulator {
    pub fn new(prev_isp_si_avg: f64) -> Self {
        IspAccumulator {
            minute_count: 0,
            si_sum: 0.0,
            afrr_value_sum: 0.0,
            afrr_volume_sum: 0.0,
            total_volume_sum: 0.0,
            afrr_price_ratio_sum: 0.0,
            afrr_price_minutes: 0,
            afrr_weight_ratio_sum: 0.0,
            mfrr_up_max: None,
            mfrr_down_min: None,
            voaa_up: None,
            voaa_down: None,
            prev_isp_si_avg,
        }
    }

    /// Folds one cleared minute into the accumulator. `si` is the imbalance
    /// observed by the operator in that minute.
    pub fn update(
        mut self,
        si: f64,
        result: &DispatchResult,
        ladder: &BidLadder,
    ) -> Result<Self, PricingError> {
        if self.minute_count >= ISP_MINUTES {
            return Err(PricingError::IspFull);
        }
        self.minute_count += 1;
        self.si_sum += si;

        let mut afrr_value = 0.0;
        for a in &result.activations {
            if matches!(a.group, BidGroup::AfrrUp | BidGroup::AfrrDown) {
                afrr_value += a.price * a.volume;
            }
        }
        let afrr_volume = result.v_afrr_up + result.v_afrr_down;
        let total_volume = result.total_volume();
        self.afrr_value_sum += afrr_value;
        self.afrr_volume_sum += afrr_volume;
        self.total_volume_sum += total_volume;
        if afrr_volume > 0.0 {
            self.afrr_price_ratio_sum += afrr_value / afrr_volume;
            self.afrr_price_minutes += 1;
        }
        if total_volume > 0.0 {
            self.afrr_weight_ratio_sum += afrr_volume / total_volume;
        }

        if let Some(p) = result.marginal_mfrr_up {
            self.mfrr_up_max = Some(self.mfrr_up_max.map_or(p, |m| m.max(p)));
        }
        if let Some(p) = result.marginal_mfrr_down {
            self.mfrr_down_min = Some(self.mfrr_down_min.map_or(p, |m| m.min(p)));
        }
        self.voaa_up = ladder.value_of_additional_activation(Direction::Up);
        self.voaa_down = ladder.value_of_additional_activation(Direction::Down);
        Ok(self)
    }

    /// Fresh accumulator for the next period, carrying this period's average imbalance.
    pub fn next_period(&self) -> Self {
        IspAccumulator::new(self.si_cum_avg())
    }

    pub fn minute_count(&self) -> usize {
        self.minute_count
    }

    pub fn is_complete(&self) -> bool {
        self.minute_count == ISP_MINUTES
    }

    /// Cumulative average imbalance of the period so far; zero before the first minute.
    pub fn si_cum_avg(&self) -> f64 {
        if self.minute_count == 0 {
            0.0
        } else {
            self.si_sum / self.minute_count as f64
        }
    }

    pub fn afrr_value_sum(&self) -> f64 {
        self.afrr_value_sum
    }

    pub fn afrr_volume_sum(&self) -> f64 {
        self.afrr_volume_sum
    }

    pub fn total_volume_sum(&self) -> f64 {
        self.total_volume_sum
    }

    pub fn mfrr_up_max(&self) -> Option<f64> {
        self.mfrr_up_max
    }

    pub fn mfrr_down_min(&self) -> Option<f64> {
        self.mfrr_down_min
    }

    pub fn voaa_up(&self) -> Option<f64> {
        self.voaa_up
    }

    pub fn voaa_down(&self) -> Option<f64> {
        self.voaa_down
    }

    pub fn prev_isp_si_avg(&self) -> f64 {
        self.prev_isp_si_avg
    }

    /// aFRR share of all activated volume so far, or `None` before any activation.
    pub fn afrr_weight(&self, aggregation: AfrrAggregation) -> Option<f64> {
        if self.total_volume_sum <= 0.0 {
            return None;
        }
        Some(match aggregation {
            AfrrAggregation::RatioOfSums => self.afrr_volume_sum / self.total_volume_sum,
            AfrrAggregation::SumOfRatios => self.afrr_weight_ratio_sum,
        })
    }
}

/// Price components of the settlement period up to the calculation minute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceComponents {
    pub lambda_afrr: f64,
    pub lambda_mfrr: Option<f64>,
    pub lambda_spot: f64,
    pub alpha: f64,
}

/// Components with the aFRR price as a volume-weighted average.
pub fn compute_components(acc: &IspAccumulator) -> Result<PriceComponents, PricingError> {
    compute_components_with(acc, AfrrAggregation::RatioOfSums)
}

pub fn compute_components_with(
    acc: &IspAccumulator,
    aggregation: AfrrAggregation,
) -> Result<PriceComponents, PricingError> {
    let up = acc.voaa_up.ok_or(PricingError::NoBidsAvailable(Direction::Up))?;
    let down = acc.voaa_down.ok_or(PricingError::NoBidsAvailable(Direction::Down))?;
    let lambda_spot = (up + down) / 2.0;
    let lambda_afrr = match aggregation {
        AfrrAggregation::RatioOfSums if acc.afrr_volume_sum > 0.0 => {
            acc.afrr_value_sum / acc.afrr_volume_sum
        }
        AfrrAggregation::SumOfRatios if acc.afrr_price_minutes > 0 => acc.afrr_price_ratio_sum,
        _ => lambda_spot,
    };
    let lambda_mfrr = if acc.si_cum_avg() <= 0.0 {
        acc.mfrr_up_max
    } else {
        acc.mfrr_down_min
    };
    Ok(PriceComponents {
        lambda_afrr,
        lambda_mfrr,
        lambda_spot,
        alpha: 0.0,
    })
}

fn clip_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Alpha correction added to the price for imbalances beyond +/-150 MW.
///
/// The sigmoid argument is the magnitude of the average of the current and
/// previous period imbalance; the sign of the correction follows the sign
/// of the current cumulative imbalance.
pub fn compute_alpha(lambda_b: f64, si_cum_avg: f64, prev_isp_si_avg: f64) -> f64 {
    let cp = if si_cum_avg < -ALPHA_THRESHOLD_MW {
        clip_unit((400.0 - lambda_b) / 200.0)
    } else if si_cum_avg > ALPHA_THRESHOLD_MW {
        -clip_unit((lambda_b + 200.0) / 200.0)
    } else {
        0.0
    };
    if cp == 0.0 {
        return 0.0;
    }
    let x = ((si_cum_avg + prev_isp_si_avg) / 2.0).abs();
    (ALPHA_A + ALPHA_B / (1.0 + ((ALPHA_C - x) / ALPHA_D).exp())) * cp
}

/// Spot weight of the smoothed-deadband formula.
pub fn spot_weight(si: f64) -> f64 {
    (-(si / DEADBAND_MW).powi(4)).exp()
}

fn max_with(a: f64, b: Option<f64>) -> f64 {
    b.map_or(a, |b| a.max(b))
}

fn min_with(a: f64, b: Option<f64>) -> f64 {
    b.map_or(a, |b| a.min(b))
}

/// Formula choice together with the aFRR aggregation reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceRule {
    pub formula: FormulaKind,
    pub aggregation: AfrrAggregation,
}

impl PriceRule {
    pub fn new(formula: FormulaKind) -> Self {
        PriceRule {
            formula,
            aggregation: AfrrAggregation::RatioOfSums,
        }
    }

    pub fn components(&self, acc: &IspAccumulator) -> Result<PriceComponents, PricingError> {
        compute_components_with(acc, self.aggregation)
    }

    /// Formula value before the alpha correction.
    pub fn base_price(&self, comps: &PriceComponents, acc: &IspAccumulator) -> f64 {
        if acc.total_volume_sum <= 0.0 {
            return comps.lambda_spot;
        }
        let si = acc.si_cum_avg();
        match self.formula {
            FormulaKind::Current => {
                if si < -DEADBAND_MW {
                    max_with(comps.lambda_afrr, comps.lambda_mfrr)
                } else if si > DEADBAND_MW {
                    min_with(comps.lambda_afrr, comps.lambda_mfrr)
                } else {
                    comps.lambda_spot
                }
            }
            FormulaKind::Mmsd => {
                let w = spot_weight(si);
                let frr = if si <= 0.0 {
                    max_with(comps.lambda_afrr, comps.lambda_mfrr)
                } else {
                    min_with(comps.lambda_afrr, comps.lambda_mfrr)
                };
                w * comps.lambda_spot + (1.0 - w) * frr
            }
            FormulaKind::Wadw => match (comps.lambda_mfrr, acc.afrr_weight(self.aggregation)) {
                (Some(mfrr), Some(w)) => w * comps.lambda_afrr + (1.0 - w) * mfrr,
                _ => comps.lambda_afrr,
            },
        }
    }

    /// Intermediate price including the alpha correction.
    pub fn price(&self, comps: &PriceComponents, acc: &IspAccumulator) -> f64 {
        let base = self.base_price(comps, acc);
        if acc.total_volume_sum <= 0.0 {
            return base;
        }
        base + compute_alpha(base, acc.si_cum_avg(), acc.prev_isp_si_avg)
    }

    pub fn intermediate_price(&self, acc: &IspAccumulator) -> Result<f64, PricingError> {
        let comps = self.components(acc)?;
        Ok(self.price(&comps, acc))
    }

    pub fn settlement_price(&self, acc: &IspAccumulator) -> Result<f64, PricingError> {
        if !acc.is_complete() {
            return Err(PricingError::IspIncomplete(acc.minute_count));
        }
        self.intermediate_price(acc)
    }
}

/// Price under `formula` (ratio-of-sums aggregation), alpha included.
pub fn price(formula: FormulaKind, comps: &PriceComponents, acc: &IspAccumulator) -> f64 {
    PriceRule::new(formula).price(comps, acc)
}

/// Settlement price of a completed period.
pub fn settlement_price(formula: FormulaKind, acc: &IspAccumulator) -> Result<f64, PricingError> {
    PriceRule::new(formula).settlement_price(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::{dispatch_minute, DispatchTarget};
    use crate::market_data::{Bid, Product};
    use chrono::{TimeZone, Utc};

    fn ladder(bids: Vec<Bid>) -> BidLadder {
        BidLadder::new(Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(), bids).unwrap()
    }

    fn base_bids() -> Vec<Bid> {
        vec![
            Bid::new("au1", Product::Afrr, Direction::Up, 60.0, 60.0),
            Bid::new("ad1", Product::Afrr, Direction::Down, 40.0, 60.0),
        ]
    }

    fn idle(l: &BidLadder) -> DispatchResult {
        dispatch_minute(DispatchTarget::new(0.0).unwrap(), l)
    }

    #[test]
    fn no_activations_leaves_extrema_absent() {
        let l = ladder(base_bids());
        let acc = IspAccumulator::default().update(0.0, &idle(&l), &l).unwrap();
        assert_eq!(acc.afrr_volume_sum(), 0.0);
        assert_eq!(acc.mfrr_up_max(), None);
        assert_eq!(acc.mfrr_down_min(), None);
        let comps = compute_components(&acc).unwrap();
        assert_eq!(comps.lambda_spot, 50.0);
        assert_eq!(comps.lambda_afrr, 50.0);
        assert_eq!(comps.lambda_mfrr, None);
    }

    #[test]
    fn afrr_component_is_volume_weighted() {
        let l1 = ladder(vec![
            Bid::new("a", Product::Afrr, Direction::Up, 50.0, 60.0),
            Bid::new("d", Product::Afrr, Direction::Down, 0.0, 60.0),
        ]);
        let l2 = ladder(vec![
            Bid::new("a", Product::Afrr, Direction::Up, 80.0, 60.0),
            Bid::new("d", Product::Afrr, Direction::Down, 0.0, 60.0),
        ]);
        let r1 = dispatch_minute(DispatchTarget::new(60.0).unwrap(), &l1);
        let r2 = dispatch_minute(DispatchTarget::new(40.0).unwrap(), &l2);
        let acc = IspAccumulator::default()
            .update(-60.0, &r1, &l1)
            .unwrap()
            .update(-40.0, &r2, &l2)
            .unwrap();
        assert_eq!(acc.afrr_value_sum(), 60.0 * 50.0 + 40.0 * 80.0);
        assert_eq!(acc.afrr_volume_sum(), 100.0);
        assert_eq!(compute_components(&acc).unwrap().lambda_afrr, 62.0);
        // literal reading sums the per-minute averages
        let literal = compute_components_with(&acc, AfrrAggregation::SumOfRatios).unwrap();
        assert_eq!(literal.lambda_afrr, 130.0);
    }

    #[test]
    fn mfrr_extrema_are_running() {
        let mut bids = base_bids();
        bids.push(Bid::new("m1", Product::Mfrr, Direction::Up, 120.0, 100.0));
        let l_hi = ladder(bids.clone());
        bids.pop();
        bids.push(Bid::new("m1", Product::Mfrr, Direction::Up, 110.0, 100.0));
        let l_lo = ladder(bids);
        let r_hi = dispatch_minute(DispatchTarget::new(100.0).unwrap(), &l_hi);
        let r_lo = dispatch_minute(DispatchTarget::new(100.0).unwrap(), &l_lo);
        assert_eq!(r_hi.marginal_mfrr_up, Some(120.0));
        let acc = IspAccumulator::default()
            .update(-100.0, &r_hi, &l_hi)
            .unwrap()
            .update(-100.0, &r_lo, &l_lo)
            .unwrap();
        assert_eq!(acc.mfrr_up_max(), Some(120.0));
    }

    #[test]
    fn mfrr_component_uses_min_in_surplus() {
        let mut bids = base_bids();
        bids.push(Bid::new("md1", Product::Mfrr, Direction::Down, -10.0, 100.0));
        bids.push(Bid::new("md2", Product::Mfrr, Direction::Down, -20.0, 100.0));
        let l = ladder(bids);
        // 60 aFRR + 40 on md1, then 60 aFRR + 100 md1 + 10 md2
        let r1 = dispatch_minute(DispatchTarget::from_imbalance(100.0).unwrap(), &l);
        let r2 = dispatch_minute(DispatchTarget::from_imbalance(170.0).unwrap(), &l);
        assert_eq!(r1.marginal_mfrr_down, Some(-10.0));
        assert_eq!(r2.marginal_mfrr_down, Some(-20.0));
        let mut acc = IspAccumulator::default();
        acc = acc.update(30.0, &r1, &l).unwrap();
        acc = acc.update(30.0, &r2, &l).unwrap();
        assert_eq!(acc.si_cum_avg(), 30.0);
        assert_eq!(compute_components(&acc).unwrap().lambda_mfrr, Some(-20.0));
    }

    #[test]
    fn accumulator_rejects_sixteenth_minute() {
        let l = ladder(base_bids());
        let r = idle(&l);
        let mut acc = IspAccumulator::default();
        for _ in 0..ISP_MINUTES {
            acc = acc.update(0.0, &r, &l).unwrap();
        }
        assert_eq!(acc.update(0.0, &r, &l), Err(PricingError::IspFull));
        assert_eq!(acc.next_period().minute_count(), 0);
    }

    #[test]
    fn components_need_bids_in_both_directions() {
        let l = ladder(vec![Bid::new("au", Product::Afrr, Direction::Up, 60.0, 60.0)]);
        let acc = IspAccumulator::default().update(0.0, &idle(&l), &l).unwrap();
        assert_eq!(
            compute_components(&acc),
            Err(PricingError::NoBidsAvailable(Direction::Down))
        );
    }

    #[test]
    fn alpha_cases() {
        assert_eq!(compute_alpha(0.0, -100.0, -100.0), 0.0);
        assert_eq!(compute_alpha(400.0, -200.0, -700.0), 0.0);
        // c - x = 0: sigmoid = b / 2
        assert!((compute_alpha(0.0, -200.0, -700.0) - 100.0).abs() < 1e-12);
        // surplus side pushes the price down
        assert!((compute_alpha(0.0, 200.0, 700.0) + 100.0).abs() < 1e-12);
        assert_eq!(compute_alpha(-200.0, 200.0, 700.0), 0.0);
    }

    #[test]
    fn spot_weight_boundaries() {
        assert_eq!(spot_weight(0.0), 1.0);
        assert!((spot_weight(25.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((spot_weight(-25.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    fn acc_with(si: f64) -> IspAccumulator {
        let l = ladder(vec![
            Bid::new("au", Product::Afrr, Direction::Up, 62.0, 300.0),
            Bid::new("ad", Product::Afrr, Direction::Down, 40.0, 300.0),
        ]);
        let r = dispatch_minute(DispatchTarget::from_imbalance(si).unwrap(), &l);
        IspAccumulator::default().update(si, &r, &l).unwrap()
    }

    #[test]
    fn current_formula_uses_spot_in_deadband() {
        let acc = acc_with(10.0);
        let comps = PriceComponents {
            lambda_afrr: 70.0,
            lambda_mfrr: Some(300.0),
            lambda_spot: 50.0,
            alpha: 0.0,
        };
        assert_eq!(price(FormulaKind::Current, &comps, &acc), 50.0);
    }

    #[test]
    fn mmsd_is_spot_at_zero_imbalance() {
        let mut acc = acc_with(-10.0);
        acc.si_sum = 0.0;
        let comps = PriceComponents {
            lambda_afrr: 70.0,
            lambda_mfrr: Some(300.0),
            lambda_spot: 50.0,
            alpha: 0.0,
        };
        assert_eq!(price(FormulaKind::Mmsd, &comps, &acc), 50.0);
    }

    #[test]
    fn wadw_weights_by_volume() {
        let mut acc = acc_with(-30.0);
        acc.afrr_volume_sum = 300.0;
        acc.total_volume_sum = 400.0;
        let comps = PriceComponents {
            lambda_afrr: 62.0,
            lambda_mfrr: Some(120.0),
            lambda_spot: 50.0,
            alpha: 0.0,
        };
        assert_eq!(price(FormulaKind::Wadw, &comps, &acc), 76.5);
        let no_mfrr = PriceComponents {
            lambda_mfrr: None,
            ..comps
        };
        assert_eq!(price(FormulaKind::Wadw, &no_mfrr, &acc), 62.0);
    }

    #[test]
    fn no_activation_returns_spot_for_every_formula() {
        let l = ladder(base_bids());
        let acc = IspAccumulator::new(-500.0)
            .update(-200.0, &idle(&l), &l)
            .unwrap();
        for formula in FormulaKind::ALL {
            assert_eq!(PriceRule::new(formula).intermediate_price(&acc), Ok(50.0));
        }
    }

    #[test]
    fn settlement_requires_full_period() {
        let l = ladder(base_bids());
        let r = idle(&l);
        let mut acc = IspAccumulator::default();
        for _ in 0..14 {
            acc = acc.update(0.0, &r, &l).unwrap();
        }
        assert_eq!(
            settlement_price(FormulaKind::Current, &acc),
            Err(PricingError::IspIncomplete(14))
        );
        acc = acc.update(0.0, &r, &l).unwrap();
        assert_eq!(
            settlement_price(FormulaKind::Current, &acc),
            PriceRule::new(FormulaKind::Current).intermediate_price(&acc)
        );
    }

    #[test]
    fn expensive_mfrr_bid_drives_settlement() {
        let mut bids = vec![
            Bid::new("au", Product::Afrr, Direction::Up, 90.0, 50.0),
            Bid::new("ad", Product::Afrr, Direction::Down, 40.0, 50.0),
            Bid::new("mu", Product::Mfrr, Direction::Up, 500.0, 200.0),
        ];
        let l = ladder(bids.clone());
        bids.truncate(2);
        let mut acc = IspAccumulator::default();
        for minute in 1..=15 {
            let si = if minute == 3 { -60.0 } else { -40.0 };
            let r = dispatch_minute(DispatchTarget::from_imbalance(si).unwrap(), &l);
            acc = acc.update(si, &r, &l).unwrap();
        }
        assert_eq!(acc.mfrr_up_max(), Some(500.0));
        assert_eq!(settlement_price(FormulaKind::Current, &acc), Ok(500.0));
    }

    #[test]
    fn formula_names_parse() {
        for f in FormulaKind::ALL {
            assert_eq!(f.as_str().parse::<FormulaKind>(), Ok(f));
        }
        assert!("foo".parse::<FormulaKind>().is_err());
    }
}
