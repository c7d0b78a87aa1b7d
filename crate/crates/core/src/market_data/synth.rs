//! Deterministic synthetic imbalance and bid data.

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    Bid, BidGroup, BidLadder, DataError, Result, SystemImbalanceSeries, ISP_MINUTES,
};

/// Parameters of the synthetic generator.
///
/// The imbalance is a mean-reverting walk sampled every minute:
/// `x[t+1] = x[t] + reversion * (mean - x[t]) + volatility * N(0, 1)`,
/// observed with independent minute noise `si[t] = x[t] + noise * N(0, 1)`.
/// Bid ladders are regenerated every settlement period with evenly split
/// capacities and prices stepping away from a base price in merit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub si_mean: f64,
    pub si_reversion: f64,
    pub si_volatility: f64,
    /// Standard deviation of the independent minute-level noise (MW).
    pub si_noise: f64,
    pub afrr_up_capacity: f64,
    pub afrr_down_capacity: f64,
    pub mfrr_up_capacity: f64,
    pub mfrr_down_capacity: f64,
    pub afrr_steps: usize,
    pub mfrr_steps: usize,
    pub afrr_up_price: f64,
    pub afrr_down_price: f64,
    pub mfrr_up_price: f64,
    pub mfrr_down_price: f64,
    pub afrr_price_step: f64,
    pub mfrr_price_step: f64,
    /// Uniform per-bid price noise amplitude (EUR/MWh).
    pub price_noise: f64,
    /// Standard deviation of a per-day shift applied to every bid price.
    pub daily_price_shift: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            si_mean: 0.0,
            si_reversion: 0.03,
            si_volatility: 20.0,
            si_noise: 0.0,
            afrr_up_capacity: 145.0,
            afrr_down_capacity: 145.0,
            mfrr_up_capacity: 800.0,
            mfrr_down_capacity: 800.0,
            afrr_steps: 4,
            mfrr_steps: 5,
            afrr_up_price: 110.0,
            afrr_down_price: 70.0,
            mfrr_up_price: 220.0,
            mfrr_down_price: -20.0,
            afrr_price_step: 25.0,
            mfrr_price_step: 60.0,
            price_noise: 10.0,
            daily_price_shift: 15.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.si_mean,
            self.si_reversion,
            self.si_volatility,
            self.si_noise,
            self.afrr_up_price,
            self.afrr_down_price,
            self.mfrr_up_price,
            self.mfrr_down_price,
            self.afrr_price_step,
            self.mfrr_price_step,
            self.price_noise,
            self.daily_price_shift,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidParams("parameters must be finite".into()));
        }
        if self.si_volatility < 0.0 {
            return Err(DataError::InvalidParams(format!(
                "si_volatility must be non-negative, got {}",
                self.si_volatility
            )));
        }
        if self.si_noise < 0.0 {
            return Err(DataError::InvalidParams(format!(
                "si_noise must be non-negative, got {}",
                self.si_noise
            )));
        }
        if !(0.0..=1.0).contains(&self.si_reversion) {
            return Err(DataError::InvalidParams(format!(
                "si_reversion must lie in [0, 1], got {}",
                self.si_reversion
            )));
        }
        for (name, cap) in [
            ("afrr_up_capacity", self.afrr_up_capacity),
            ("afrr_down_capacity", self.afrr_down_capacity),
            ("mfrr_up_capacity", self.mfrr_up_capacity),
            ("mfrr_down_capacity", self.mfrr_down_capacity),
        ] {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(DataError::InvalidParams(format!(
                    "{name} must be positive, got {cap}"
                )));
            }
        }
        if self.afrr_steps < 2 || self.mfrr_steps < 2 {
            return Err(DataError::InvalidParams(
                "every bid group needs at least 2 price steps".into(),
            ));
        }
        if self.price_noise < 0.0 || self.daily_price_shift < 0.0 || self.afrr_price_step < 0.0
            || self.mfrr_price_step < 0.0
        {
            return Err(DataError::InvalidParams(
                "price steps and noise amplitudes must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Start of every synthetic data set.
pub fn synthetic_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
}

fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

/// Generates `days` days of minute-level imbalance and one bid ladder per
/// settlement period. Output depends only on `seed` and `params`.
pub fn generate_synthetic(
    seed: u64,
    days: usize,
    params: &SynthParams,
) -> Result<(SystemImbalanceSeries, Vec<BidLadder>)> {
    if days == 0 {
        return Err(DataError::InvalidParams("days must be at least 1".into()));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = synthetic_start();
    let minutes = days * 24 * 60;

    let mut si = Vec::with_capacity(minutes);
    let mut x = params.si_mean;
    for _ in 0..minutes {
        let observed: f64 = StandardNormal.sample(&mut rng);
        si.push(round_to(x + params.si_noise * observed, 2));
        let noise: f64 = StandardNormal.sample(&mut rng);
        x += params.si_reversion * (params.si_mean - x) + params.si_volatility * noise;
    }

    let isps_per_day = 24 * 60 / ISP_MINUTES;
    let mut ladders = Vec::with_capacity(days * isps_per_day);
    let mut shift = 0.0;
    for isp in 0..days * isps_per_day {
        if isp % isps_per_day == 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            shift = params.daily_price_shift * z;
        }
        let window = start + chrono::Duration::minutes((isp * ISP_MINUTES) as i64);
        let mut bids = Vec::new();
        for group in BidGroup::ALL {
            let (code, cap, steps, base, step) = match group {
                BidGroup::AfrrUp => ("AU", params.afrr_up_capacity, params.afrr_steps, params.afrr_up_price, params.afrr_price_step),
                BidGroup::AfrrDown => ("AD", params.afrr_down_capacity, params.afrr_steps, params.afrr_down_price, -params.afrr_price_step),
                BidGroup::MfrrUp => ("MU", params.mfrr_up_capacity, params.mfrr_steps, params.mfrr_up_price, params.mfrr_price_step),
                BidGroup::MfrrDown => ("MD", params.mfrr_down_capacity, params.mfrr_steps, params.mfrr_down_price, -params.mfrr_price_step),
            };
            let sign = step.signum();
            for i in 0..steps {
                let noise = params.price_noise * rng.random::<f64>() * if sign == 0.0 { 1.0 } else { sign };
                let price = round_to(base + shift + step * i as f64 + noise, 2);
                let capacity = cap / steps as f64;
                bids.push(Bid::new(
                    format!("{code}{i}"),
                    group.product(),
                    group.direction(),
                    price,
                    capacity,
                ));
            }
        }
        ladders.push(BidLadder::new(window, bids)?);
    }

    Ok((SystemImbalanceSeries::new(start, si)?, ladders))
}
