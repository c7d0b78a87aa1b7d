//! Per-minute reserve activation at minimal cost.
//!
//! For a given direction the activation problem has a single integrality
//! (mFRR may only be used once aFRR in that direction is exhausted), which
//! is fully determined by the aFRR fill level. The cost-minimal solution is
//! therefore the merit-order fill of aFRR followed, only on saturation, by
//! the merit-order fill of mFRR. [`dispatch_oracle`] solves the same problem
//! by vertex enumeration and is used to check the greedy solver.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::market_data::{BidGroup, BidLadder, Direction, MINUTE_HOURS};

/// Largest ladder the enumeration oracle accepts.
pub const ORACLE_MAX_BIDS: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum DispatchError {
    #[error("oracle accepts at most {ORACLE_MAX_BIDS} bids, ladder has {0}")]
    InstanceTooLarge(usize),
    #[error("dispatch target must be finite, got {0}")]
    NonFiniteTarget(f64),
}

/// Power the reserves must deliver this minute: `-(SI + V_brp)` in MW.
/// Positive means upward activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchTarget(f64);

impl DispatchTarget {
    pub fn new(required: f64) -> Result<Self, DispatchError> {
        if required.is_finite() {
            Ok(DispatchTarget(required))
        } else {
            Err(DispatchError::NonFiniteTarget(required))
        }
    }

    /// Target resolving a net system imbalance (surplus positive).
    pub fn from_imbalance(net_imbalance: f64) -> Result<Self, DispatchError> {
        Self::new(-net_imbalance)
    }

    pub fn required(self) -> f64 {
        self.0
    }
}

/// Activated volume of one bid. `rank` is the bid's position in its group's
/// merit order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub group: BidGroup,
    pub rank: usize,
    pub price: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub required: f64,
    pub activations: Vec<Activation>,
    pub v_afrr_up: f64,
    pub v_afrr_down: f64,
    pub v_mfrr_up: f64,
    pub v_mfrr_down: f64,
    pub z_up: bool,
    pub z_down: bool,
    /// Highest activated upward mFRR price this minute.
    pub marginal_mfrr_up: Option<f64>,
    /// Lowest activated downward mFRR price this minute.
    pub marginal_mfrr_down: Option<f64>,
    /// Energy-weighted cost of this minute in EUR; downward activations count negatively.
    pub cost_per_minute: f64,
    /// Magnitude of the target that could not be covered (MW).
    pub unserved: f64,
}

impl DispatchResult {
    fn idle(required: f64) -> Self {
        DispatchResult {
            required,
            activations: Vec::new(),
            v_afrr_up: 0.0,
            v_afrr_down: 0.0,
            v_mfrr_up: 0.0,
            v_mfrr_down: 0.0,
            z_up: false,
            z_down: false,
            marginal_mfrr_up: None,
            marginal_mfrr_down: None,
            cost_per_minute: 0.0,
            unserved: 0.0,
        }
    }

    /// Builds the aggregate fields from a set of activations.
    fn from_activations(
        required: f64,
        activations: Vec<Activation>,
        z_up: bool,
        z_down: bool,
        unserved: f64,
    ) -> Self {
        let mut result = DispatchResult::idle(required);
        let mut cost = 0.0;
        for a in &activations {
            match a.group {
                BidGroup::AfrrUp => result.v_afrr_up += a.volume,
                BidGroup::AfrrDown => result.v_afrr_down += a.volume,
                BidGroup::MfrrUp => {
                    result.v_mfrr_up += a.volume;
                    result.marginal_mfrr_up =
                        Some(result.marginal_mfrr_up.map_or(a.price, |m: f64| m.max(a.price)));
                }
                BidGroup::MfrrDown => {
                    result.v_mfrr_down += a.volume;
                    result.marginal_mfrr_down =
                        Some(result.marginal_mfrr_down.map_or(a.price, |m: f64| m.min(a.price)));
                }
            }
            let sign = match a.group.direction() {
                Direction::Up => 1.0,
                Direction::Down => -1.0,
            };
            cost += sign * a.price * a.volume;
        }
        result.cost_per_minute = cost * MINUTE_HOURS;
        result.activations = activations;
        result.z_up = z_up;
        result.z_down = z_down;
        result.unserved = unserved;
        result
    }

    pub fn volume(&self, group: BidGroup) -> f64 {
        match group {
            BidGroup::AfrrUp => self.v_afrr_up,
            BidGroup::AfrrDown => self.v_afrr_down,
            BidGroup::MfrrUp => self.v_mfrr_up,
            BidGroup::MfrrDown => self.v_mfrr_down,
        }
    }

    /// Sum of all activated volumes, both products and directions.
    pub fn total_volume(&self) -> f64 {
        self.v_afrr_up + self.v_afrr_down + self.v_mfrr_up + self.v_mfrr_down
    }

    /// Net upward activation delivered by the reserves.
    pub fn net_activation(&self) -> f64 {
        self.v_afrr_up - self.v_afrr_down + self.v_mfrr_up - self.v_mfrr_down
    }

    /// Unserved power with the sign of the target.
    pub fn unserved_signed(&self) -> f64 {
        self.unserved.copysign(self.required)
    }

    /// Activated volume per bid id.
    pub fn per_bid<'a>(&self, ladder: &'a BidLadder) -> BTreeMap<&'a str, f64> {
        self.activations
            .iter()
            .map(|a| (ladder.group(a.group)[a.rank].id.as_str(), a.volume))
            .collect()
    }

    pub fn summary(&self) -> DispatchSummary {
        DispatchSummary {
            v_afrr_up: self.v_afrr_up,
            v_afrr_down: self.v_afrr_down,
            v_mfrr_up: self.v_mfrr_up,
            v_mfrr_down: self.v_mfrr_down,
            z_up: self.z_up,
            z_down: self.z_down,
            marginal_mfrr_up: self.marginal_mfrr_up,
            marginal_mfrr_down: self.marginal_mfrr_down,
            cost_per_minute: self.cost_per_minute,
            unserved: self.unserved,
        }
    }
}

/// [`DispatchResult`] without per-bid activations, as kept in minute traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchSummary {
    pub v_afrr_up: f64,
    pub v_afrr_down: f64,
    pub v_mfrr_up: f64,
    pub v_mfrr_down: f64,
    pub z_up: bool,
    pub z_down: bool,
    pub marginal_mfrr_up: Option<f64>,
    pub marginal_mfrr_down: Option<f64>,
    pub cost_per_minute: f64,
    pub unserved: f64,
}

fn groups_for(required: f64) -> (BidGroup, BidGroup) {
    if required > 0.0 {
        (BidGroup::AfrrUp, BidGroup::MfrrUp)
    } else {
        (BidGroup::AfrrDown, BidGroup::MfrrDown)
    }
}

/// Fills `group` in merit order; returns whether every bid was fully used.
fn fill(
    ladder: &BidLadder,
    group: BidGroup,
    remaining: &mut f64,
    out: &mut Vec<Activation>,
) -> bool {
    for (rank, bid) in ladder.group(group).iter().enumerate() {
        if *remaining <= 0.0 {
            return false;
        }
        let volume = remaining.min(bid.capacity);
        *remaining -= volume;
        out.push(Activation {
            group,
            rank,
            price: bid.price,
            volume,
        });
        if volume < bid.capacity {
            return false;
        }
    }
    true
}

/// Cost-minimal activation of the ladder for one minute.
pub fn dispatch_minute(target: DispatchTarget, ladder: &BidLadder) -> DispatchResult {
    let required = target.required();
    if required == 0.0 {
        return DispatchResult::idle(required);
    }
    let (afrr, mfrr) = groups_for(required);
    let mut remaining = required.abs();
    let mut activations = Vec::with_capacity(8);
    let saturated = fill(ladder, afrr, &mut remaining, &mut activations);
    if saturated {
        fill(ladder, mfrr, &mut remaining, &mut activations);
    }
    let unserved = remaining.max(0.0);
    let (z_up, z_down) = if required > 0.0 {
        (saturated, false)
    } else {
        (false, saturated)
    };
    DispatchResult::from_activations(required, activations, z_up, z_down, unserved)
}

/// Exact solution by enumerating the vertices of the activation polytope.
///
/// A vertex has every bid at zero or full capacity except at most one
/// fractional bid. Both values of the aFRR saturation flag are covered:
/// vertices using mFRR are admissible only with every aFRR bid of that
/// direction at full capacity.
pub fn dispatch_oracle(
    target: DispatchTarget,
    ladder: &BidLadder,
) -> Result<DispatchResult, DispatchError> {
    if ladder.len() > ORACLE_MAX_BIDS {
        return Err(DispatchError::InstanceTooLarge(ladder.len()));
    }
    let required = target.required();
    if required == 0.0 {
        return Ok(DispatchResult::idle(required));
    }
    let (afrr, mfrr) = groups_for(required);
    let sign = if required > 0.0 { 1.0 } else { -1.0 };
    let need = required.abs();

    // (group, rank, price, capacity, is_afrr)
    let bids: Vec<(BidGroup, usize, f64, f64, bool)> = [afrr, mfrr]
        .into_iter()
        .flat_map(|g| {
            ladder
                .group(g)
                .iter()
                .enumerate()
                .map(move |(rank, b)| (g, rank, b.price, b.capacity, g == afrr))
        })
        .collect();
    let n = bids.len();
    let afrr_mask: u32 = bids
        .iter()
        .enumerate()
        .filter(|(_, b)| b.4)
        .fold(0, |m, (i, _)| m | (1 << i));
    let total: f64 = bids.iter().map(|b| b.3).sum();

    let build = |volumes: &[f64], unserved: f64| {
        let activations: Vec<Activation> = bids
            .iter()
            .zip(volumes)
            .filter(|(_, &v)| v > 0.0)
            .map(|(b, &v)| Activation {
                group: b.0,
                rank: b.1,
                price: b.2,
                volume: v,
            })
            .collect();
        let saturated = bids
            .iter()
            .zip(volumes)
            .filter(|(b, _)| b.4)
            .all(|(b, &v)| v == b.3);
        let (z_up, z_down) = if required > 0.0 {
            (saturated, false)
        } else {
            (false, saturated)
        };
        DispatchResult::from_activations(required, activations, z_up, z_down, unserved)
    };

    if need >= total {
        let volumes: Vec<f64> = bids.iter().map(|b| b.3).collect();
        return Ok(build(&volumes, need - total));
    }

    let tolerance = 1e-9 * need.max(1.0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let base: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| bids[i].3).sum();
        let residual = need - base;
        let candidates = std::iter::once(None).chain((0..n).filter(|i| mask & (1 << i) == 0).map(Some));
        for frac in candidates {
            let mut volumes: Vec<f64> = (0..n)
                .map(|i| if mask & (1 << i) != 0 { bids[i].3 } else { 0.0 })
                .collect();
            match frac {
                None if residual.abs() <= tolerance => {}
                None => continue,
                Some(f) if residual > 0.0 && residual <= bids[f].3 => volumes[f] = residual,
                Some(_) => continue,
            }
            let uses_mfrr = (0..n).any(|i| !bids[i].4 && volumes[i] > 0.0);
            let afrr_full = (0..n)
                .filter(|i| afrr_mask & (1 << i) != 0)
                .all(|i| volumes[i] == bids[i].3);
            if uses_mfrr && !afrr_full {
                continue;
            }
            let cost: f64 = (0..n).map(|i| sign * bids[i].2 * volumes[i]).sum();
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, volumes));
            }
        }
    }
    let (_, volumes) = best.expect("a feasible vertex exists when need < total capacity");
    Ok(build(&volumes, 0.0))
}
