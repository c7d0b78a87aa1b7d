#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use imbalance_sim::dispatch::{Activation, DispatchResult};
use imbalance_sim::market_data::{Bid, BidGroup, BidLadder, Direction, Product};
use imbalance_sim::pricing::IspAccumulator;
use proptest::prelude::*;

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
}

/// Prices on a coarse grid so that ties occur.
pub fn price() -> impl Strategy<Value = f64> {
    (-40i32..=100).prop_map(|p| p as f64 * 5.0)
}

pub fn capacity() -> impl Strategy<Value = f64> {
    (1u32..=400).prop_map(|c| c as f64 * 0.5)
}

/// Ladders with up to `max_per_group` bids in every product-direction group.
pub fn ladder(max_per_group: usize) -> impl Strategy<Value = BidLadder> {
    prop::collection::vec(prop::collection::vec((price(), capacity()), 0..=max_per_group), 4).prop_map(
        |groups| {
            let mut bids = Vec::new();
            for (group, entries) in BidGroup::ALL.into_iter().zip(groups) {
                for (i, (p, c)) in entries.into_iter().enumerate() {
                    bids.push(Bid::new(format!("{group:?}{i}"), group.product(), group.direction(), p, c));
                }
            }
            BidLadder::new(t0(), bids).unwrap()
        },
    )
}

/// A ladder together with a target drawn over +/-1.2 times its directional capacity.
pub fn ladder_and_target(max_per_group: usize) -> impl Strategy<Value = (BidLadder, f64)> {
    ladder(max_per_group).prop_flat_map(|l| {
        let up = l.cap(BidGroup::AfrrUp) + l.cap(BidGroup::MfrrUp);
        let down = l.cap(BidGroup::AfrrDown) + l.cap(BidGroup::MfrrDown);
        let range = -1.2 * down.max(1.0)..=1.2 * up.max(1.0);
        (Just(l), range)
    })
}

fn flat_ladder() -> BidLadder {
    BidLadder::new(
        t0(),
        vec![
            Bid::new("u", Product::Afrr, Direction::Up, 100.0, 100.0),
            Bid::new("d", Product::Afrr, Direction::Down, 50.0, 100.0),
        ],
    )
    .unwrap()
}

/// Accumulator after one minute with imbalance `si` and a small aFRR activation.
pub fn acc_at(si: f64, prev: f64, mfrr_share: f64) -> IspAccumulator {
    let afrr = 10.0 * (1.0 - mfrr_share);
    let mfrr = 10.0 * mfrr_share;
    let result = DispatchResult {
        required: afrr + mfrr,
        activations: vec![Activation { group: BidGroup::AfrrUp, rank: 0, price: 100.0, volume: afrr }],
        v_afrr_up: afrr,
        v_afrr_down: 0.0,
        v_mfrr_up: mfrr,
        v_mfrr_down: 0.0,
        z_up: mfrr > 0.0,
        z_down: false,
        marginal_mfrr_up: None,
        marginal_mfrr_down: None,
        cost_per_minute: 0.0,
        unserved: 0.0,
    };
    IspAccumulator::new(prev).update(si, &result, &flat_ladder()).unwrap()
}
