mod common;

use imbalance_sim::dispatch::{dispatch_minute, dispatch_oracle, DispatchTarget};
use imbalance_sim::market_data::{BidGroup, Direction};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn greedy_matches_oracle((ladder, target) in common::ladder_and_target(3)) {
        let t = DispatchTarget::new(target).unwrap();
        let greedy = dispatch_minute(t, &ladder);
        let exact = dispatch_oracle(t, &ladder).unwrap();
        prop_assert!((greedy.cost_per_minute - exact.cost_per_minute).abs() <= 1e-9,
            "greedy {} oracle {}", greedy.cost_per_minute, exact.cost_per_minute);
        prop_assert!((greedy.unserved - exact.unserved).abs() <= 1e-9);
        for g in BidGroup::ALL {
            prop_assert!((greedy.volume(g) - exact.volume(g)).abs() <= 1e-9 * target.abs().max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn activation_balance_and_bounds((ladder, target) in common::ladder_and_target(3)) {
        let r = dispatch_minute(DispatchTarget::new(target).unwrap(), &ladder);
        prop_assert!((r.net_activation() + r.unserved_signed() - target).abs() <= 1e-9 * target.abs().max(1.0));
        let per_bid = r.per_bid(&ladder);
        for bid in ladder.bids() {
            let v = per_bid.get(bid.id.as_str()).copied().unwrap_or(0.0);
            prop_assert!(v >= 0.0 && v <= bid.capacity);
        }
        for g in BidGroup::ALL {
            let summed: f64 = ladder.group(g).iter().map(|b| per_bid.get(b.id.as_str()).copied().unwrap_or(0.0)).sum();
            prop_assert!((summed - r.volume(g)).abs() <= 1e-9);
        }
        let cap = if target > 0.0 {
            ladder.cap(BidGroup::AfrrUp) + ladder.cap(BidGroup::MfrrUp)
        } else {
            ladder.cap(BidGroup::AfrrDown) + ladder.cap(BidGroup::MfrrDown)
        };
        if r.unserved > 0.0 {
            prop_assert!(target.abs() > cap);
        }
    }

    #[test]
    fn one_directional((ladder, target) in common::ladder_and_target(3)) {
        let r = dispatch_minute(DispatchTarget::new(target).unwrap(), &ladder);
        prop_assert_eq!(r.v_afrr_up * r.v_afrr_down, 0.0);
        prop_assert_eq!(r.v_mfrr_up * r.v_mfrr_down, 0.0);
        if target > 0.0 {
            prop_assert_eq!(r.v_afrr_down + r.v_mfrr_down, 0.0);
        } else {
            prop_assert_eq!(r.v_afrr_up + r.v_mfrr_up, 0.0);
        }
    }

    #[test]
    fn saturation_flags((ladder, target) in common::ladder_and_target(3)) {
        let r = dispatch_minute(DispatchTarget::new(target).unwrap(), &ladder);
        if r.z_up {
            prop_assert_eq!(r.v_afrr_up, ladder.cap(BidGroup::AfrrUp));
        }
        if r.z_down {
            prop_assert_eq!(r.v_afrr_down, ladder.cap(BidGroup::AfrrDown));
        }
        if r.v_mfrr_up > 0.0 {
            prop_assert!(r.z_up);
        }
        if r.v_mfrr_down > 0.0 {
            prop_assert!(r.z_down);
        }
    }

    #[test]
    fn merit_order_fill((ladder, target) in common::ladder_and_target(3)) {
        let r = dispatch_minute(DispatchTarget::new(target).unwrap(), &ladder);
        let per_bid = r.per_bid(&ladder);
        for g in BidGroup::ALL {
            let vols: Vec<(f64, f64)> = ladder.group(g).iter()
                .map(|b| (per_bid.get(b.id.as_str()).copied().unwrap_or(0.0), b.capacity))
                .collect();
            // a bid is used only if every earlier bid is full
            for i in 1..vols.len() {
                if vols[i].0 > 0.0 {
                    prop_assert_eq!(vols[i - 1].0, vols[i - 1].1);
                }
            }
        }
    }

    /// With non-negative upward and non-positive downward prices, serving a
    /// larger imbalance never costs less.
    #[test]
    fn cost_monotone_in_magnitude(ladder in common::ladder(3), a in 0.0..1500.0f64, b in 0.0..1500.0f64, up in any::<bool>()) {
        let sign = if up { 1.0 } else { -1.0 };
        let dir = if up { Direction::Up } else { Direction::Down };
        prop_assume!(ladder.bids().filter(|x| x.direction == dir).all(|x| sign * x.price >= 0.0));
        let (small, large) = if a < b { (a, b) } else { (b, a) };
        let c_small = dispatch_minute(DispatchTarget::new(sign * small).unwrap(), &ladder).cost_per_minute;
        let c_large = dispatch_minute(DispatchTarget::new(sign * large).unwrap(), &ladder).cost_per_minute;
        prop_assert!(c_large >= c_small - 1e-9);
    }
}
