mod common;

use imbalance_sim::dispatch::{dispatch_minute, DispatchTarget};
use imbalance_sim::pricing::{
    compute_alpha, spot_weight, FormulaKind, IspAccumulator, PriceComponents, PriceRule,
};
use proptest::prelude::*;

/// Upper bound of |d w_spot / d SI| per unit of component spread.
const MAX_WEIGHT_SLOPE: f64 = 0.061;

fn components() -> impl Strategy<Value = PriceComponents> {
    (-500.0..1000.0f64, prop::option::of(-500.0..1000.0f64), -200.0..400.0f64).prop_map(|(a, m, s)| PriceComponents {
        lambda_afrr: a,
        lambda_mfrr: m,
        lambda_spot: s,
        alpha: 0.0,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn current_is_spot_in_deadband(c in components(), si in -25.0..=25.0f64, prev in -500.0..500.0f64) {
        let acc = common::acc_at(si, prev, 0.3);
        prop_assert_eq!(PriceRule::new(FormulaKind::Current).price(&c, &acc), c.lambda_spot);
    }

    #[test]
    fn mmsd_is_lipschitz_in_si(c in components(), si in -150.0..149.99f64) {
        let rule = PriceRule::new(FormulaKind::Mmsd);
        let h = 0.01;
        let p0 = rule.price(&c, &common::acc_at(si, 0.0, 0.0));
        let p1 = rule.price(&c, &common::acc_at(si + h, 0.0, 0.0));
        let frr_up = c.lambda_mfrr.map_or(c.lambda_afrr, |m| m.max(c.lambda_afrr));
        let frr_down = c.lambda_mfrr.map_or(c.lambda_afrr, |m| m.min(c.lambda_afrr));
        let spread = (frr_up - c.lambda_spot).abs().max((frr_down - c.lambda_spot).abs());
        prop_assert!((p1 - p0).abs() <= MAX_WEIGHT_SLOPE * spread * h + 1e-9,
            "jump {} at {si} with spread {spread}", (p1 - p0).abs());
    }

    #[test]
    fn spot_weight_decreases_with_magnitude(a in 0.0..200.0f64, b in 0.0..200.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(spot_weight(hi) <= spot_weight(lo));
        prop_assert_eq!(spot_weight(-a), spot_weight(a));
    }

    #[test]
    fn wadw_between_components(c in components(), si in -150.0..150.0f64, share in 0.0..1.0f64) {
        let acc = common::acc_at(si, 0.0, share);
        let rule = PriceRule::new(FormulaKind::Wadw);
        let p = rule.base_price(&c, &acc);
        let m = c.lambda_mfrr.unwrap_or(c.lambda_afrr);
        let tol = 1e-9 * (c.lambda_afrr.abs() + m.abs()).max(1.0);
        prop_assert!(p >= c.lambda_afrr.min(m) - tol && p <= c.lambda_afrr.max(m) + tol);
    }

    #[test]
    fn alpha_vanishes_inside_threshold(lambda in -1000.0..1000.0f64, si in -150.0..=150.0f64, prev in -2000.0..2000.0f64) {
        prop_assert_eq!(compute_alpha(lambda, si, prev), 0.0);
    }

    #[test]
    fn alpha_sign_and_bound(lambda in -1000.0..1000.0f64, si in 150.001..2000.0f64, prev in -2000.0..2000.0f64) {
        let short = compute_alpha(lambda, -si, prev);
        let long = compute_alpha(lambda, si, prev);
        prop_assert!((0.0..=200.0).contains(&short));
        prop_assert!((-200.0..=0.0).contains(&long));
    }

    #[test]
    fn current_matches_mmsd_far_from_deadband(c in components(), mag in 100.0..150.0f64, short in any::<bool>()) {
        let si = if short { -mag } else { mag };
        let acc = common::acc_at(si, 0.0, 0.2);
        let current = PriceRule::new(FormulaKind::Current).base_price(&c, &acc);
        let mmsd = PriceRule::new(FormulaKind::Mmsd).base_price(&c, &acc);
        prop_assert!((current - mmsd).abs() <= 1e-9 * current.abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn settlement_is_last_intermediate(
        ladder in common::ladder(3),
        sis in prop::collection::vec(-800.0..800.0f64, 15),
        prev in -300.0..300.0f64,
    ) {
        use imbalance_sim::market_data::Direction;
        prop_assume!(ladder.value_of_additional_activation(Direction::Up).is_some());
        prop_assume!(ladder.value_of_additional_activation(Direction::Down).is_some());
        for formula in FormulaKind::ALL {
            let rule = PriceRule::new(formula);
            let mut acc = IspAccumulator::new(prev);
            let mut last = f64::NAN;
            let mut si_sum = 0.0;
            for &si in &sis {
                let r = dispatch_minute(DispatchTarget::from_imbalance(si).unwrap(), &ladder);
                acc = acc.update(si, &r, &ladder).unwrap();
                si_sum += si;
                prop_assert!(acc.afrr_volume_sum() <= acc.total_volume_sum());
                prop_assert!((acc.si_cum_avg() - si_sum / acc.minute_count() as f64).abs() <= 1e-9);
                last = rule.intermediate_price(&acc).unwrap();
            }
            prop_assert_eq!(rule.settlement_price(&acc).unwrap(), last);
            let next = acc.next_period();
            prop_assert_eq!(next.minute_count(), 0);
            prop_assert_eq!(next.prev_isp_si_avg(), acc.si_cum_avg());
        }
    }
}
