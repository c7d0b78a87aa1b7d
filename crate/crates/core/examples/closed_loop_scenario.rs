// Runs one closed-loop week with a 200 MW fleet and compares its first
// hour against the run without fleet.

use std::error::Error;

use imbalance_sim::fleet::{FleetConfig, RiskGroup, Thresholds};
use imbalance_sim::market_data::SynthParams;
use imbalance_sim::pricing::FormulaKind;
use imbalance_sim::simulator::{simulate, DataSource, ScenarioConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut fleet = FleetConfig { total_capacity: 200.0, ..FleetConfig::default() };
    for (group, upper) in RiskGroup::ALL.into_iter().zip([175.0, 150.0, 125.0]) {
        fleet.set_thresholds(group, Thresholds::new(upper, 25.0)?);
    }
    let data = DataSource::Synthetic { seed: 5, days: 7, params: SynthParams::default() };
    let config = ScenarioConfig::new(FormulaKind::Current, fleet, data);
    let inputs = config.load_inputs()?;
    let with_fleet = simulate(&inputs, &config)?;
    let mut open_loop = config.clone();
    open_loop.fleet.total_capacity = 0.0;
    let without = simulate(&inputs, &open_loop)?;

    println!("{:>4} {:>10} {:>10} {:>10} {:>12} {:>12}", "isp", "SI avg", "SI avg", "V_brp avg", "price", "price");
    println!("{:>4} {:>10} {:>10} {:>10} {:>12} {:>12}", "", "no fleet", "fleet", "", "no fleet", "fleet");
    for (a, b) in without.records.iter().zip(&with_fleet.records).take(4) {
        let v = b.minutes.iter().map(|m| m.v_brp).sum::<f64>() / b.minutes.len() as f64;
        println!(
            "{:>4} {:>10.1} {:>10.1} {v:>10.1} {:>12.2} {:>12.2}",
            a.isp, a.si_avg_15min, b.si_avg_15min, a.settlement_price, b.settlement_price
        );
    }
    let audit = with_fleet.audit;
    println!(
        "{} assets active {} asset-minutes; audit clean: {}",
        audit.assets,
        audit.active_minutes,
        audit.is_clean(1e-9)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
