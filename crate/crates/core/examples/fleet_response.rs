// Drives a small two-asset fleet with a price trace and prints its setpoint,
// state of charge and remaining cycle budget.

use std::error::Error;

use imbalance_sim::fleet::{build_fleet, step_fleet, FleetConfig, RiskGroup, RiskSplit, Thresholds};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut config = FleetConfig {
        total_capacity: 20.0,
        split: RiskSplit::new(0.5, 0.5, 0.0)?,
        ..FleetConfig::default()
    };
    config.set_thresholds(RiskGroup::RiskNeutral, Thresholds::new(150.0, 40.0)?);
    config.set_thresholds(RiskGroup::Medium, Thresholds::new(250.0, 0.0)?);
    let mut fleet = build_fleet(&config, 10.0)?;

    let trace = [None, None, Some(80.0), Some(180.0), Some(320.0), Some(320.0), Some(20.0), Some(-30.0)];
    println!("{:>4} {:>8} {:>8} {:>17} {:>17}", "min", "price", "V_brp", "soc (MWh)", "cycles left");
    for (t, price) in trace.iter().enumerate() {
        let v = step_fleet(&mut fleet, *price);
        let soc: Vec<String> = fleet.iter().map(|a| format!("{:.3}", a.soc)).collect();
        let left: Vec<String> = fleet.iter().map(|a| format!("{:.3}", a.cycle_budget_remaining)).collect();
        let p = price.map_or("-".to_string(), |p| format!("{p:.0}"));
        println!("{t:>4} {p:>8} {v:>8.1} {:>17} {:>17}", soc.join(" / "), left.join(" / "));
    }
    for a in &fleet {
        println!("{:?}: conservation residual {:.1e} MWh", a.risk_group, a.conservation_residual());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
