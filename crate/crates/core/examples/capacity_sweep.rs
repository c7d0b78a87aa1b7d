// Sweeps fleet capacity and price formula over two synthetic weeks and
// prints the mean balancing cost and per-MW profit of each cell.

use std::error::Error;

use imbalance_sim::fleet::{FleetConfig, RiskGroup, Thresholds};
use imbalance_sim::market_data::SynthParams;
use imbalance_sim::pricing::FormulaKind;
use imbalance_sim::simulator::{run_capacity_sweep, DataSource, ScenarioConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut fleet = FleetConfig::default();
    for (group, upper) in RiskGroup::ALL.into_iter().zip([175.0, 150.0, 125.0]) {
        fleet.set_thresholds(group, Thresholds::new(upper, 25.0)?);
    }
    let data = DataSource::Synthetic { seed: 12, days: 14, params: SynthParams::default() };
    let base = ScenarioConfig::new(FormulaKind::Current, fleet, data);
    let table = run_capacity_sweep(&base, &[0.0, 100.0, 200.0, 400.0], &FormulaKind::ALL)?;

    println!("{:>6} {:<8} {:>14} {:>14}", "MW", "formula", "cost EUR/ISP", "medium EUR/MW");
    for cell in &table.cells {
        let cost = cell.metric("balancing_cost", "mean").unwrap_or(f64::NAN);
        let profit = cell.metric("fleet_profit", "medium").map_or("-".into(), |p| format!("{p:.2}"));
        println!("{:>6} {:<8} {cost:>14.1} {profit:>14}", cell.capacity_mw, cell.formula.as_str());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
