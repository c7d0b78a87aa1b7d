// Calibrates controller thresholds for the three risk groups on the
// open-loop prices of a synthetic month.

use std::error::Error;

use imbalance_sim::calibration::{calibrate_groups, write_thresholds, CalibrationGrid};
use imbalance_sim::fleet::{BessAsset, FleetConfig, RiskGroup, Thresholds};
use imbalance_sim::market_data::SynthParams;
use imbalance_sim::pricing::FormulaKind;
use imbalance_sim::simulator::{run_scenario, DataSource, ScenarioConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let data = DataSource::Synthetic { seed: 8, days: 30, params: SynthParams::default() };
    let baseline = run_scenario(&ScenarioConfig::new(FormulaKind::Current, FleetConfig::default(), data))?;
    let prices = baseline.intermediate_prices()?;

    let grid = CalibrationGrid {
        upper_candidates: CalibrationGrid::range(-100.0, 400.0, 50.0),
        lower_candidates: CalibrationGrid::range(-100.0, 400.0, 50.0),
        ..CalibrationGrid::default()
    };
    let unit = BessAsset::new(1.0, 0.5, Thresholds::new(0.0, 0.0)?, RiskGroup::RiskNeutral, 1.0, 2.0)?;
    let selections = calibrate_groups(&grid, &prices, &unit)?;
    write_thresholds(std::io::stdout().lock(), &selections)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
