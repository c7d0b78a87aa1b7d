// Computes the evaluation metrics of one scenario and prints them in the
// long `metrics.csv` format, followed by box statistics of the price error.

use std::error::Error;

use imbalance_sim::fleet::{FleetConfig, RiskGroup, Thresholds};
use imbalance_sim::market_data::SynthParams;
use imbalance_sim::metrics::{rmse_per_isp, scenario_metrics, write_metrics, BoxStats};
use imbalance_sim::pricing::FormulaKind;
use imbalance_sim::simulator::{run_scenario, DataSource, ScenarioConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut fleet = FleetConfig { total_capacity: 100.0, ..FleetConfig::default() };
    for group in RiskGroup::ALL {
        fleet.set_thresholds(group, Thresholds::new(150.0, 25.0)?);
    }
    let data = DataSource::Synthetic { seed: 21, days: 3, params: SynthParams::default() };
    let result = run_scenario(&ScenarioConfig::new(FormulaKind::Mmsd, fleet, data))?;

    let rows = scenario_metrics(&result);
    write_metrics(std::io::stdout().lock(), &["metrics_report example".to_string()], &rows)?;

    let rmse: Vec<f64> = result.records.iter().map(rmse_per_isp).collect();
    let s = BoxStats::from_values(&rmse)?;
    println!(
        "price RMSE per period: median {:.2}, IQR [{:.2}, {:.2}], whiskers [{:.2}, {:.2}], mean {:.2}",
        s.median, s.q1, s.q3, s.whisker_low, s.whisker_high, s.mean
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
