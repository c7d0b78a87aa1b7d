// Walks one settlement period minute by minute and prints the intermediate
// price under each formula. The imbalance starts inside the deadband and
// drifts into a shortage.

use std::error::Error;

use imbalance_sim::dispatch::{dispatch_minute, DispatchTarget};
use imbalance_sim::market_data::{generate_synthetic, SynthParams};
use imbalance_sim::pricing::{FormulaKind, IspAccumulator, PriceRule};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (_, ladders) = generate_synthetic(3, 1, &SynthParams::default())?;
    let ladder = &ladders[40];
    let path: Vec<f64> = (0..15).map(|m| 10.0 - 18.0 * m as f64).collect();
    println!("{:>3} {:>7} {:>9} {:>9} {:>9}", "min", "SI", "current", "mmsd", "wadw");
    let mut acc = IspAccumulator::new(0.0);
    for (m, &si) in path.iter().enumerate() {
        let result = dispatch_minute(DispatchTarget::from_imbalance(si)?, ladder);
        acc = acc.update(si, &result, ladder)?;
        let prices: Vec<f64> = FormulaKind::ALL
            .iter()
            .map(|&f| PriceRule::new(f).intermediate_price(&acc))
            .collect::<Result<_, _>>()?;
        println!("{:>3} {si:>7.1} {:>9.2} {:>9.2} {:>9.2}", m + 1, prices[0], prices[1], prices[2]);
    }
    for f in FormulaKind::ALL {
        println!("settlement {:<8} {:.2} EUR/MWh", f.as_str(), PriceRule::new(f).settlement_price(&acc)?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
