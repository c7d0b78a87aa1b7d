// Generates a synthetic week of system imbalance and bid ladders and prints
// how the imbalance is distributed over the magnitude bins.

use std::error::Error;

use imbalance_sim::market_data::{generate_synthetic, BidGroup, SynthParams};
use imbalance_sim::metrics::{si_bins, SiLevel, SiBins};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (si, ladders) = generate_synthetic(42, 7, &SynthParams::default())?;
    println!("{} minutes, {} bid ladders, first window {}", si.len(), ladders.len(), ladders[0].window_start());
    let bins = si_bins(si.values(), SiLevel::OneMinute)?;
    for (label, share) in SiBins::LABELS.iter().zip(bins.shares()) {
        println!("|SI| {label:>10}: {:5.1}%", 100.0 * share);
    }
    let first = &ladders[0];
    for group in BidGroup::ALL {
        let prices: Vec<String> = first.group(group).iter().map(|b| format!("{:.0}", b.price)).collect();
        println!("{group:?}: {:.0} MW at [{}]", first.cap(group), prices.join(", "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
