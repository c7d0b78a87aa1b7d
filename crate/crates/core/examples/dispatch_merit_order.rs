// Dispatches balancing energy for a few imbalance levels and prints the
// activated bids, the mFRR gating flags and the activation cost.

use std::error::Error;

use chrono::{TimeZone, Utc};
use imbalance_sim::dispatch::{dispatch_minute, DispatchTarget};
use imbalance_sim::market_data::{Bid, BidLadder, Direction, Product};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let ladder = BidLadder::new(
        Utc.with_ymd_and_hms(2023, 3, 1, 12, 0, 0).unwrap(),
        vec![
            Bid::new("afrr-up-1", Product::Afrr, Direction::Up, 95.0, 60.0),
            Bid::new("afrr-up-2", Product::Afrr, Direction::Up, 130.0, 60.0),
            Bid::new("mfrr-up-1", Product::Mfrr, Direction::Up, 240.0, 400.0),
            Bid::new("afrr-down-1", Product::Afrr, Direction::Down, 60.0, 80.0),
            Bid::new("afrr-down-2", Product::Afrr, Direction::Down, 20.0, 80.0),
            Bid::new("mfrr-down-1", Product::Mfrr, Direction::Down, -40.0, 400.0),
        ],
    )?;
    for si in [-50.0, -200.0, 90.0, 300.0, -900.0] {
        let result = dispatch_minute(DispatchTarget::from_imbalance(si)?, &ladder);
        println!(
            "SI {si:>6} MW -> required {:>6} MW, cost {:>8.2} EUR/min, mFRR up {} down {}, unserved {}",
            result.required, result.cost_per_minute, result.z_up, result.z_down, result.unserved
        );
        for (id, volume) in result.per_bid(&ladder) {
            if volume > 0.0 {
                println!("    {id:<12} {volume:>6.1} MW");
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
