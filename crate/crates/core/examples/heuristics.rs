//! The three adaptive heuristics, driven with hand-built histories.
//!
//! Run with `cargo run --example heuristics`.

use tiersim::heuristics::{cloud_heuristic, gateway_heuristic, sensor_heuristic};
use tiersim::{AnomalyTracker, HeuristicParams};

/// A full history of `depth` windows with `anomalies` set bits.
fn history(depth: u32, anomalies: u32) -> AnomalyTracker {
    let mut t = AnomalyTracker::new(depth).unwrap();
    for i in 0..depth {
        t.record(i < anomalies);
    }
    t
}

fn main() {
    let p = HeuristicParams::default();
    println!("thresholds: {p:?}\n");

    println!("sensor (depth {}):", p.sensor_depth);
    for sigma in [0, 3, 4, 10] {
        let t = history(p.sensor_depth, sigma);
        println!("  sigma={sigma:>2} battery=80% -> {}", sensor_heuristic(&t, 80.0, &p));
    }
    let t = history(p.sensor_depth, 10);
    println!("  sigma=10 battery=15% -> {}", sensor_heuristic(&t, 15.0, &p));
    let mut warm = AnomalyTracker::new(p.sensor_depth).unwrap();
    for _ in 0..31 {
        warm.record(true);
    }
    println!("  tau=31 (warm-up), sigma=31 -> {}", sensor_heuristic(&warm, 80.0, &p));

    println!("\ngateway (depth {}):", p.gateway_depth);
    for (sigma, q) in [(2, 0), (5, 0), (5, 4), (8, 0), (12, 9)] {
        let t = history(p.gateway_depth, sigma);
        println!(
            "  sigma={sigma:>2} q_t={q} -> {}",
            gateway_heuristic(&t, 80.0, q, &p)
        );
    }

    println!("\ncloud (depth {}):", p.cloud_depth);
    for sigma in [0, 1, 2, 8] {
        let t = history(p.cloud_depth, sigma);
        println!("  sigma={sigma} -> {}", cloud_heuristic(&t, 80.0, &p));
    }
}
