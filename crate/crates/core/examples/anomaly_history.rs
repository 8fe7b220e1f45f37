//! The per-node anomaly history: a fixed-depth bitmask with a fill counter.
//!
//! Run with `cargo run --example anomaly_history`.

use tiersim::heuristics::update_history;
use tiersim::AnomalyTracker;

fn show(label: &str, t: &AnomalyTracker) {
    println!(
        "{label:<28} H={:#018x} tau={:>2} sigma={:>2}",
        t.history(),
        t.len(),
        t.anomaly_count()
    );
}

fn main() {
    let mut t = AnomalyTracker::new(8).expect("depth within 1..=64");
    show("fresh, depth 8", &t);

    for (i, anomaly) in [true, false, true, true, false].into_iter().enumerate() {
        t = update_history(t, anomaly, true);
        show(&format!("after prediction {i} ({anomaly})"), &t);
    }

    // tau saturates at the depth; older bits fall off the end
    for _ in 0..10 {
        t = update_history(t, false, true);
    }
    show("after ten clear windows", &t);

    for _ in 0..3 {
        t = update_history(t, true, true);
    }
    show("three anomalies", &t);

    // a mode change clears everything regardless of the new prediction
    t = update_history(t, true, false);
    show("mode changed", &t);
}
