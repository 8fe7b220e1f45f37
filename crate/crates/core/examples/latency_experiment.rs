//! Thirty minutes of one adaptive node, then the same with 10% latency
//! jitter averaged over ten seeds.
//!
//! Run with `cargo run --release --example latency_experiment`.

use tiersim::run::run_scenario;
use tiersim::sim::TraceKind;
use tiersim::{InferenceMode, Scenario};

fn main() {
    let scenario = Scenario::preset("paper-latency").unwrap();
    let run = run_scenario(&scenario, None).unwrap();
    for m in InferenceMode::ALL {
        let l = run.summary.latency[&m];
        println!("{m}: {:>3} samples, mean {:.3} ms", l.count, l.mean_ms);
    }
    let path: Vec<String> = run
        .output
        .trace
        .iter()
        .filter(|r| r.kind == TraceKind::ModeChange)
        .map(|r| format!("{}@{:.0}s", r.mode.unwrap(), r.time.as_millis_f64() / 1_000.0))
        .collect();
    println!("mode changes: {}", path.join(" -> "));

    let mut sums = [(0u64, 0f64); 3];
    for seed in 0..10 {
        let mut s = scenario.clone();
        s.seed = seed;
        s.latency = s.latency.with_relative_jitter(0.1);
        for sample in run_scenario(&s, None).unwrap().output.latencies {
            let e = &mut sums[sample.mode.index()];
            e.0 += 1;
            e.1 += sample.latency.as_millis_f64();
        }
    }
    println!("\nwith 10% jitter, ten seeds pooled:");
    for m in InferenceMode::ALL {
        let (n, total) = sums[m.index()];
        let target = scenario.latency.mean_ms(m);
        let mean = total / n as f64;
        println!(
            "{m}: {n:>4} samples, mean {mean:.3} ms ({:+.2}% from {target})",
            100.0 * (mean - target) / target
        );
    }
}
