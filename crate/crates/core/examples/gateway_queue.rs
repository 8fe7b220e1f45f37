//! Many nodes sharing one gateway with a slow service time: the queue grows,
//! and the gateway heuristic pushes work to the cloud once it reaches the
//! threshold.
//!
//! Run with `cargo run --release --example gateway_queue`.

use tiersim::run::run_scenario;
use tiersim::sim::TraceKind;
use tiersim::{InferenceMode, Scenario};

fn main() {
    let mut scenario = Scenario::from_toml_str(
        r#"
seed = 5
duration_ms = 1_800_000

[fleet]
count = 12
initial_mode = "G"

[ground_truth]
anomaly_probability = 0.35

[network]
gateway_service_ms = 800
"#,
    )
    .unwrap();
    scenario.name = "gateway-queue".into();
    let run = run_scenario(&scenario, None).unwrap();

    let mut peak = 0;
    for r in &run.output.trace {
        if r.kind == TraceKind::RequestQueued && r.mode == Some(InferenceMode::G) {
            peak = peak.max(r.queue_len.unwrap_or(0));
        }
    }
    println!("peak gateway queue: {peak}");
    let m = run.summary.transition_matrix;
    println!("G->C transitions: {}, G->S: {}, C->G: {}", m[1][2], m[1][0], m[2][1]);
    for mode in InferenceMode::ALL {
        let l = run.summary.latency[&mode];
        println!("{mode}: {:.1}% of node-time, mean latency {:.1} ms", run.summary.occupancy[&mode] * 100.0, l.mean_ms);
    }
}
