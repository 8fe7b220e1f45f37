//! Load a scenario from TOML, run it, write the artifacts and rebuild the
//! summary from the files on disk.
//!
//! Run with `cargo run --example scenario_run [out-dir]`.

use std::path::PathBuf;

use tiersim::run::{run_scenario, summarize_files};
use tiersim::Scenario;

const SCENARIO: &str = r#"
name = "three-nodes"
seed = 11
duration_ms = 3_600_000

[fleet]
count = 3
sleep_period_ms = 5_000

[[node]]
id = 2
initial_mode = "G"
initial_battery_pct = 60

[ground_truth]
anomaly_probability = 0.4

# take node 0 out of service after twenty minutes
[[commands]]
at_ms = 1_200_000
node = 0
property = "state"
value = 4
"#;

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tiersim-scenario-run"));

    let scenario = Scenario::from_toml_str(SCENARIO).unwrap();
    let run = run_scenario(&scenario, None).unwrap();
    for path in run.write(&out).unwrap() {
        println!("wrote {}", path.display());
    }

    let s = &run.summary;
    println!("\noccupancy {:?}", s.occupancy);
    println!("transitions {} {:?}", s.transitions, s.transition_matrix);
    println!("requests {:?}", s.requests);
    for n in &s.nodes {
        println!("node {} ends in {:?} at {:.3}%", n.node, n.final_mode, n.final_battery_pct);
    }

    let again = summarize_files(&out.join("trace.csv"), &out.join("energy.csv")).unwrap();
    println!("\nsummary rebuilt from files matches: {}", again == run.summary);

    // validation errors point at the line
    let err = Scenario::from_toml_str("[heuristics]\ncloud_depth = 0\n").unwrap_err();
    println!("bad scenario: {err}");
}
