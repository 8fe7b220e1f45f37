//! Battery life when a node is pinned to one mode: the closed form, then a
//! full simulation of both nodes running until their batteries are flat.
//!
//! Run with `cargo run --release --example battery_bounds`.

use tiersim::energy::{battery_life_bound, cycle_duration, cycle_energy, EnergyTable};
use tiersim::run::run_scenario;
use tiersim::{BatteryState, InferenceMode, Scenario, SimTime};

fn main() {
    let table = EnergyTable::default();
    let battery = BatteryState::default();
    let sleep = SimTime::from_millis(30_000);
    println!("battery {:.0} J, sleep {} ms", battery.capacity().as_joules(), sleep);
    for mode in InferenceMode::ALL {
        println!(
            "  {mode}: cycle {} mJ over {} ms -> {:.2} h",
            cycle_energy(mode, sleep, &table),
            cycle_duration(mode, sleep, &table),
            battery_life_bound(&battery, mode, sleep, &table)
        );
    }

    // the preset pins node 0 to S and node 1 to C
    let scenario = Scenario::preset("paper-battery-bounds").unwrap();
    let run = run_scenario(&scenario, None).unwrap();
    println!("\nsimulated until {:.1} h:", run.output.end.as_hours_f64());
    for n in &run.summary.nodes {
        println!(
            "  node {} ({}): died={} after {:.2} h",
            n.node,
            n.final_mode.unwrap(),
            n.dead,
            n.elapsed_h
        );
    }
}
