//! Cycle arithmetic and the saving from on-board inference.
//!
//! Run with `cargo run --example energy_savings`.

use tiersim::energy::{cycle_energy, energy_savings_percent, EnergyTable, Operation};
use tiersim::run::run_scenario;
use tiersim::{InferenceMode, Scenario, SimTime};

fn main() {
    let table = EnergyTable::default();
    println!("{:<16} {:>8} {:>10} {:>12} {:>8}", "operation", "size KB", "time ms", "energy mJ", "W");
    for op in Operation::ALL {
        if let Some(c) = table.fixed_cost(op) {
            println!(
                "{:<16} {:>8.2} {:>10} {:>12.2} {:>8.3}",
                op.as_str(),
                c.size_kb,
                c.duration_ms,
                c.energy_mj,
                c.mean_power_w()
            );
        }
    }

    let sleep = SimTime::from_millis(30_000);
    let on = cycle_energy(InferenceMode::S, sleep, &table).as_millijoules();
    let off = cycle_energy(InferenceMode::G, sleep, &table).as_millijoules();
    let saving = energy_savings_percent(on, off).unwrap();
    println!("\non-board cycle {on:.2} mJ, off-board cycle {off:.2} mJ, saving {saving:.2}%");

    // the same comparison from a day of simulated operation
    let scenario = Scenario::preset("paper-savings").unwrap();
    let run = run_scenario(&scenario, None).unwrap();
    let ledger = &run.output.ledger;
    let used: Vec<f64> = (0..2)
        .map(|i| ledger.total_for(tiersim::NodeId(i)).as_millijoules())
        .collect();
    println!(
        "one simulated day: on-board node {:.0} mJ, off-board node {:.0} mJ",
        used[0], used[1]
    );
    // per day the off-board node also runs fewer, longer cycles
    println!("daily saving {:.2}%", energy_savings_percent(used[0], used[1]).unwrap());
}
