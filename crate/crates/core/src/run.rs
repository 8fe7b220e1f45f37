//! Running a scenario end to end and writing its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{self, write_ledger_csv};
use crate::error::Error;
use crate::model::{BatteryState, InferenceMode, SimTime};
use crate::scenario::Scenario;
use crate::sim::trace::{write_latency_csv, write_trace_csv, write_trace_jsonl};
use crate::sim::SimOutput;
use crate::summary::{summarize, Summary};

/// Closed-form energy figures for a scenario's fleet defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub sleep_period_ms: u32,
    pub battery_j: f64,
    pub cycle_energy_mj: [f64; 3],
    pub cycle_duration_ms: [f64; 3],
    pub battery_life_h: [f64; 3],
    /// On-board (S) against off-board (G) cycle energy.
    pub savings_pct: f64,
}

impl EnergyModel {
    pub fn for_scenario(s: &Scenario) -> Self {
        let sleep = SimTime::from_millis(s.fleet.sleep_period_ms as u64);
        let battery = BatteryState::from_mah(s.fleet.battery_mah, s.fleet.voltage);
        let per_mode = |f: &dyn Fn(InferenceMode) -> f64| InferenceMode::ALL.map(f);
        let cycle_energy_mj = per_mode(&|m| energy::cycle_energy(m, sleep, &s.energy).as_millijoules());
        EnergyModel {
            sleep_period_ms: s.fleet.sleep_period_ms,
            battery_j: battery.capacity().as_joules(),
            cycle_energy_mj,
            cycle_duration_ms: per_mode(&|m| energy::cycle_duration(m, sleep, &s.energy).as_millis_f64()),
            battery_life_h: per_mode(&|m| energy::battery_life_bound(&battery, m, sleep, &s.energy)),
            savings_pct: energy::energy_savings_percent(cycle_energy_mj[0], cycle_energy_mj[1])
                .expect("validated table has positive costs"),
        }
    }
}

/// A finished run held in memory. Nothing touches the disk until
/// [`RunArtifacts::write`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub scenario: Scenario,
    pub output: SimOutput,
    pub summary: Summary,
    pub energy_model: EnergyModel,
}

pub const ARTIFACT_FILES: [&str; 6] = [
    "trace.csv",
    "trace.jsonl",
    "energy.csv",
    "latency.csv",
    "summary.json",
    "energy_model.json",
];

/// Runs `scenario` for its configured duration, or until `until` if given.
pub fn run_scenario(scenario: &Scenario, until: Option<SimTime>) -> Result<RunArtifacts, Error> {
    let mut sim = scenario.build()?;
    sim.run_until(until.unwrap_or(scenario.duration()))?;
    let output = sim.finish();
    let summary = summarize(&output.trace, output.ledger.entries());
    Ok(RunArtifacts {
        scenario: scenario.clone(),
        energy_model: EnergyModel::for_scenario(scenario),
        output,
        summary,
    })
}

impl RunArtifacts {
    pub fn trace_csv(&self) -> Result<Vec<u8>, Error> {
        let mut buf = Vec::new();
        write_trace_csv(&self.output.trace, &mut buf)?;
        Ok(buf)
    }

    /// Renders every artifact, in [`ARTIFACT_FILES`] order.
    pub fn render(&self) -> Result<Vec<(&'static str, Vec<u8>)>, Error> {
        let mut jsonl = Vec::new();
        write_trace_jsonl(&self.output.trace, &mut jsonl)?;
        let mut ledger = Vec::new();
        write_ledger_csv(self.output.ledger.entries(), &mut ledger)?;
        let mut latency = Vec::new();
        write_latency_csv(&self.output.latencies, &mut latency)?;
        let mut summary = serde_json::to_vec_pretty(&self.summary)?;
        summary.push(b'\n');
        let mut model = serde_json::to_vec_pretty(&self.energy_model)?;
        model.push(b'\n');
        Ok(vec![
            ("trace.csv", self.trace_csv()?),
            ("trace.jsonl", jsonl),
            ("energy.csv", ledger),
            ("latency.csv", latency),
            ("summary.json", summary),
            ("energy_model.json", model),
        ])
    }

    /// Renders everything first, then writes into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, Error> {
        let files = self.render()?;
        fs::create_dir_all(dir)?;
        files
            .into_iter()
            .map(|(name, bytes)| {
                let path = dir.join(name);
                fs::write(&path, bytes)?;
                Ok(path)
            })
            .collect()
    }
}

/// Rebuilds a summary from written `trace.csv` and `energy.csv` files.
pub fn summarize_files(trace: &Path, ledger: &Path) -> Result<Summary, Error> {
    let records = crate::sim::trace::read_trace_csv(fs::File::open(trace)?)?;
    let entries = energy::read_ledger_csv(fs::File::open(ledger)?)?;
    Ok(summarize(&records, &entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_model_defaults() {
        let mut s = Scenario::default();
        s.fleet.sleep_period_ms = 30_000;
        let m = EnergyModel::for_scenario(&s);
        assert_eq!(m.cycle_energy_mj[0], 2_003.83);
        assert_eq!(m.cycle_duration_ms[1], 44_750.0);
        assert!((m.battery_life_h[0] - 103.44).abs() < 0.01);
        assert!((m.savings_pct - 44.05).abs() < 0.01);
    }

    #[test]
    fn zero_duration_run() {
        let mut s = Scenario::default();
        s.duration_ms = 0;
        let a = run_scenario(&s, None).unwrap();
        assert!(a.output.trace.is_empty());
        assert_eq!(a.summary.transitions, 0);
        assert_eq!(a.summary.total_energy_mj, 0.0);
    }

    #[test]
    fn written_files_summarize_identically() {
        let s = Scenario::preset("paper-latency").unwrap();
        let a = run_scenario(&s, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let again = summarize_files(&dir.path().join("trace.csv"), &dir.path().join("energy.csv")).unwrap();
        assert_eq!(again, a.summary);
    }
}
