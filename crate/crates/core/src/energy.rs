//! Per-operation energy costs, duty-cycle totals, battery drain and
//! battery-life bounds.
//!
//! Power is piecewise constant within each measured operation, so the energy
//! integral over a run reduces to a ledger of per-operation products. The
//! ledger and battery keep integer nanojoules, which makes "ledger total
//! equals the sum of cycle energies" an exact comparison.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EnergyError, TraceError};
use crate::model::{BatteryLevel, BatteryState, Energy, InferenceMode, NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operation {
    Sleep,
    Sampling,
    LocalInference,
    Compression,
    RadioTx,
    CommandPoll,
}

impl Operation {
    pub const ALL: [Operation; 6] = [
        Operation::Sleep,
        Operation::Sampling,
        Operation::LocalInference,
        Operation::Compression,
        Operation::RadioTx,
        Operation::CommandPoll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Sleep => "sleep",
            Operation::Sampling => "sampling",
            Operation::LocalInference => "local-inference",
            Operation::Compression => "compression",
            Operation::RadioTx => "radio-tx",
            Operation::CommandPoll => "command-poll",
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operation::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| format!("unknown operation `{s}`"))
    }
}

/// One measured operation: payload size, wall time and energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationCost {
    pub size_kb: f64,
    pub duration_ms: u64,
    pub energy_mj: f64,
}

impl OperationCost {
    pub const fn new(size_kb: f64, duration_ms: u64, energy_mj: f64) -> Self {
        OperationCost {
            size_kb,
            duration_ms,
            energy_mj,
        }
    }

    pub fn energy(&self) -> Energy {
        Energy::from_millijoules(self.energy_mj)
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_millis(self.duration_ms)
    }

    /// Mean power over the operation in watts (mJ / ms).
    pub fn mean_power_w(&self) -> f64 {
        self.energy_mj / self.duration_ms as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyTable {
    pub sampling: OperationCost,
    pub local_inference: OperationCost,
    pub compression: OperationCost,
    pub radio_tx: OperationCost,
    pub deep_sleep_current_ua: f64,
    pub supply_voltage: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable {
            sampling: OperationCost::new(5.86, 10_000, 2_000.00),
            local_inference: OperationCost::new(2.92, 14, 2.72),
            compression: OperationCost::new(5.86, 50, 10.67),
            radio_tx: OperationCost::new(3.00, 4_700, 1_570.00),
            deep_sleep_current_ua: 10.0,
            supply_voltage: 3.7,
        }
    }
}

impl EnergyTable {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, cost) in self.rows() {
            if !(cost.size_kb > 0.0) || cost.duration_ms == 0 || !(cost.energy_mj > 0.0) {
                return Err(ConfigError::invalid(
                    format!("energy.{name}"),
                    "size, duration and energy must be strictly positive",
                ));
            }
            // energy must be recoverable as mean power x duration
            let back = cost.mean_power_w() * cost.duration_ms as f64;
            if !back.is_finite() || (back - cost.energy_mj).abs() > 1e-9 * cost.energy_mj.max(1.0) {
                return Err(ConfigError::invalid(
                    format!("energy.{name}"),
                    "mean power x duration does not reproduce the energy",
                ));
            }
        }
        if !(self.deep_sleep_current_ua > 0.0) || !(self.supply_voltage > 0.0) {
            return Err(ConfigError::invalid(
                "energy.deep_sleep_current_ua",
                "sleep current and supply voltage must be strictly positive",
            ));
        }
        Ok(())
    }

    fn rows(&self) -> [(&'static str, &OperationCost); 4] {
        [
            ("sampling", &self.sampling),
            ("local_inference", &self.local_inference),
            ("compression", &self.compression),
            ("radio_tx", &self.radio_tx),
        ]
    }

    /// Cost of an operation with a fixed table entry. Sleep and command
    /// polls depend on run-time inputs and return `None`.
    pub fn fixed_cost(&self, op: Operation) -> Option<&OperationCost> {
        match op {
            Operation::Sampling => Some(&self.sampling),
            Operation::LocalInference => Some(&self.local_inference),
            Operation::Compression => Some(&self.compression),
            Operation::RadioTx => Some(&self.radio_tx),
            Operation::Sleep | Operation::CommandPoll => None,
        }
    }

    /// Deep-sleep draw: current x voltage x time.
    pub fn sleep_energy(&self, sleep: SimTime) -> Energy {
        // uA * V = uW; uW * us = pJ
        let picojoules = self.deep_sleep_current_ua * self.supply_voltage * sleep.as_micros() as f64;
        Energy::from_nanojoules((picojoules / 1_000.0).round() as u64)
    }

    /// Active-phase operations of one cycle in `mode`, in execution order.
    pub fn active_phase(&self, mode: InferenceMode) -> &'static [Operation] {
        match mode {
            InferenceMode::S => &[Operation::Sampling, Operation::LocalInference],
            InferenceMode::G | InferenceMode::C => {
                &[Operation::Sampling, Operation::Compression, Operation::RadioTx]
            }
        }
    }
}

/// Energy of one full duty cycle: sleep phase plus active phase.
pub fn cycle_energy(mode: InferenceMode, sleep: SimTime, table: &EnergyTable) -> Energy {
    let active: Energy = table
        .active_phase(mode)
        .iter()
        .map(|op| table.fixed_cost(*op).expect("active ops are fixed").energy())
        .sum();
    active + table.sleep_energy(sleep)
}

pub fn cycle_duration(mode: InferenceMode, sleep: SimTime, table: &EnergyTable) -> SimTime {
    table
        .active_phase(mode)
        .iter()
        .map(|op| table.fixed_cost(*op).expect("active ops are fixed").duration())
        .fold(sleep, |a, b| a + b)
}

/// Battery life in hours if every cycle runs in `mode`:
/// `capacity / cycle_energy x cycle_duration`.
pub fn battery_life_bound(
    battery: &BatteryState,
    mode: InferenceMode,
    sleep: SimTime,
    table: &EnergyTable,
) -> f64 {
    let per_cycle = cycle_energy(mode, sleep, table).as_joules();
    if battery.capacity() == Energy::ZERO || per_cycle <= 0.0 {
        return 0.0;
    }
    battery.capacity().as_joules() / per_cycle * cycle_duration(mode, sleep, table).as_hours_f64()
}

/// Percent saved by running on board instead of off board.
pub fn energy_savings_percent(onboard_mj: f64, offboard_mj: f64) -> Result<f64, EnergyError> {
    if !(offboard_mj > 0.0) {
        return Err(EnergyError::NonPositiveOffboard(offboard_mj));
    }
    Ok(100.0 * (offboard_mj - onboard_mj) / offboard_mj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub time: SimTime,
    pub node: NodeId,
    pub op: Operation,
    pub energy: Energy,
    /// Battery level after the debit.
    pub battery: BatteryLevel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    entries: Vec<LedgerEntry>,
    total: Energy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DebitOutcome {
    Alive,
    /// The battery hit zero on this debit, or was already empty.
    Dead,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self) -> Energy {
        self.total
    }

    pub fn total_for(&self, node: NodeId) -> Energy {
        self.entries.iter().filter(|e| e.node == node).map(|e| e.energy).sum()
    }

    fn push(&mut self, entry: LedgerEntry) {
        self.total = self.total + entry.energy;
        self.entries.push(entry);
    }
}

/// Debits a fixed-cost operation from `table`.
pub fn debit(
    battery: &mut BatteryState,
    ledger: &mut EnergyLedger,
    at: SimTime,
    node: NodeId,
    op: Operation,
    table: &EnergyTable,
) -> DebitOutcome {
    let energy = table
        .fixed_cost(op)
        .map(OperationCost::energy)
        .unwrap_or(Energy::ZERO);
    debit_energy(battery, ledger, at, node, op, energy)
}

/// Draws `energy` from the battery and records what was actually drawn. A
/// debit that reaches capacity clamps there; debiting an empty battery is a
/// no-op.
pub fn debit_energy(
    battery: &mut BatteryState,
    ledger: &mut EnergyLedger,
    at: SimTime,
    node: NodeId,
    op: Operation,
    energy: Energy,
) -> DebitOutcome {
    if battery.is_depleted() {
        return DebitOutcome::Dead;
    }
    let drawn = battery.draw(energy);
    ledger.push(LedgerEntry {
        time: at,
        node,
        op,
        energy: drawn,
        battery: battery.level(),
    });
    if battery.is_depleted() {
        DebitOutcome::Dead
    } else {
        DebitOutcome::Alive
    }
}

pub const LEDGER_HEADER: [&str; 5] = ["timestamp_ms", "node_id", "operation", "energy_mJ", "battery_pct"];

pub fn write_ledger_csv<W: io::Write>(entries: &[LedgerEntry], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_HEADER)?;
    for e in entries {
        w.write_record([
            e.time.to_string(),
            e.node.to_string(),
            e.op.to_string(),
            e.energy.to_string(),
            e.battery.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_ledger_csv<R: io::Read>(input: R) -> Result<Vec<LedgerEntry>, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec?;
        if rec.len() != LEDGER_HEADER.len() {
            return Err(TraceError::row(row, "wrong column count"));
        }
        let bad = |m: String| TraceError::row(row, m);
        out.push(LedgerEntry {
            time: rec[0].parse().map_err(bad)?,
            node: NodeId(rec[1].parse().map_err(|e| bad(format!("node_id: {e}")))?),
            op: rec[2].parse().map_err(bad)?,
            energy: rec[3].parse().map_err(bad)?,
            battery: rec[4].parse().map_err(bad)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use InferenceMode::*;

    const SLEEP: SimTime = SimTime::from_millis(30_000);

    #[test]
    fn sensor_cycle_energy() {
        let t = EnergyTable::default();
        assert_eq!(cycle_energy(S, SLEEP, &t), Energy::from_nanojoules(2_003_830_000));
        assert_eq!(cycle_energy(S, SimTime::ZERO, &t), Energy::from_millijoules(2_002.72));
        assert_eq!(cycle_duration(S, SLEEP, &t), SimTime::from_millis(40_014));
    }

    #[test]
    fn offboard_cycle_energy_is_component_sum() {
        let t = EnergyTable::default();
        assert_eq!(cycle_energy(G, SLEEP, &t), Energy::from_nanojoules(3_581_780_000));
        assert_eq!(cycle_energy(C, SLEEP, &t), cycle_energy(G, SLEEP, &t));
        assert_eq!(cycle_duration(C, SLEEP, &t), SimTime::from_millis(44_750));
    }

    #[test]
    fn sleep_draw_is_1_11_mj_per_30_s() {
        let t = EnergyTable::default();
        assert_eq!(t.sleep_energy(SLEEP), Energy::from_nanojoules(1_110_000));
        assert_eq!(t.sleep_energy(SimTime::ZERO), Energy::ZERO);
    }

    #[test]
    fn bounds() {
        let t = EnergyTable::default();
        let b = BatteryState::default();
        let upper = battery_life_bound(&b, S, SLEEP, &t);
        let lower = battery_life_bound(&b, C, SLEEP, &t);
        assert!((upper - 104.0).abs() <= 2.0, "{upper}");
        assert!((lower - 65.0).abs() <= 2.0, "{lower}");
        let empty = BatteryState::new(Energy::ZERO, 3.7);
        assert_eq!(battery_life_bound(&empty, S, SLEEP, &t), 0.0);
    }

    #[test]
    fn savings() {
        let s = energy_savings_percent(2_003.83, 3_578.67).unwrap();
        assert!((s - 44.0).abs() <= 0.5);
        assert_eq!(energy_savings_percent(7.0, 7.0).unwrap(), 0.0);
        let s = energy_savings_percent(2_003.83, 3_581.78).unwrap();
        // 1577.95 / 3581.78 = 44.0549...%
        assert!((s - 44.05).abs() < 0.01, "{s}");
        assert!(energy_savings_percent(1.0, 0.0).is_err());
        assert!(energy_savings_percent(1.0, -3.0).is_err());
    }

    #[test]
    fn sampling_mean_power_is_0_2_w() {
        let t = EnergyTable::default();
        assert!((t.sampling.mean_power_w() - 0.2).abs() < 1e-12);
        t.validate().unwrap();
        let mut bad = t.clone();
        bad.radio_tx.energy_mj = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn debit_sampling_and_dead_battery() {
        let t = EnergyTable::default();
        let mut b = BatteryState::default();
        let mut ledger = EnergyLedger::new();
        let out = debit(&mut b, &mut ledger, SimTime::ZERO, NodeId(0), Operation::Sampling, &t);
        assert_eq!(out, DebitOutcome::Alive);
        assert_eq!(b.consumed(), Energy::from_millijoules(2_000.0));

        let mut small = BatteryState::new(Energy::from_millijoules(1_000.0), 3.7);
        let mut ledger = EnergyLedger::new();
        let out = debit(&mut small, &mut ledger, SimTime::ZERO, NodeId(0), Operation::Sampling, &t);
        assert_eq!(out, DebitOutcome::Dead);
        assert_eq!(small.consumed(), small.capacity());
        assert_eq!(ledger.total(), small.capacity());
        let out = debit(&mut small, &mut ledger, SimTime::ZERO, NodeId(0), Operation::RadioTx, &t);
        assert_eq!(out, DebitOutcome::Dead);
        assert_eq!(ledger.entries().len(), 1);
    }

    #[test]
    fn thousand_radio_debits() {
        let t = EnergyTable::default();
        let mut b = BatteryState::default();
        let mut ledger = EnergyLedger::new();
        for i in 0..1000 {
            let out = debit(&mut b, &mut ledger, SimTime::from_millis(i), NodeId(0), Operation::RadioTx, &t);
            assert_eq!(out, DebitOutcome::Alive);
        }
        assert_eq!(b.consumed(), Energy::from_joules(1_570.0));
        assert_eq!(ledger.total(), b.consumed());
    }

    #[test]
    fn ledger_csv_round_trip() {
        let t = EnergyTable::default();
        let mut b = BatteryState::default();
        let mut ledger = EnergyLedger::new();
        debit(&mut b, &mut ledger, SimTime::from_micros(1_234_567), NodeId(3), Operation::Sampling, &t);
        debit_energy(&mut b, &mut ledger, SimTime::from_millis(2_000), NodeId(3), Operation::Sleep, t.sleep_energy(SLEEP));
        let mut buf = Vec::new();
        write_ledger_csv(ledger.entries(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_ms,node_id,operation,energy_mJ,battery_pct\n1234.567,3,sampling,2000.000000,"));
        assert_eq!(read_ledger_csv(&buf[..]).unwrap(), ledger.entries());
    }
}
