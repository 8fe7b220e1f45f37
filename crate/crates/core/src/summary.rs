//! Run aggregates computed from a trace and an energy ledger.
//!
//! Everything here is a pure function of its inputs, so a summary rebuilt
//! from the CSV artifacts matches the one produced during the run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy::LedgerEntry;
use crate::model::{Energy, InferenceMode, NodeId, SimTime};
use crate::sim::{TraceKind, TraceRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ms: f64,
}

/// Request bookkeeping. Every request sent is answered, lost, rejected as
/// unknown, or still in flight at the end of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestCounts {
    pub sent: u64,
    pub blank_responses: u64,
    pub prediction_responses: u64,
    pub mode_commands: u64,
    pub dropped: u64,
    pub unknown_node: u64,
    pub in_flight: u64,
    pub responses_lost: u64,
    pub timeouts: u64,
}

impl RequestCounts {
    pub fn answered(&self) -> u64 {
        self.blank_responses + self.prediction_responses + self.mode_commands
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: u32,
    pub final_mode: Option<InferenceMode>,
    pub final_battery_pct: f64,
    pub elapsed_h: f64,
    /// Elapsed time scaled by the share of the battery used so far; `None`
    /// when nothing was drawn.
    pub projected_life_h: Option<f64>,
    pub dead: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub duration_ms: f64,
    pub latency: BTreeMap<InferenceMode, LatencyStats>,
    /// Share of node-time spent in each mode; zeros when no time elapsed.
    pub occupancy: BTreeMap<InferenceMode, f64>,
    pub transitions: u64,
    /// `transition_matrix[from][to]`, indexed S, G, C.
    pub transition_matrix: [[u64; 3]; 3],
    pub requests: RequestCounts,
    pub protocol_violations: u64,
    pub total_energy_mj: f64,
    pub nodes: Vec<NodeSummary>,
}

#[derive(Default)]
struct NodeTrack {
    mode: Option<InferenceMode>,
    since: SimTime,
    start: Option<SimTime>,
    stopped: Option<SimTime>,
    battery_pct: Option<f64>,
    dead: bool,
}

pub fn summarize(trace: &[TraceRecord], ledger: &[LedgerEntry]) -> Summary {
    let mut latency_sum: BTreeMap<InferenceMode, (u64, u128)> = BTreeMap::new();
    let mut time_in: [u128; 3] = [0; 3];
    let mut matrix = [[0u64; 3]; 3];
    let mut transitions = 0;
    let mut req = RequestCounts::default();
    let mut violations = 0;
    let mut nodes: BTreeMap<NodeId, NodeTrack> = BTreeMap::new();
    let mut end = SimTime::ZERO;

    for r in trace {
        end = end.max(r.time);
        match r.kind {
            TraceKind::Latency => {
                if let (Some(m), Some(l)) = (r.mode, r.latency) {
                    let e = latency_sum.entry(m).or_default();
                    e.0 += 1;
                    e.1 += l.as_micros() as u128;
                }
            }
            TraceKind::RequestSent => req.sent += 1,
            TraceKind::BlankResponse => req.blank_responses += 1,
            TraceKind::PredictionResponse => req.prediction_responses += 1,
            TraceKind::ModeCommand => req.mode_commands += 1,
            TraceKind::RequestDropped => req.dropped += 1,
            TraceKind::UnknownNode => req.unknown_node += 1,
            TraceKind::ResponseDropped => req.responses_lost += 1,
            TraceKind::Timeout => req.timeouts += 1,
            TraceKind::ProtocolViolation => violations += 1,
            _ => {}
        }
        let Some(id) = r.node else { continue };
        let track = nodes.entry(id).or_default();
        if track.stopped.is_some() {
            continue;
        }
        match r.kind {
            TraceKind::RunStart => {
                track.mode = r.mode;
                track.since = r.time;
                track.start = Some(r.time);
            }
            TraceKind::ModeChange => {
                transitions += 1;
                if let (Some(from), Some(to)) = (track.mode, r.mode) {
                    time_in[from.index()] += (r.time - track.since).as_micros() as u128;
                    matrix[from.index()][to.index()] += 1;
                }
                track.mode = r.mode;
                track.since = r.time;
            }
            TraceKind::BatteryDead | TraceKind::RunEnd => {
                if let Some(m) = track.mode {
                    time_in[m.index()] += (r.time - track.since).as_micros() as u128;
                }
                track.stopped = Some(r.time);
                track.dead = r.kind == TraceKind::BatteryDead;
            }
            _ => {}
        }
        // tier rows carry the battery level reported in the request, not
        // the node's own; only node-side rows are used here
        let node_side = !matches!(
            r.kind,
            TraceKind::RequestQueued
                | TraceKind::UnknownNode
                | TraceKind::Prediction
                | TraceKind::BlankResponse
                | TraceKind::PredictionResponse
                | TraceKind::ModeCommand
                | TraceKind::ResponseDropped
        );
        if node_side {
            if let Some(b) = r.battery {
                track.battery_pct = Some(b.percent());
            }
        }
    }

    req.in_flight = req
        .sent
        .saturating_sub(req.answered() + req.dropped + req.unknown_node);

    let total_time: u128 = time_in.iter().sum();
    let occupancy = InferenceMode::ALL
        .iter()
        .map(|m| {
            let share = if total_time == 0 {
                0.0
            } else {
                time_in[m.index()] as f64 / total_time as f64
            };
            (*m, share)
        })
        .collect();

    let latency = InferenceMode::ALL
        .iter()
        .map(|m| {
            let (n, sum) = latency_sum.get(m).copied().unwrap_or_default();
            let mean_ms = if n == 0 { 0.0 } else { sum as f64 / n as f64 / 1_000.0 };
            (*m, LatencyStats { count: n, mean_ms })
        })
        .collect();

    let node_summaries = nodes
        .iter()
        .map(|(id, t)| {
            let start = t.start.unwrap_or(SimTime::ZERO);
            let stop = t.stopped.unwrap_or(end);
            let elapsed_h = stop.checked_sub(start).unwrap_or(SimTime::ZERO).as_hours_f64();
            let pct = t.battery_pct.unwrap_or(100.0);
            let used = 1.0 - pct / 100.0;
            NodeSummary {
                node: id.0,
                final_mode: t.mode,
                final_battery_pct: pct,
                elapsed_h,
                projected_life_h: (used > 0.0).then(|| elapsed_h / used),
                dead: t.dead,
            }
        })
        .collect();

    let total: Energy = ledger.iter().map(|e| e.energy).sum();
    Summary {
        duration_ms: end.as_millis_f64(),
        latency,
        occupancy,
        transitions,
        transition_matrix: matrix,
        requests: req,
        protocol_violations: violations,
        total_energy_mj: total.as_millijoules(),
        nodes: node_summaries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BatteryLevel;

    fn row(ms: u64, node: u32, kind: TraceKind, mode: InferenceMode) -> TraceRecord {
        let mut r = TraceRecord::new(SimTime::from_millis(ms), Some(NodeId(node)), kind);
        r.mode = Some(mode);
        r
    }

    #[test]
    fn empty_trace_is_all_zeros() {
        let s = summarize(&[], &[]);
        assert_eq!(s.transitions, 0);
        assert_eq!(s.total_energy_mj, 0.0);
        assert!(s.occupancy.values().all(|v| *v == 0.0));
        assert!(s.latency.values().all(|l| l.count == 0 && l.mean_ms == 0.0));
        assert!(s.nodes.is_empty());
    }

    #[test]
    fn single_mode_occupancy_is_one() {
        let trace = [
            row(0, 0, TraceKind::RunStart, InferenceMode::G),
            row(5_000, 0, TraceKind::RunEnd, InferenceMode::G),
        ];
        let s = summarize(&trace, &[]);
        assert_eq!(s.occupancy[&InferenceMode::G], 1.0);
        assert_eq!(s.occupancy[&InferenceMode::S], 0.0);
    }

    #[test]
    fn mode_changes_count_as_transitions() {
        use InferenceMode::*;
        let trace = [
            row(0, 0, TraceKind::RunStart, S),
            row(0, 1, TraceKind::RunStart, C),
            row(100, 0, TraceKind::ModeChange, G),
            row(250, 1, TraceKind::ModeChange, G),
            row(300, 0, TraceKind::ModeChange, C),
            row(1_000, 0, TraceKind::RunEnd, C),
            row(1_000, 1, TraceKind::RunEnd, G),
        ];
        let s = summarize(&trace, &[]);
        assert_eq!(s.transitions, 3);
        assert_eq!(s.transition_matrix[S.index()][G.index()], 1);
        assert_eq!(s.transition_matrix[G.index()][C.index()], 1);
        assert_eq!(s.transition_matrix[C.index()][G.index()], 1);
        let total: f64 = s.occupancy.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        // node 0: S 100, G 200, C 700; node 1: C 250, G 750
        assert!((s.occupancy[&C] - 0.475).abs() < 1e-12);
    }

    #[test]
    fn projected_life_scales_elapsed_time() {
        let mut end = row(3_600_000, 0, TraceKind::RunEnd, InferenceMode::S);
        end.battery = Some(BatteryLevel::from_micro_percent(99_000_000));
        let trace = [row(0, 0, TraceKind::RunStart, InferenceMode::S), end];
        let s = summarize(&trace, &[]);
        let life = s.nodes[0].projected_life_h.unwrap();
        assert!((life - 100.0).abs() < 1e-9, "{life}");
    }

    #[test]
    fn latency_means_per_mode() {
        let mut a = row(10, 0, TraceKind::Latency, InferenceMode::G);
        a.latency = Some(SimTime::from_micros(148_150));
        let mut b = a.clone();
        b.latency = Some(SimTime::from_micros(148_150));
        let s = summarize(&[a, b], &[]);
        assert_eq!(s.latency[&InferenceMode::G].count, 2);
        assert_eq!(s.latency[&InferenceMode::G].mean_ms, 148.15);
    }
}
