//! Trace records and their CSV / line-delimited JSON encodings.
//!
//! CSV columns, in order:
//! `timestamp_ms,node_id,event_kind,mode,state,H_hex,tau,sigma,q_t,latency_ms,battery_pct`.
//! Times and latencies are milliseconds with exactly three decimals, battery
//! levels are percent with exactly six; empty fields mean "not applicable".
//! The CSV form parses back to identical records.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde_json::json;

use crate::error::TraceError;
use crate::model::{AnomalyTracker, BatteryLevel, InferenceMode, NodeId, NodeState, SimTime};

pub const TRACE_HEADER: [&str; 11] = [
    "timestamp_ms",
    "node_id",
    "event_kind",
    "mode",
    "state",
    "H_hex",
    "tau",
    "sigma",
    "q_t",
    "latency_ms",
    "battery_pct",
];

macro_rules! trace_kinds {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum TraceKind { $($variant),* }

        impl TraceKind {
            pub const ALL: &'static [TraceKind] = &[$(TraceKind::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $(TraceKind::$variant => $name),* }
            }
        }
    };
}

trace_kinds! {
    RunStart => "run-start",
    ProvisioningStage => "provisioning-stage",
    StateTransition => "state-transition",
    ProtocolViolation => "protocol-violation",
    PropertyCommand => "property-command",
    CommandQueued => "command-queued",
    PropertyResponse => "property-response",
    Sleep => "sleep",
    SampleWindow => "sample-window",
    LocalInference => "local-inference",
    Compression => "compression",
    RadioTx => "radio-tx",
    CommandPoll => "command-poll",
    RequestSent => "request-sent",
    RequestQueued => "request-queued",
    RequestDropped => "request-dropped",
    UnknownNode => "unknown-node",
    Prediction => "prediction",
    BlankResponse => "blank-response",
    PredictionResponse => "prediction-response",
    ModeCommand => "mode-command",
    ResponseDropped => "response-dropped",
    ModeChange => "mode-change",
    Latency => "latency",
    Timeout => "timeout",
    BatteryDead => "battery-dead",
    RunEnd => "run-end",
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraceKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

/// History bitmask, length and anomaly count at the moment of the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistorySnapshot {
    pub bits: u64,
    pub tau: u32,
    pub sigma: u32,
}

impl From<&AnomalyTracker> for HistorySnapshot {
    fn from(t: &AnomalyTracker) -> Self {
        HistorySnapshot {
            bits: t.history(),
            tau: t.len(),
            sigma: t.anomaly_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: Option<NodeId>,
    pub kind: TraceKind,
    pub mode: Option<InferenceMode>,
    pub state: Option<NodeState>,
    pub history: Option<HistorySnapshot>,
    pub queue_len: Option<u32>,
    pub latency: Option<SimTime>,
    pub battery: Option<BatteryLevel>,
}

impl TraceRecord {
    pub fn new(time: SimTime, node: Option<NodeId>, kind: TraceKind) -> Self {
        TraceRecord {
            time,
            node,
            kind,
            mode: None,
            state: None,
            history: None,
            queue_len: None,
            latency: None,
            battery: None,
        }
    }

    fn fields(&self) -> [String; 11] {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        [
            self.time.to_string(),
            opt(self.node),
            self.kind.to_string(),
            opt(self.mode),
            opt(self.state),
            opt(self.history.map(|h| format!("{:#x}", h.bits))),
            opt(self.history.map(|h| h.tau)),
            opt(self.history.map(|h| h.sigma)),
            opt(self.queue_len),
            opt(self.latency),
            opt(self.battery),
        ]
    }

    fn from_fields(row: u64, f: &csv::StringRecord) -> Result<Self, TraceError> {
        if f.len() != TRACE_HEADER.len() {
            return Err(TraceError::row(
                row,
                format!("expected {} columns, found {}", TRACE_HEADER.len(), f.len()),
            ));
        }
        fn opt<T>(row: u64, col: &str, s: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, TraceError> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse(s).map(Some).map_err(|e| TraceError::row(row, format!("{col}: {e}")))
            }
        }
        let num = |s: &str| s.parse::<u32>().map_err(|e| e.to_string());
        let time = f[0]
            .parse::<SimTime>()
            .map_err(|e| TraceError::row(row, format!("timestamp_ms: {e}")))?;
        let kind = f[2]
            .parse::<TraceKind>()
            .map_err(|e| TraceError::row(row, e))?;
        let bits = opt(row, "H_hex", &f[5], |s| {
            let hex = s.strip_prefix("0x").ok_or("missing 0x prefix")?;
            u64::from_str_radix(hex, 16).map_err(|e| e.to_string())
        })?;
        let tau = opt(row, "tau", &f[6], num)?;
        let sigma = opt(row, "sigma", &f[7], num)?;
        let history = match (bits, tau, sigma) {
            (Some(bits), Some(tau), Some(sigma)) => Some(HistorySnapshot { bits, tau, sigma }),
            (None, None, None) => None,
            _ => return Err(TraceError::row(row, "H_hex, tau and sigma must appear together")),
        };
        Ok(TraceRecord {
            time,
            node: opt(row, "node_id", &f[1], |s| s.parse().map(NodeId).map_err(|e: std::num::ParseIntError| e.to_string()))?,
            kind,
            mode: opt(row, "mode", &f[3], str::parse)?,
            state: opt(row, "state", &f[4], str::parse)?,
            history,
            queue_len: opt(row, "q_t", &f[8], num)?,
            latency: opt(row, "latency_ms", &f[9], str::parse)?,
            battery: opt(row, "battery_pct", &f[10], str::parse)?,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "timestamp_ms": self.time.as_millis_f64(),
            "node_id": self.node.map(|n| n.0),
            "event_kind": self.kind.as_str(),
            "mode": self.mode.map(|m| m.as_str()),
            "state": self.state.map(|s| s.as_str()),
            "H_hex": self.history.map(|h| format!("{:#x}", h.bits)),
            "tau": self.history.map(|h| h.tau),
            "sigma": self.history.map(|h| h.sigma),
            "q_t": self.queue_len,
            "latency_ms": self.latency.map(|l| l.as_millis_f64()),
            "battery_pct": self.battery.map(|b| b.percent()),
        })
    }
}

pub fn write_trace_csv<W: io::Write>(records: &[TraceRecord], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_trace_jsonl<W: io::Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &r.to_json())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a trace CSV. Row numbers in errors count data rows from 1.
pub fn read_trace_csv<R: io::Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(TraceError::row(0, "unexpected header"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        out.push(TraceRecord::from_fields(i as u64 + 1, &rec)?);
    }
    Ok(out)
}

/// One measured response latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencySample {
    pub time: SimTime,
    pub node: NodeId,
    pub mode: InferenceMode,
    pub latency: SimTime,
}

pub fn write_latency_csv<W: io::Write>(samples: &[LatencySample], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp_ms", "node_id", "mode", "latency_ms"])?;
    for s in samples {
        w.write_record([
            s.time.to_string(),
            s.node.to_string(),
            s.mode.to_string(),
            s.latency.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_record() -> impl Strategy<Value = TraceRecord> {
        (
            any::<u32>(),
            proptest::option::of(0u32..100),
            0..TraceKind::ALL.len(),
            proptest::option::of(0u8..3),
            proptest::option::of(0u32..5),
            proptest::option::of((any::<u64>(), 0u32..=64, 0u32..=64)),
            proptest::option::of(any::<u32>()),
            proptest::option::of(any::<u32>()),
            proptest::option::of(0u32..=100_000_000),
        )
            .prop_map(|(t, n, k, m, s, h, q, l, b)| TraceRecord {
                time: SimTime::from_micros(t as u64 * 7),
                node: n.map(NodeId),
                kind: TraceKind::ALL[k],
                mode: m.and_then(InferenceMode::from_u8),
                state: s.and_then(NodeState::from_u32),
                history: h.map(|(bits, tau, sigma)| HistorySnapshot { bits, tau, sigma }),
                queue_len: q,
                latency: l.map(|x| SimTime::from_micros(x as u64)),
                battery: b.map(BatteryLevel::from_micro_percent),
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(records in proptest::collection::vec(arb_record(), 0..40)) {
            let mut buf = Vec::new();
            write_trace_csv(&records, &mut buf).unwrap();
            prop_assert_eq!(read_trace_csv(&buf[..]).unwrap(), records);
        }
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let text = format!(
            "{}\n1.000,0,run-start,S,WORKING,,,,,,100.000000\n2.000,0,bogus,,,,,,,,\n",
            TRACE_HEADER.join(",")
        );
        match read_trace_csv(text.as_bytes()) {
            Err(TraceError::Malformed { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        let short = format!("{}\n1.000,0\n", TRACE_HEADER.join(","));
        assert!(matches!(read_trace_csv(short.as_bytes()), Err(TraceError::Malformed { row: 1, .. })));
    }

    #[test]
    fn kinds_round_trip() {
        for k in TraceKind::ALL {
            assert_eq!(k.as_str().parse::<TraceKind>().unwrap(), *k);
        }
    }
}
