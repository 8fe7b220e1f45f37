//! Shared domain types: identifiers, the simulation clock, inference modes,
//! node lifecycle states, the per-node anomaly history and battery state.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulation time (or a span of it) in whole microseconds.
///
/// Integer microseconds keep the event order total and make every reported
/// latency and cycle duration exact. Displayed as milliseconds with three
/// decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Rounds to the nearest microsecond; negative inputs clamp to zero.
    pub fn from_millis_f64(ms: f64) -> Self {
        SimTime((ms * 1_000.0).round().max(0.0) as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_hours_f64(self) -> f64 {
        self.0 as f64 / 3.6e9
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1_000, self.0 % 1_000)
    }
}

impl FromStr for SimTime {
    type Err = String;

    /// Parses the `123.456` millisecond form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed(s, 3).map(SimTime).ok_or_else(|| format!("bad time `{s}`"))
    }
}

/// Parses a non-negative decimal with at most `scale` fractional digits into
/// an integer scaled by 10^scale. Exact inverse of the fixed-point formatting
/// used across the trace files.
pub(crate) fn parse_fixed(s: &str, scale: u32) -> Option<u64> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() || frac.len() > scale as usize {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int: u64 = int.parse().ok()?;
    let mut frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    for _ in frac.len()..scale as usize {
        frac_val *= 10;
    }
    int.checked_mul(10u64.pow(scale))?.checked_add(frac_val)
}

/// Where a node's predictions are computed.
///
/// The derived order `S < G < C` is the escalation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InferenceMode {
    #[serde(alias = "sensor", alias = "SENSOR")]
    S,
    #[serde(alias = "gateway", alias = "GATEWAY")]
    G,
    #[serde(alias = "cloud", alias = "CLOUD")]
    C,
}

impl InferenceMode {
    pub const ALL: [InferenceMode; 3] = [InferenceMode::S, InferenceMode::G, InferenceMode::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InferenceMode::S => "S",
            InferenceMode::G => "G",
            InferenceMode::C => "C",
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        InferenceMode::ALL.get(v as usize).copied()
    }

    /// Whether `self -> to` is an edge of the mode transition graph.
    /// The only missing edge is a direct jump from sensor to cloud.
    pub fn can_transition_to(self, to: InferenceMode) -> bool {
        !(self == InferenceMode::S && to == InferenceMode::C)
    }
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InferenceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" | "sensor" | "SENSOR" => Ok(InferenceMode::S),
            "G" | "gateway" | "GATEWAY" => Ok(InferenceMode::G),
            "C" | "cloud" | "CLOUD" => Ok(InferenceMode::C),
            _ => Err(format!("unknown inference mode `{s}`")),
        }
    }
}

/// Sensor node lifecycle state. The numeric values are the `state`
/// property encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NodeState {
    Initial = 0,
    Unlocked = 1,
    Locked = 2,
    Working = 3,
    Idle = 4,
}

impl NodeState {
    pub const ALL: [NodeState; 5] = [
        NodeState::Initial,
        NodeState::Unlocked,
        NodeState::Locked,
        NodeState::Working,
        NodeState::Idle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeState::Initial => "INITIAL",
            NodeState::Unlocked => "UNLOCKED",
            NodeState::Locked => "LOCKED",
            NodeState::Working => "WORKING",
            NodeState::Idle => "IDLE",
        }
    }

    pub fn from_u32(v: u32) -> Option<Self> {
        NodeState::ALL.get(v as usize).copied()
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeState::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown node state `{s}`"))
    }
}

/// Rolling anomaly history for one node at one tier.
///
/// Bit 0 is the most recent prediction. Only the low `depth` bits are ever
/// set, and never more than `len` of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AnomalyTracker {
    history: u64,
    len: u8,
    depth: u8,
}

impl AnomalyTracker {
    pub const MAX_DEPTH: u32 = 64;

    pub fn new(depth: u32) -> Result<Self, ConfigError> {
        if depth == 0 || depth > Self::MAX_DEPTH {
            return Err(ConfigError::invalid(
                "history depth",
                format!("must be in 1..=64, got {depth}"),
            ));
        }
        Ok(AnomalyTracker {
            history: 0,
            len: 0,
            depth: depth as u8,
        })
    }

    /// Builds a tracker from raw parts, rejecting states that break the
    /// invariants.
    pub fn from_parts(history: u64, len: u32, depth: u32) -> Result<Self, ConfigError> {
        let mut t = Self::new(depth)?;
        if len > depth {
            return Err(ConfigError::invalid("history length", "exceeds depth"));
        }
        let valid_bits = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        if history & !valid_bits != 0 {
            return Err(ConfigError::invalid(
                "history",
                "bits set at or above the history length",
            ));
        }
        t.history = history;
        t.len = len as u8;
        Ok(t)
    }

    fn mask(&self) -> u64 {
        if self.depth == 64 {
            u64::MAX
        } else {
            (1u64 << self.depth) - 1
        }
    }

    pub fn history(&self) -> u64 {
        self.history
    }

    pub fn len(&self) -> u32 {
        self.len as u32
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn depth(&self) -> u32 {
        self.depth as u32
    }

    /// History has accumulated `depth` predictions since the last reset.
    pub fn is_full(&self) -> bool {
        self.len == self.depth
    }

    /// Shifts in one prediction; the oldest bit drops off once the history
    /// is full.
    pub fn record(&mut self, anomaly: bool) {
        self.history = ((self.history << 1) | anomaly as u64) & self.mask();
        self.len = (self.len + 1).min(self.depth);
    }

    pub fn reset(&mut self) {
        self.history = 0;
        self.len = 0;
    }

    pub fn anomaly_count(&self) -> u32 {
        (self.history & self.mask()).count_ones()
    }
}

/// Thresholds for the three adaptive heuristics plus per-tier history depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicParams {
    /// Battery percentage under which every tier sends the node back to S.
    pub low_battery_pct: f64,
    /// Sensor escalates to G once this many anomalies are in its history.
    pub sensor_escalation: u32,
    /// Gateway de-escalates to S below this anomaly count.
    pub gateway_deescalation: u32,
    /// Gateway escalates to C at or above this anomaly count.
    pub gateway_escalation: u32,
    /// Gateway also escalates when its inference queue reaches this size.
    pub queue_threshold: u32,
    /// Cloud de-escalates to G below this anomaly count.
    pub cloud_deescalation: u32,
    /// Parsed and validated, never consulted by the cloud heuristic.
    pub cloud_escalation: u32,
    pub sensor_depth: u32,
    pub gateway_depth: u32,
    pub cloud_depth: u32,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            low_battery_pct: 20.0,
            sensor_escalation: 4,
            gateway_deescalation: 4,
            gateway_escalation: 8,
            queue_threshold: 4,
            cloud_deescalation: 2,
            cloud_escalation: 8,
            sensor_depth: 32,
            gateway_depth: 16,
            cloud_depth: 8,
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, field: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::invalid(format!("heuristics.{field}"), reason))
            }
        };
        for (field, depth) in [
            ("sensor_depth", self.sensor_depth),
            ("gateway_depth", self.gateway_depth),
            ("cloud_depth", self.cloud_depth),
        ] {
            check((1..=64).contains(&depth), field, "must be in 1..=64")?;
        }
        check(
            self.low_battery_pct > 0.0 && self.low_battery_pct < 100.0,
            "low_battery_pct",
            "must be in (0, 100)",
        )?;
        check(
            self.sensor_escalation > 0 && self.sensor_escalation <= self.sensor_depth,
            "sensor_escalation",
            "must satisfy 0 < sensor_escalation <= sensor_depth",
        )?;
        check(
            self.gateway_deescalation > 0,
            "gateway_deescalation",
            "must be positive",
        )?;
        check(
            self.gateway_deescalation < self.gateway_escalation,
            "gateway_escalation",
            "must exceed gateway_deescalation",
        )?;
        check(
            self.gateway_escalation <= self.gateway_depth,
            "gateway_escalation",
            "must not exceed gateway_depth",
        )?;
        check(
            self.cloud_deescalation > 0 && self.cloud_deescalation <= self.cloud_depth,
            "cloud_deescalation",
            "must satisfy 0 < cloud_deescalation <= cloud_depth",
        )?;
        check(self.queue_threshold >= 1, "queue_threshold", "must be at least 1")?;
        Ok(())
    }

    pub fn depth(&self, tier: InferenceMode) -> u32 {
        match tier {
            InferenceMode::S => self.sensor_depth,
            InferenceMode::G => self.gateway_depth,
            InferenceMode::C => self.cloud_depth,
        }
    }
}

/// Energy in whole nanojoules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Energy(u64);

impl Energy {
    pub const ZERO: Energy = Energy(0);

    pub const fn from_nanojoules(nj: u64) -> Self {
        Energy(nj)
    }

    pub fn from_millijoules(mj: f64) -> Self {
        Energy((mj * 1e6).round().max(0.0) as u64)
    }

    pub fn from_joules(j: f64) -> Self {
        Energy((j * 1e9).round().max(0.0) as u64)
    }

    pub const fn as_nanojoules(self) -> u64 {
        self.0
    }

    pub fn as_millijoules(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_joules(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, rhs: Energy) -> Energy {
        Energy(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_mul(self, n: u64) -> Option<Energy> {
        self.0.checked_mul(n).map(Energy)
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::ZERO, |a, b| a + b)
    }
}

/// Millijoules with six decimals, i.e. exact nanojoules.
impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl FromStr for Energy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed(s, 6)
            .map(Energy)
            .ok_or_else(|| format!("bad energy `{s}`"))
    }
}

/// Battery charge level in millionths of a percent (`100_000_000` = full).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BatteryLevel(u32);

impl BatteryLevel {
    pub const FULL: BatteryLevel = BatteryLevel(100_000_000);
    pub const EMPTY: BatteryLevel = BatteryLevel(0);

    pub fn from_micro_percent(v: u32) -> Self {
        BatteryLevel(v.min(100_000_000))
    }

    pub fn micro_percent(self) -> u32 {
        self.0
    }

    pub fn percent(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl fmt::Display for BatteryLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl FromStr for BatteryLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match parse_fixed(s, 6) {
            Some(v) if v <= 100_000_000 => Ok(BatteryLevel(v as u32)),
            _ => Err(format!("bad battery level `{s}`")),
        }
    }
}

/// Battery state; consumption is tracked in energy, the level is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    capacity: Energy,
    consumed: Energy,
    voltage: f64,
}

impl BatteryState {
    /// 1,400 mAh at 3.7 V.
    pub const DEFAULT_CAPACITY_MAH: f64 = 1_400.0;
    pub const DEFAULT_VOLTAGE: f64 = 3.7;

    pub fn new(capacity: Energy, voltage: f64) -> Self {
        BatteryState {
            capacity,
            consumed: Energy::ZERO,
            voltage,
        }
    }

    /// mAh x V = mWh; 1 mWh = 3.6 J.
    pub fn from_mah(mah: f64, voltage: f64) -> Self {
        Self::new(Energy::from_joules(mah * voltage * 3.6), voltage)
    }

    pub fn with_consumed(mut self, consumed: Energy) -> Self {
        self.consumed = consumed.min(self.capacity);
        self
    }

    pub fn capacity(&self) -> Energy {
        self.capacity
    }

    pub fn consumed(&self) -> Energy {
        self.consumed
    }

    pub fn remaining(&self) -> Energy {
        self.capacity.saturating_sub(self.consumed)
    }

    pub fn voltage(&self) -> f64 {
        self.voltage
    }

    pub fn is_depleted(&self) -> bool {
        self.consumed >= self.capacity
    }

    /// Draws `energy`, clamping at capacity. Returns what was actually drawn.
    pub(crate) fn draw(&mut self, energy: Energy) -> Energy {
        let drawn = energy.min(self.remaining());
        self.consumed = self.consumed + drawn;
        drawn
    }

    pub fn level(&self) -> BatteryLevel {
        if self.capacity == Energy::ZERO {
            return BatteryLevel::EMPTY;
        }
        let rem = self.remaining().as_nanojoules() as u128;
        let cap = self.capacity.as_nanojoules() as u128;
        BatteryLevel((rem * 100_000_000 / cap) as u32)
    }
}

impl Default for BatteryState {
    fn default() -> Self {
        Self::from_mah(Self::DEFAULT_CAPACITY_MAH, Self::DEFAULT_VOLTAGE)
    }
}

/// Machine health grade attached to each sample window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionClass {
    Good = 0,
    Acceptable = 1,
    Unsatisfactory = 2,
    Unacceptable = 3,
}

impl ConditionClass {
    pub const ALL: [ConditionClass; 4] = [
        ConditionClass::Good,
        ConditionClass::Acceptable,
        ConditionClass::Unsatisfactory,
        ConditionClass::Unacceptable,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Which predicted classes raise the binary anomaly bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnomalyMapping(pub [bool; 4]);

impl Default for AnomalyMapping {
    fn default() -> Self {
        AnomalyMapping([false, false, true, true])
    }
}

impl AnomalyMapping {
    pub fn is_anomaly(&self, class: ConditionClass) -> bool {
        self.0[class.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub node: NodeId,
    pub timestep: u64,
    pub class: ConditionClass,
    pub anomaly: bool,
    pub origin: InferenceMode,
}

impl Prediction {
    pub fn new(
        node: NodeId,
        timestep: u64,
        class: ConditionClass,
        origin: InferenceMode,
        mapping: &AnomalyMapping,
    ) -> Self {
        Prediction {
            node,
            timestep,
            class,
            anomaly: mapping.is_anomaly(class),
            origin,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn new_tracker_is_empty() {
        let t = AnomalyTracker::new(32).unwrap();
        assert_eq!((t.history(), t.len(), t.depth()), (0, 0, 32));
        let t = AnomalyTracker::new(8).unwrap();
        assert_eq!((t.history(), t.len(), t.depth()), (0, 0, 8));
    }

    #[test]
    fn tracker_depth_out_of_range() {
        assert!(AnomalyTracker::new(0).is_err());
        assert!(AnomalyTracker::new(65).is_err());
        assert!(AnomalyTracker::new(64).is_ok());
    }

    #[test]
    fn from_parts_rejects_stray_bits() {
        assert!(AnomalyTracker::from_parts(0b1000, 3, 8).is_err());
        assert!(AnomalyTracker::from_parts(0b0111, 3, 8).is_ok());
        assert!(AnomalyTracker::from_parts(0, 9, 8).is_err());
    }

    #[test]
    fn mode_order_is_escalation_order() {
        use InferenceMode::*;
        assert!(S < G && G < C && S < C);
        for a in InferenceMode::ALL {
            for b in InferenceMode::ALL {
                let n = [a < b, a == b, a > b].iter().filter(|x| **x).count();
                assert_eq!(n, 1);
            }
        }
        assert!(!S.can_transition_to(C));
        assert!(C.can_transition_to(S));
    }

    #[test]
    fn default_battery_is_18648_joules() {
        let b = BatteryState::default();
        assert_eq!(b.capacity(), Energy::from_joules(18_648.0));
        assert_eq!(b.level(), BatteryLevel::FULL);
    }

    #[test]
    fn fixed_point_round_trip() {
        let t = SimTime::from_micros(148_150);
        assert_eq!(t.to_string(), "148.150");
        assert_eq!("148.150".parse::<SimTime>().unwrap(), t);
        assert_eq!("148.15".parse::<SimTime>().unwrap(), t);
        let e = Energy::from_millijoules(2003.83);
        assert_eq!(e.to_string(), "2003.830000");
        assert!("1.2345678".parse::<Energy>().is_err());
        assert!("-1".parse::<SimTime>().is_err());
    }

    proptest! {
        #[test]
        fn tracker_invariants_hold(depth in 1u32..=64, ops in proptest::collection::vec(0u8..3, 0..200)) {
            let mut t = AnomalyTracker::new(depth).unwrap();
            for op in ops {
                match op {
                    0 => t.record(false),
                    1 => t.record(true),
                    _ => t.reset(),
                }
                prop_assert!(t.len() <= t.depth());
                let valid = if t.len() == 64 { u64::MAX } else { (1u64 << t.len()) - 1 };
                prop_assert_eq!(t.history() & !valid, 0);
                prop_assert!(t.anomaly_count() <= t.len());
            }
        }

        #[test]
        fn battery_level_text_round_trips(v in 0u32..=100_000_000) {
            let l = BatteryLevel::from_micro_percent(v);
            prop_assert_eq!(l.to_string().parse::<BatteryLevel>().unwrap(), l);
        }
    }
}
