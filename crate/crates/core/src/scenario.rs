//! TOML scenario files.
//!
//! Every field is optional and defaults to the reference experiment, so an
//! empty file describes one S-mode node running back-to-back windows for
//! thirty minutes with adaptive inference on.
//!
//! ```toml
//! name = "two-nodes"
//! seed = 7
//! duration_ms = 3_600_000
//!
//! [fleet]
//! count = 2
//! sleep_period_ms = 30_000
//!
//! [[node]]
//! id = 1
//! initial_mode = "C"
//!
//! [ground_truth]
//! anomaly_probability = 0.5
//!
//! [[commands]]
//! at_ms = 600_000
//! node = 0
//! property = "inference_mode"
//! method = "SET"
//! value = 1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyTable;
use crate::error::ConfigError;
use crate::model::{BatteryState, Energy, HeuristicParams, InferenceMode, NodeId, SimTime};
use crate::node::{DataType, Device, Method, PollPolicy, PropertyCommand, PropertyName, PropertyValue};
use crate::sim::{
    GroundTruthConfig, LatencyModel, NetworkConfig, NodeSpec, OracleConfig, ProvisioningConfig,
    SimConfig, Simulation,
};

/// Built-in scenarios, by name.
pub const PRESETS: [(&str, &str); 3] = [
    ("paper-latency", include_str!("../presets/paper-latency.toml")),
    ("paper-battery-bounds", include_str!("../presets/paper-battery-bounds.toml")),
    ("paper-savings", include_str!("../presets/paper-savings.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub count: u32,
    pub initial_mode: InferenceMode,
    pub battery_mah: f64,
    pub voltage: f64,
    pub initial_battery_pct: f64,
    pub sleep_period_ms: u32,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            count: 1,
            initial_mode: InferenceMode::S,
            battery_mah: BatteryState::DEFAULT_CAPACITY_MAH,
            voltage: BatteryState::DEFAULT_VOLTAGE,
            initial_battery_pct: 100.0,
            sleep_period_ms: 0,
        }
    }
}

/// Per-node overrides of the fleet defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOverride {
    pub id: u32,
    pub initial_mode: Option<InferenceMode>,
    pub battery_mah: Option<f64>,
    pub initial_battery_pct: Option<f64>,
    pub sleep_period_ms: Option<u32>,
}

/// An operator command issued at a fixed time. Without `node` it targets
/// the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSpec {
    pub at_ms: u64,
    pub node: Option<u32>,
    pub property: String,
    #[serde(default = "default_method")]
    pub method: Method,
    pub value: Option<toml::Value>,
}

fn default_method() -> Method {
    Method::Set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub adaptive: bool,
    pub output_dir: Option<PathBuf>,
    pub fleet: FleetConfig,
    #[serde(rename = "node")]
    pub nodes: Vec<NodeOverride>,
    pub heuristics: HeuristicParams,
    pub energy: EnergyTable,
    pub latency: LatencyModel,
    pub oracle: OracleConfig,
    pub ground_truth: GroundTruthConfig,
    pub poll: PollPolicy,
    pub network: NetworkConfig,
    pub provisioning: ProvisioningConfig,
    pub commands: Vec<CommandSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".into(),
            seed: 0,
            duration_ms: 1_800_000,
            adaptive: true,
            output_dir: None,
            fleet: FleetConfig::default(),
            nodes: Vec::new(),
            heuristics: HeuristicParams::default(),
            energy: EnergyTable::default(),
            latency: LatencyModel::default(),
            oracle: OracleConfig::default(),
            ground_truth: GroundTruthConfig::default(),
            poll: PollPolicy::default(),
            network: NetworkConfig::default(),
            provisioning: ProvisioningConfig::default(),
            commands: Vec::new(),
        }
    }
}

impl Scenario {
    /// Parses and validates. Errors point at the offending line when the
    /// field appears in `text`.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((1, 1));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        scenario.validate().map_err(|e| anchor(text, e))?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml_str(&text)?)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
        Self::from_toml_str(text)
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.fleet;
        check_battery("fleet.battery_mah", f.battery_mah)?;
        check_battery("fleet.voltage", f.voltage)?;
        check_pct("fleet.initial_battery_pct", f.initial_battery_pct)?;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id >= f.count {
                return Err(ConfigError::invalid(
                    "node.id",
                    format!("entry {i} names node {} but the fleet has {} nodes", n.id, f.count),
                ));
            }
            if let Some(mah) = n.battery_mah {
                check_battery("node.battery_mah", mah)?;
            }
            if let Some(p) = n.initial_battery_pct {
                check_pct("node.initial_battery_pct", p)?;
            }
        }
        self.sim_config().validate()?;
        self.operator_commands().map(|_| ())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            adaptive: self.adaptive,
            heuristics: self.heuristics.clone(),
            energy: self.energy.clone(),
            latency: self.latency.clone(),
            oracle: self.oracle.clone(),
            ground_truth: self.ground_truth.clone(),
            poll: self.poll,
            network: self.network.clone(),
            provisioning: self.provisioning.clone(),
        }
    }

    pub fn node_specs(&self) -> Vec<NodeSpec> {
        let f = &self.fleet;
        (0..f.count)
            .map(|id| {
                let o = self.nodes.iter().rev().find(|n| n.id == id);
                let mah = o.and_then(|o| o.battery_mah).unwrap_or(f.battery_mah);
                let pct = o.and_then(|o| o.initial_battery_pct).unwrap_or(f.initial_battery_pct);
                let battery = BatteryState::from_mah(mah, f.voltage);
                let used = battery.capacity().as_nanojoules() as f64 * (1.0 - pct / 100.0);
                NodeSpec {
                    mode: o.and_then(|o| o.initial_mode).unwrap_or(f.initial_mode),
                    battery: battery.with_consumed(Energy::from_nanojoules(used.round() as u64)),
                    sleep_period_ms: o.and_then(|o| o.sleep_period_ms).unwrap_or(f.sleep_period_ms),
                }
            })
            .collect()
    }

    pub fn operator_commands(&self) -> Result<Vec<(SimTime, PropertyCommand)>, ConfigError> {
        self.commands
            .iter()
            .map(|c| {
                let property: PropertyName = c
                    .property
                    .parse()
                    .map_err(|e: String| ConfigError::invalid("commands.property", e))?;
                let target = match c.node {
                    Some(id) if id >= self.fleet.count => {
                        return Err(ConfigError::invalid(
                            "commands.node",
                            format!("no node {id} in a fleet of {}", self.fleet.count),
                        ))
                    }
                    Some(id) => Device::Sensor(NodeId(id)),
                    None => Device::Gateway,
                };
                let value = match (&c.value, c.method) {
                    (None, _) | (_, Method::Get) => None,
                    (Some(v), Method::Add) => Some(convert(v, DataType::Text)?),
                    (Some(v), Method::Set) => Some(convert(v, property.data_type())?),
                };
                let cmd = PropertyCommand {
                    target,
                    property,
                    method: c.method,
                    value,
                };
                Ok((SimTime::from_millis(c.at_ms), cmd))
            })
            .collect()
    }

    /// A ready-to-run engine with operator commands already scheduled.
    pub fn build(&self) -> Result<Simulation, ConfigError> {
        let mut sim = Simulation::new(self.sim_config(), &self.node_specs())?;
        for (at, cmd) in self.operator_commands()? {
            sim.submit_command(at, cmd).expect("nothing has run yet");
        }
        Ok(sim)
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_millis(self.duration_ms)
    }
}

fn check_battery(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, "must be positive"))
    }
}

fn check_pct(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v <= 100.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, "must lie in (0, 100]"))
    }
}

fn convert(v: &toml::Value, ty: DataType) -> Result<PropertyValue, ConfigError> {
    let bad = || ConfigError::invalid("commands.value", format!("expected a value of type {ty:?}"));
    let int = |max: i64| v.as_integer().filter(|i| (0..=max).contains(i)).ok_or_else(bad);
    Ok(match ty {
        DataType::Blob => PropertyValue::Blob(int(u32::MAX as i64)? as u32),
        DataType::U32 => PropertyValue::U32(int(u32::MAX as i64)? as u32),
        DataType::U8 => PropertyValue::U8(int(u8::MAX as i64)? as u8),
        DataType::Text => PropertyValue::Text(v.as_str().ok_or_else(bad)?.to_string()),
        DataType::TextList => PropertyValue::TextList(
            v.as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|s| s.as_str().map(str::to_string).ok_or_else(bad))
                .collect::<Result<_, _>>()?,
        ),
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

/// Attaches a line number to a validation error whose field is written out
/// in the file. Defaulted fields have no line and are returned unchanged.
fn anchor(text: &str, err: ConfigError) -> ConfigError {
    let ConfigError::Invalid { field, reason } = &err else {
        return err;
    };
    let (table, key) = field.rsplit_once('.').unwrap_or(("", field.as_str()));
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        let Some(rest) = t.strip_prefix(key) else { continue };
        if current == table && rest.trim_start().starts_with('=') {
            return ConfigError::Parse {
                line: i + 1,
                column: line.len() - line.trim_start().len() + 1,
                message: format!("{field}: {reason}"),
            };
        }
    }
    err
}
