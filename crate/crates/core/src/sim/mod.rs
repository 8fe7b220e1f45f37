//! Discrete-event engine: nodes, one gateway tier and one cloud tier.
//!
//! Events are ordered by `(time, sequence)`; ties run in insertion order, so
//! a scenario and seed always produce the same trace. Each node draws from
//! its own RNG streams, derived from the top-level seed by node id.

mod latency;
mod message;
mod tier;
pub mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use latency::{measure_latency, LatencyModel};
pub use message::{Endpoint, Message, MessageKind, Payload, WindowUpload};
pub use tier::{GatewayProperties, TierServer};
pub use trace::{HistorySnapshot, LatencySample, TraceKind, TraceRecord};

use crate::energy::{DebitOutcome, EnergyLedger, EnergyTable, Operation};
use crate::error::{ConfigError, SimError};
use crate::heuristics;
use crate::model::{
    AnomalyMapping, BatteryState, HeuristicParams, InferenceMode, NodeId, NodeState, SimTime,
};
use crate::node::{
    CommandOutcome, Device, LifecycleEvent, ModeChange, PlannedOp, PollPolicy, PropertyCommand,
    PropertyName, PropertyResponse, PropertyValue, ProvisioningStage, SensorNode, StateTransition,
};
use crate::oracle::{self, GroundTruthProcess, TierAccuracyProfile};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub sensor: TierAccuracyProfile,
    pub gateway: TierAccuracyProfile,
    pub cloud: TierAccuracyProfile,
    /// Anomaly bit per class: Good, Acceptable, Unsatisfactory, Unacceptable.
    pub anomaly_classes: AnomalyMapping,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            sensor: TierAccuracyProfile::sensor(),
            gateway: TierAccuracyProfile::gateway(),
            cloud: TierAccuracyProfile::cloud(),
            anomaly_classes: AnomalyMapping::default(),
        }
    }
}

impl OracleConfig {
    pub fn profile(&self, tier: InferenceMode) -> &TierAccuracyProfile {
        match tier {
            InferenceMode::S => &self.sensor,
            InferenceMode::G => &self.gateway,
            InferenceMode::C => &self.cloud,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sensor.validate("oracle.sensor")?;
        self.gateway.validate("oracle.gateway")?;
        self.cloud.validate("oracle.cloud")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthConfig {
    pub anomaly_probability: f64,
    pub good_fraction: f64,
    pub unsatisfactory_fraction: f64,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        GroundTruthConfig {
            anomaly_probability: 0.3,
            good_fraction: 0.5,
            unsatisfactory_fraction: 0.5,
        }
    }
}

impl GroundTruthConfig {
    pub fn process(&self, seed: u64) -> GroundTruthProcess {
        GroundTruthProcess {
            anomaly_probability: self.anomaly_probability,
            good_fraction: self.good_fraction,
            unsatisfactory_fraction: self.unsatisfactory_fraction,
            seed,
        }
    }
}

/// What a tier sends back when its heuristic keeps the current mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseStyle {
    #[default]
    Blank,
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Per-request service time at each tier, on top of the latency model.
    pub gateway_service_ms: f64,
    pub cloud_service_ms: f64,
    /// Independent loss probability on each hop (uplink and downlink).
    pub drop_probability: f64,
    /// How long a node waits for a response before giving up on it.
    pub request_timeout_ms: u64,
    pub respond_with: ResponseStyle,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            gateway_service_ms: 0.0,
            cloud_service_ms: 0.0,
            drop_probability: 0.0,
            request_timeout_ms: 10_000,
            respond_with: ResponseStyle::Blank,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("network.gateway_service_ms", self.gateway_service_ms),
            ("network.cloud_service_ms", self.cloud_service_ms),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ConfigError::invalid(field, "must be a non-negative number"));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(ConfigError::invalid("network.drop_probability", "must lie in [0, 1]"));
        }
        if self.request_timeout_ms == 0 {
            return Err(ConfigError::invalid("network.request_timeout_ms", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvisioningConfig {
    /// When false, nodes start already commissioned in WORKING.
    pub enabled: bool,
    /// Latency of each provisioning stage and commissioning message.
    pub stage_latency_ms: u64,
}

impl Default for ProvisioningConfig {
    fn default() -> Self {
        ProvisioningConfig {
            enabled: true,
            stage_latency_ms: 100,
        }
    }
}

/// Engine parameters shared by every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// When false, tiers never change a node's mode.
    pub adaptive: bool,
    pub heuristics: HeuristicParams,
    pub energy: EnergyTable,
    pub latency: LatencyModel,
    pub oracle: OracleConfig,
    pub ground_truth: GroundTruthConfig,
    pub poll: PollPolicy,
    pub network: NetworkConfig,
    pub provisioning: ProvisioningConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            adaptive: true,
            heuristics: HeuristicParams::default(),
            energy: EnergyTable::default(),
            latency: LatencyModel::default(),
            oracle: OracleConfig::default(),
            ground_truth: GroundTruthConfig::default(),
            poll: PollPolicy::default(),
            network: NetworkConfig::default(),
            provisioning: ProvisioningConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.heuristics.validate()?;
        self.energy.validate()?;
        self.latency.validate()?;
        self.oracle.validate()?;
        self.ground_truth.process(self.seed).validate()?;
        self.poll.validate()?;
        self.network.validate()
    }
}

/// Initial conditions for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSpec {
    pub mode: InferenceMode,
    pub battery: BatteryState,
    pub sleep_period_ms: u32,
}

impl Default for NodeSpec {
    fn default() -> Self {
        NodeSpec {
            mode: InferenceMode::S,
            battery: BatteryState::default(),
            sleep_period_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// A message reaches its destination.
    Deliver(Message),
    CycleStart { node: NodeId, epoch: u64 },
    StepDone { node: NodeId, epoch: u64, step: PlannedOp },
    /// The request at the head of a tier's queue finishes service.
    ServiceDone { tier: InferenceMode },
    RequestTimeout { node: NodeId, request: u64 },
}

#[derive(Debug)]
struct Scheduled {
    at: SimTime,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

struct NodeRuntime {
    node: SensorNode,
    /// Bumped whenever the node's cycle stops; events from an older epoch are
    /// stale and ignored.
    epoch: u64,
    steps: VecDeque<PlannedOp>,
    cycle: u64,
    truth: GroundTruthProcess,
    oracle_rng: [ChaCha8Rng; 3],
    latency_rng: ChaCha8Rng,
    link_rng: ChaCha8Rng,
    outstanding: BTreeMap<u64, InferenceMode>,
    next_request: u64,
    dead: bool,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<TraceRecord>,
    pub ledger: EnergyLedger,
    pub latencies: Vec<LatencySample>,
    pub end: SimTime,
}

pub struct Simulation {
    config: SimConfig,
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    nodes: Vec<NodeRuntime>,
    gateway: TierServer,
    cloud: TierServer,
    gateway_props: GatewayProperties,
    ledger: EnergyLedger,
    trace: Vec<TraceRecord>,
    latencies: Vec<LatencySample>,
    sleep_targets: Vec<u32>,
    started: bool,
}

impl Simulation {
    /// Builds the network. Node `i` in `nodes` gets id `i`.
    pub fn new(config: SimConfig, nodes: &[NodeSpec]) -> Result<Self, ConfigError> {
        config.validate()?;
        let h = &config.heuristics;
        let gateway = TierServer::new(
            InferenceMode::G,
            h.gateway_depth,
            SimTime::from_millis_f64(config.network.gateway_service_ms),
        )?;
        let cloud = TierServer::new(
            InferenceMode::C,
            h.cloud_depth,
            SimTime::from_millis_f64(config.network.cloud_service_ms),
        )?;
        let mut sim = Simulation {
            now: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes: Vec::with_capacity(nodes.len()),
            gateway,
            cloud,
            gateway_props: GatewayProperties::new("gateway-0"),
            ledger: EnergyLedger::new(),
            trace: Vec::new(),
            latencies: Vec::new(),
            sleep_targets: Vec::new(),
            started: false,
            config,
        };
        for (i, spec) in nodes.iter().enumerate() {
            sim.add_node(NodeId(i as u32), spec)?;
        }
        Ok(sim)
    }

    fn add_node(&mut self, id: NodeId, spec: &NodeSpec) -> Result<(), ConfigError> {
        let s = self.config.seed;
        let i = id.0 as u64;
        let mut node = SensorNode::new(id, spec.mode, self.config.heuristics.sensor_depth, spec.battery)?;
        let provision = self.config.provisioning.enabled;
        if !provision {
            node = node.commissioned(spec.sleep_period_ms);
        }
        self.nodes.push(NodeRuntime {
            node,
            epoch: 0,
            steps: VecDeque::new(),
            cycle: 0,
            truth: self.config.ground_truth.process(seed::derive_seed(s, "ground-truth", i)),
            oracle_rng: [
                seed::stream(s, "oracle-sensor", i),
                seed::stream(s, "oracle-gateway", i),
                seed::stream(s, "oracle-cloud", i),
            ],
            latency_rng: seed::stream(s, "latency", i),
            link_rng: seed::stream(s, "link", i),
            outstanding: BTreeMap::new(),
            next_request: 0,
            dead: false,
        });
        let stage_latency = SimTime::from_millis(self.config.provisioning.stage_latency_ms);
        let ev = if provision {
            Event::Deliver(Message {
                kind: MessageKind::ProvisioningStage,
                src: Endpoint::Gateway,
                dst: Endpoint::Node(id),
                send_time: SimTime::ZERO,
                request_send_time: None,
                payload: Payload::Stage(ProvisioningStage::DeviceDiscovery),
            })
        } else {
            self.gateway.register(id);
            self.cloud.register(id);
            Event::CycleStart { node: id, epoch: 0 }
        };
        let at = if provision { stage_latency } else { SimTime::ZERO };
        self.schedule(at, ev).expect("construction time is zero");
        // the gateway writes this period while commissioning
        self.sleep_targets.push(spec.sleep_period_ms);
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn node(&self, id: NodeId) -> Option<&SensorNode> {
        self.nodes.get(id.0 as usize).map(|n| &n.node)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// The gateway (`G`) or cloud (`C`) tier.
    pub fn tier(&self, tier: InferenceMode) -> &TierServer {
        match tier {
            InferenceMode::C => &self.cloud,
            _ => &self.gateway,
        }
    }

    pub fn gateway_properties(&self) -> &GatewayProperties {
        &self.gateway_props
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Queues `event` at `at`. Scheduling before the current time is an error.
    pub fn schedule(&mut self, at: SimTime, event: Event) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::ScheduledInPast { at, now: self.now });
        }
        self.queue.push(Scheduled {
            at,
            seq: self.seq,
            event,
        });
        self.seq += 1;
        Ok(())
    }

    /// Schedules an operator command for delivery at `at`.
    pub fn submit_command(&mut self, at: SimTime, cmd: PropertyCommand) -> Result<(), SimError> {
        let dst = match cmd.target {
            Device::Gateway => Endpoint::Gateway,
            Device::Sensor(id) => Endpoint::Node(id),
        };
        self.schedule(
            at,
            Event::Deliver(Message {
                kind: MessageKind::PropertyCommand,
                src: Endpoint::Operator,
                dst,
                send_time: at,
                request_send_time: None,
                payload: Payload::Command(cmd),
            }),
        )
    }

    /// Runs every event with a timestamp at or before `end`, then advances
    /// the clock to `end`.
    pub fn run_until(&mut self, end: SimTime) -> Result<(), SimError> {
        if !self.started && end > SimTime::ZERO {
            self.started = true;
            for i in 0..self.nodes.len() {
                let row = self.node_row(TraceKind::RunStart, NodeId(i as u32));
                self.trace.push(row);
            }
        }
        while self.queue.peek().is_some_and(|s| s.at <= end) {
            let Scheduled { at, event, .. } = self.queue.pop().expect("peeked");
            self.now = at;
            self.dispatch(event)?;
        }
        if end > self.now {
            self.now = end;
        }
        Ok(())
    }

    /// Closes the run with one `run-end` row per node.
    pub fn finish(mut self) -> SimOutput {
        if self.started {
            for i in 0..self.nodes.len() {
                let row = self.node_row(TraceKind::RunEnd, NodeId(i as u32));
                self.trace.push(row);
            }
        }
        SimOutput {
            trace: self.trace,
            ledger: self.ledger,
            latencies: self.latencies,
            end: self.now,
        }
    }

    fn dispatch(&mut self, event: Event) -> Result<(), SimError> {
        match event {
            Event::Deliver(msg) => self.deliver(msg),
            Event::CycleStart { node, epoch } => {
                if self.is_current(node, epoch) {
                    self.start_cycle(node)?;
                }
                Ok(())
            }
            Event::StepDone { node, epoch, step } => {
                if self.is_current(node, epoch) {
                    self.step_done(node, step)?;
                }
                Ok(())
            }
            Event::ServiceDone { tier } => self.service(tier),
            Event::RequestTimeout { node, request } => {
                let rt = &mut self.nodes[node.0 as usize];
                if rt.outstanding.remove(&request).is_some() && !rt.dead {
                    let row = self.node_row(TraceKind::Timeout, node);
                    self.trace.push(row);
                }
                Ok(())
            }
        }
    }

    fn is_current(&self, node: NodeId, epoch: u64) -> bool {
        self.nodes
            .get(node.0 as usize)
            .is_some_and(|n| n.epoch == epoch && !n.dead)
    }

    fn node_row(&self, kind: TraceKind, id: NodeId) -> TraceRecord {
        let n = &self.nodes[id.0 as usize].node;
        let mut r = TraceRecord::new(self.now, Some(id), kind);
        r.mode = Some(n.mode());
        r.state = Some(n.state());
        r.battery = Some(n.battery.level());
        r
    }

    fn start_cycle(&mut self, id: NodeId) -> Result<(), SimError> {
        let now = self.now;
        let rt = &mut self.nodes[id.0 as usize];
        let Ok((index, ops)) = rt.node.begin_cycle(now, &self.config.energy) else {
            return Ok(());
        };
        rt.cycle = index;
        rt.steps = ops.into();
        self.schedule_next_step(id)
    }

    fn schedule_next_step(&mut self, id: NodeId) -> Result<(), SimError> {
        let rt = &self.nodes[id.0 as usize];
        let epoch = rt.epoch;
        match rt.steps.front() {
            Some(step) => {
                let step = *step;
                self.schedule(step.end, Event::StepDone { node: id, epoch, step })
            }
            None => self.schedule(self.now, Event::CycleStart { node: id, epoch }),
        }
    }

    fn step_done(&mut self, id: NodeId, step: PlannedOp) -> Result<(), SimError> {
        let cfg = &self.config;
        let rt = &mut self.nodes[id.0 as usize];
        rt.steps.pop_front();
        let outcome = rt.node.perform(&step, &cfg.energy, &cfg.poll, &mut self.ledger);
        let kind = match step.op {
            Operation::Sleep => TraceKind::Sleep,
            Operation::Sampling => TraceKind::SampleWindow,
            Operation::LocalInference => TraceKind::LocalInference,
            Operation::Compression => TraceKind::Compression,
            Operation::RadioTx => TraceKind::RadioTx,
            Operation::CommandPoll => TraceKind::CommandPoll,
        };
        let row = self.node_row(kind, id);
        self.trace.push(row);
        if outcome == DebitOutcome::Dead {
            self.kill(id);
            return Ok(());
        }
        match step.op {
            Operation::Sampling => {
                let cfg = &self.config;
                let rt = &mut self.nodes[id.0 as usize];
                let more = rt.node.plan_processing(rt.cycle, self.now, &cfg.energy, &cfg.poll);
                rt.steps.extend(more);
            }
            Operation::LocalInference => self.on_device_predict(id)?,
            Operation::RadioTx => self.send_request(id)?,
            Operation::CommandPoll => {
                let cmds = self.nodes[id.0 as usize].node.take_pending();
                for cmd in cmds {
                    self.apply_node_command(id, &cmd)?;
                }
            }
            Operation::Sleep | Operation::Compression => {}
        }
        if self.is_current(id, self.nodes[id.0 as usize].epoch)
            && self.nodes[id.0 as usize].node.state() == NodeState::Working
        {
            self.schedule_next_step(id)?;
        }
        Ok(())
    }

    fn kill(&mut self, id: NodeId) {
        let rt = &mut self.nodes[id.0 as usize];
        rt.dead = true;
        rt.epoch += 1;
        rt.steps.clear();
        let row = self.node_row(TraceKind::BatteryDead, id);
        self.trace.push(row);
    }

    fn on_device_predict(&mut self, id: NodeId) -> Result<(), SimError> {
        let cfg = &self.config;
        let rt = &mut self.nodes[id.0 as usize];
        let timestep = rt.cycle;
        let truth = rt.truth.draw(timestep);
        let pred = oracle::predict(
            &cfg.oracle.sensor,
            InferenceMode::S,
            id,
            timestep,
            truth,
            &cfg.oracle.anomaly_classes,
            &mut rt.oracle_rng[0],
        );
        rt.node.record_prediction(pred.anomaly);
        let latency = cfg.latency.sample(InferenceMode::S, &mut rt.latency_rng);
        let battery_pct = rt.node.battery.level().percent();
        let verdict = if cfg.adaptive {
            heuristics::sensor_heuristic(rt.node.tracker(), battery_pct, &cfg.heuristics)
        } else {
            InferenceMode::S
        };

        let mut row = self.node_row(TraceKind::Prediction, id);
        row.history = Some(HistorySnapshot::from(self.nodes[id.0 as usize].node.tracker()));
        self.trace.push(row);
        let mut row = self.node_row(TraceKind::Latency, id);
        row.latency = Some(latency);
        self.trace.push(row);
        self.latencies.push(LatencySample {
            time: self.now,
            node: id,
            mode: InferenceMode::S,
            latency,
        });

        if verdict != InferenceMode::S {
            let cmd = set_mode(id, verdict);
            self.apply_node_command(id, &cmd)?;
        }
        Ok(())
    }

    fn send_request(&mut self, id: NodeId) -> Result<(), SimError> {
        let now = self.now;
        let drop_p = self.config.network.drop_probability;
        let timeout = SimTime::from_millis(self.config.network.request_timeout_ms);
        let rt = &mut self.nodes[id.0 as usize];
        let mode = rt.node.mode();
        if mode == InferenceMode::S {
            // switched to S mid-cycle; nothing to upload
            return Ok(());
        }
        let request = rt.next_request;
        rt.next_request += 1;
        let upload = WindowUpload {
            id: request,
            timestep: rt.cycle,
            mode,
            battery: rt.node.battery.level(),
            size_bytes: (self.config.energy.compression.size_kb * 1024.0).round() as u32,
        };
        rt.outstanding.insert(request, mode);
        let dropped = drop_p > 0.0 && rt.link_rng.random::<f64>() < drop_p;

        let row = self.node_row(TraceKind::RequestSent, id);
        self.trace.push(row);
        self.schedule(now + timeout, Event::RequestTimeout { node: id, request })?;
        if dropped {
            let row = self.node_row(TraceKind::RequestDropped, id);
            self.trace.push(row);
            return Ok(());
        }
        self.schedule(
            now,
            Event::Deliver(Message {
                kind: MessageKind::PredictionRequest,
                src: Endpoint::Node(id),
                dst: Endpoint::tier(mode),
                send_time: now,
                request_send_time: None,
                payload: Payload::Window(upload),
            }),
        )
    }

    fn tier_mut(&mut self, tier: InferenceMode) -> &mut TierServer {
        match tier {
            InferenceMode::C => &mut self.cloud,
            _ => &mut self.gateway,
        }
    }

    fn deliver(&mut self, msg: Message) -> Result<(), SimError> {
        match (msg.dst, &msg.payload) {
            (Endpoint::Gateway | Endpoint::Cloud, Payload::Window(upload)) => {
                let tier = upload.mode;
                let src = msg.src;
                let needs_service = self.tier_mut(tier).enqueue(msg);
                let mut row = TraceRecord::new(self.now, endpoint_node(src), TraceKind::RequestQueued);
                row.mode = Some(tier);
                row.queue_len = Some(self.tier(tier).queue_len());
                self.trace.push(row);
                if needs_service {
                    let at = self.now + self.tier(tier).service_time();
                    self.schedule(at, Event::ServiceDone { tier })?;
                }
                Ok(())
            }
            (Endpoint::Gateway, Payload::Command(cmd)) => {
                let resp = self.gateway_props.apply(cmd);
                self.trace_gateway_command(&resp);
                Ok(())
            }
            (Endpoint::Node(id), _) if (id.0 as usize) < self.nodes.len() => {
                if self.nodes[id.0 as usize].dead {
                    return Ok(());
                }
                self.deliver_to_node(id, msg)
            }
            _ => Ok(()),
        }
    }

    fn trace_gateway_command(&mut self, resp: &PropertyResponse) {
        let kind = if let PropertyResponse::Violation(_) = resp {
            TraceKind::ProtocolViolation
        } else {
            TraceKind::PropertyCommand
        };
        let mut row = TraceRecord::new(self.now, None, kind);
        row.mode = Some(InferenceMode::G);
        self.trace.push(row);
    }

    fn deliver_to_node(&mut self, id: NodeId, msg: Message) -> Result<(), SimError> {
        match msg.payload.clone() {
            Payload::Stage(stage) => self.provisioning_stage(id, stage),
            Payload::Reply { request, command, .. } => {
                let rt = &mut self.nodes[id.0 as usize];
                if rt.outstanding.remove(&request.id).is_none() {
                    // already timed out
                    return Ok(());
                }
                let latency = measure_latency(id, &msg, self.now)?;
                let mut row = self.node_row(TraceKind::Latency, id);
                row.mode = Some(request.mode);
                row.latency = Some(latency);
                self.trace.push(row);
                self.latencies.push(LatencySample {
                    time: self.now,
                    node: id,
                    mode: request.mode,
                    latency,
                });
                if let Some(cmd) = command {
                    self.command_arrives(id, cmd)?;
                }
                Ok(())
            }
            Payload::Command(cmd) => self.command_arrives(id, cmd),
            Payload::Window(_) => Ok(()),
        }
    }

    fn command_arrives(&mut self, id: NodeId, cmd: PropertyCommand) -> Result<(), SimError> {
        if self.nodes[id.0 as usize].node.radio_listening() {
            self.apply_node_command(id, &cmd)
        } else {
            self.nodes[id.0 as usize].node.enqueue_command(cmd);
            let row = self.node_row(TraceKind::CommandQueued, id);
            self.trace.push(row);
            Ok(())
        }
    }

    fn provisioning_stage(&mut self, id: NodeId, stage: ProvisioningStage) -> Result<(), SimError> {
        let row = self.node_row(TraceKind::ProvisioningStage, id);
        self.trace.push(row);
        let delay = SimTime::from_millis(self.config.provisioning.stage_latency_ms);
        if let Some(next) = stage.next() {
            return self.schedule(
                self.now + delay,
                Event::Deliver(Message {
                    kind: MessageKind::ProvisioningStage,
                    src: Endpoint::Gateway,
                    dst: Endpoint::Node(id),
                    send_time: self.now,
                    request_send_time: None,
                    payload: Payload::Stage(next),
                }),
            );
        }
        let step = self.nodes[id.0 as usize]
            .node
            .step_state_machine(LifecycleEvent::ProvisioningComplete);
        match step {
            Ok(t) => {
                self.gateway.register(id);
                self.cloud.register(id);
                let add = PropertyCommand::add(
                    Device::Gateway,
                    PropertyName::ProvisionedNodes,
                    PropertyValue::Text(format!("sensor-{}", id.0)),
                );
                let resp = self.gateway_props.apply(&add);
                self.trace_gateway_command(&resp);
                self.after_transition(id, t)
            }
            Err(_) => {
                let row = self.node_row(TraceKind::ProtocolViolation, id);
                self.trace.push(row);
                Ok(())
            }
        }
    }

    fn apply_node_command(&mut self, id: NodeId, cmd: &PropertyCommand) -> Result<(), SimError> {
        let CommandOutcome {
            response,
            transition,
            mode_change,
        } = self.nodes[id.0 as usize].node.apply_property_command(cmd);
        let kind = match response {
            PropertyResponse::Violation(_) => TraceKind::ProtocolViolation,
            _ => TraceKind::PropertyCommand,
        };
        let row = self.node_row(kind, id);
        self.trace.push(row);
        if let Some(change) = mode_change {
            self.on_mode_change(id, change);
        }
        if let Some(t) = transition {
            self.after_transition(id, t)?;
        }
        Ok(())
    }

    fn on_mode_change(&mut self, id: NodeId, change: ModeChange) {
        debug_assert!(change.from.can_transition_to(change.to));
        self.gateway.reset_tracker(id);
        self.cloud.reset_tracker(id);
        let mut row = self.node_row(TraceKind::ModeChange, id);
        row.history = Some(HistorySnapshot::from(self.nodes[id.0 as usize].node.tracker()));
        self.trace.push(row);
    }

    /// Traces a lifecycle step and reacts to it: cycles stop when a node
    /// leaves WORKING and start when it enters; the gateway configures any
    /// node that unlocks and confirms any node that locks.
    fn after_transition(&mut self, id: NodeId, t: StateTransition) -> Result<(), SimError> {
        let row = self.node_row(TraceKind::StateTransition, id);
        self.trace.push(row);
        let delay = SimTime::from_millis(self.config.provisioning.stage_latency_ms);
        let rt = &mut self.nodes[id.0 as usize];
        if t.from == NodeState::Working || t.to == NodeState::Working {
            rt.epoch += 1;
            rt.steps.clear();
        }
        let epoch = rt.epoch;
        let gateway_cmd = match t.to {
            NodeState::Working => return self.schedule(self.now, Event::CycleStart { node: id, epoch }),
            NodeState::Unlocked => PropertyCommand::set(
                Device::Sensor(id),
                PropertyName::SleepPeriod,
                PropertyValue::U32(self.sleep_period_ms(id)),
            ),
            NodeState::Locked => PropertyCommand::set(
                Device::Sensor(id),
                PropertyName::State,
                PropertyValue::U32(NodeState::Working as u32),
            ),
            NodeState::Initial | NodeState::Idle => return Ok(()),
        };
        self.schedule(
            self.now + delay,
            Event::Deliver(Message {
                kind: MessageKind::PropertyCommand,
                src: Endpoint::Gateway,
                dst: Endpoint::Node(id),
                send_time: self.now,
                request_send_time: None,
                payload: Payload::Command(gateway_cmd),
            }),
        )
    }

    fn sleep_period_ms(&self, id: NodeId) -> u32 {
        self.sleep_targets.get(id.0 as usize).copied().unwrap_or(0)
    }

    fn service(&mut self, tier: InferenceMode) -> Result<(), SimError> {
        let Some((msg, more)) = self.tier_mut(tier).dequeue() else {
            return Ok(());
        };
        if more {
            let at = self.now + self.tier(tier).service_time();
            self.schedule(at, Event::ServiceDone { tier })?;
        }
        let q_t = self.tier(tier).queue_len();
        let Payload::Window(upload) = msg.payload else {
            return Ok(());
        };
        let node = endpoint_node(msg.src);
        let known = node.filter(|id| self.tier(tier).knows(*id) && (id.0 as usize) < self.nodes.len());
        let Some(id) = known else {
            let mut row = TraceRecord::new(self.now, node, TraceKind::UnknownNode);
            row.mode = Some(tier);
            row.queue_len = Some(q_t);
            self.trace.push(row);
            return Ok(());
        };

        let cfg = &self.config;
        let rt = &mut self.nodes[id.0 as usize];
        let truth = rt.truth.draw(upload.timestep);
        let pred = oracle::predict(
            cfg.oracle.profile(tier),
            tier,
            id,
            upload.timestep,
            truth,
            &cfg.oracle.anomaly_classes,
            &mut rt.oracle_rng[tier.index()],
        );
        let server = match tier {
            InferenceMode::C => &mut self.cloud,
            _ => &mut self.gateway,
        };
        let tracker = server.tracker_mut(id).expect("known node");
        tracker.record(pred.anomaly);
        let snapshot = HistorySnapshot::from(&*tracker);
        let b = upload.battery.percent();
        let verdict = if cfg.adaptive {
            heuristics::decide(tier, tracker, b, q_t, &cfg.heuristics)
        } else {
            tier
        };

        let mut row = TraceRecord::new(self.now, Some(id), TraceKind::Prediction);
        row.mode = Some(tier);
        row.history = Some(snapshot);
        row.queue_len = Some(q_t);
        row.battery = Some(upload.battery);
        self.trace.push(row);

        let (kind, trace_kind, command, class) = if verdict != tier {
            (MessageKind::ModeCommand, TraceKind::ModeCommand, Some(set_mode(id, verdict)), None)
        } else if cfg.network.respond_with == ResponseStyle::Prediction {
            (MessageKind::PredictionResponse, TraceKind::PredictionResponse, None, Some(pred.class))
        } else {
            (MessageKind::BlankResponse, TraceKind::BlankResponse, None, None)
        };
        let mut row = TraceRecord::new(self.now, Some(id), trace_kind);
        row.mode = Some(verdict);
        row.queue_len = Some(q_t);
        self.trace.push(row);

        let drop_p = cfg.network.drop_probability;
        let latency = cfg.latency.sample(tier, &mut rt.latency_rng);
        if drop_p > 0.0 && rt.link_rng.random::<f64>() < drop_p {
            let mut row = TraceRecord::new(self.now, Some(id), TraceKind::ResponseDropped);
            row.mode = Some(tier);
            self.trace.push(row);
            return Ok(());
        }
        self.schedule(
            self.now + latency,
            Event::Deliver(Message {
                kind,
                src: Endpoint::tier(tier),
                dst: Endpoint::Node(id),
                send_time: self.now,
                request_send_time: Some(msg.send_time),
                payload: Payload::Reply {
                    request: upload,
                    class,
                    command,
                },
            }),
        )
    }
}

fn endpoint_node(e: Endpoint) -> Option<NodeId> {
    match e {
        Endpoint::Node(id) => Some(id),
        _ => None,
    }
}

fn set_mode(id: NodeId, mode: InferenceMode) -> PropertyCommand {
    PropertyCommand::set(
        Device::Sensor(id),
        PropertyName::InferenceMode,
        PropertyValue::U8(mode as u8),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_node(config: SimConfig) -> Simulation {
        Simulation::new(config, &[NodeSpec::default()]).unwrap()
    }

    fn count(trace: &[TraceRecord], kind: TraceKind) -> usize {
        trace.iter().filter(|r| r.kind == kind).count()
    }

    #[test]
    fn empty_network_gives_empty_trace() {
        let mut sim = Simulation::new(SimConfig::default(), &[]).unwrap();
        sim.run_until(SimTime::from_millis(1_000_000)).unwrap();
        let out = sim.finish();
        assert!(out.trace.is_empty());
        assert_eq!(out.ledger.total(), crate::model::Energy::ZERO);
    }

    #[test]
    fn zero_duration_gives_empty_trace() {
        let mut sim = one_node(SimConfig::default());
        sim.run_until(SimTime::ZERO).unwrap();
        assert!(sim.finish().trace.is_empty());
    }

    #[test]
    fn scheduling_in_the_past_is_an_error() {
        let mut sim = one_node(SimConfig::default());
        sim.run_until(SimTime::from_millis(50)).unwrap();
        let err = sim
            .schedule(SimTime::from_millis(10), Event::ServiceDone { tier: InferenceMode::G })
            .unwrap_err();
        assert!(matches!(err, SimError::ScheduledInPast { .. }));
    }

    #[test]
    fn equal_timestamps_run_in_insertion_order() {
        let mut cfg = SimConfig::default();
        cfg.provisioning.enabled = false;
        let mut sim = Simulation::new(cfg, &[NodeSpec::default(), NodeSpec::default()]).unwrap();
        let at = SimTime::from_millis(5);
        for id in [1, 0, 1] {
            let cmd = PropertyCommand::get(Device::Sensor(NodeId(id)), PropertyName::State);
            sim.submit_command(at, cmd).unwrap();
        }
        sim.run_until(SimTime::from_millis(6)).unwrap();
        // S-mode nodes have their radios off, so commands queue in order
        let queued: Vec<_> = sim
            .trace()
            .iter()
            .filter(|r| r.kind == TraceKind::CommandQueued)
            .map(|r| r.node.unwrap().0)
            .collect();
        assert_eq!(queued, [1, 0, 1]);
    }

    #[test]
    fn thirty_minutes_of_back_to_back_windows() {
        let mut cfg = SimConfig::default();
        cfg.adaptive = false;
        cfg.poll = PollPolicy::DISABLED;
        let mut sim = one_node(cfg);
        sim.run_until(SimTime::from_millis(1_800_000)).unwrap();
        let out = sim.finish();
        let n = count(&out.trace, TraceKind::Prediction);
        assert!((179..=181).contains(&n), "{n}");
    }

    #[test]
    fn commissioning_reaches_working() {
        let mut sim = one_node(SimConfig::default());
        sim.run_until(SimTime::from_millis(1_000)).unwrap();
        let n = sim.node(NodeId(0)).unwrap();
        assert_eq!(n.state(), NodeState::Working);
        assert_eq!(sim.gateway_properties().provisioned_nodes, ["sensor-0"]);
        assert_eq!(count(sim.trace(), TraceKind::ProvisioningStage), 4);
        assert_eq!(count(sim.trace(), TraceKind::StateTransition), 3);
    }

    #[test]
    fn always_anomalous_climbs_to_cloud_and_stays() {
        let mut cfg = SimConfig::default();
        cfg.ground_truth.anomaly_probability = 1.0;
        let mut sim = one_node(cfg);
        sim.run_until(SimTime::from_millis(3_600_000)).unwrap();
        let out = sim.finish();
        let modes: Vec<_> = out
            .trace
            .iter()
            .filter(|r| r.kind == TraceKind::ModeChange)
            .map(|r| r.mode.unwrap())
            .collect();
        assert_eq!(modes, [InferenceMode::G, InferenceMode::C]);
    }

    #[test]
    fn remote_latency_is_the_configured_constant() {
        let mut cfg = SimConfig::default();
        cfg.adaptive = false;
        let spec = NodeSpec {
            mode: InferenceMode::C,
            ..NodeSpec::default()
        };
        let mut sim = Simulation::new(cfg, &[spec]).unwrap();
        sim.run_until(SimTime::from_millis(600_000)).unwrap();
        let out = sim.finish();
        assert!(!out.latencies.is_empty());
        for s in &out.latencies {
            assert_eq!(s.mode, InferenceMode::C);
            assert_eq!(s.latency, SimTime::from_micros(641_710));
        }
    }

    #[test]
    fn unknown_node_request_is_dropped_with_warning() {
        let mut sim = one_node(SimConfig::default());
        let upload = WindowUpload {
            id: 0,
            timestep: 0,
            mode: InferenceMode::G,
            battery: crate::model::BatteryLevel::FULL,
            size_bytes: 0,
        };
        let msg = Message {
            kind: MessageKind::PredictionRequest,
            src: Endpoint::Node(NodeId(7)),
            dst: Endpoint::Gateway,
            send_time: SimTime::ZERO,
            request_send_time: None,
            payload: Payload::Window(upload),
        };
        sim.schedule(SimTime::from_millis(1), Event::Deliver(msg)).unwrap();
        sim.run_until(SimTime::from_millis(2)).unwrap();
        assert_eq!(count(sim.trace(), TraceKind::UnknownNode), 1);
        assert_eq!(sim.tier(InferenceMode::G).queue_len(), 0);
    }
}
