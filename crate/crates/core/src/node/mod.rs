//! Sensor node behavior: lifecycle state machine, property handling and the
//! sleep/active duty cycle.

mod property;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use property::{
    DataType, Device, DeviceKind, Method, PropertyCommand, PropertyName, PropertyResponse,
    PropertyValue,
};

use crate::energy::{self, DebitOutcome, EnergyLedger, EnergyTable, Operation};
use crate::error::{ConfigError, ProtocolViolation};
use crate::model::{AnomalyTracker, BatteryState, Energy, InferenceMode, NodeId, NodeState, SimTime};

/// Events that move a node between lifecycle states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LifecycleEvent {
    ProvisioningComplete,
    PropertiesUpdated,
    ConfigConfirm,
    ConfigReject,
    IdleCommand,
    ResetCommand,
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 6] = [
        LifecycleEvent::ProvisioningComplete,
        LifecycleEvent::PropertiesUpdated,
        LifecycleEvent::ConfigConfirm,
        LifecycleEvent::ConfigReject,
        LifecycleEvent::IdleCommand,
        LifecycleEvent::ResetCommand,
    ];
}

/// The six legal lifecycle edges. Everything else is a protocol violation.
pub fn next_state(state: NodeState, event: LifecycleEvent) -> Option<NodeState> {
    use LifecycleEvent::*;
    use NodeState::*;
    match (state, event) {
        (Initial, ProvisioningComplete) => Some(Unlocked),
        (Unlocked, PropertiesUpdated) => Some(Locked),
        (Locked, ConfigConfirm) => Some(Working),
        (Locked, ConfigReject) => Some(Unlocked),
        (Working, IdleCommand) => Some(Idle),
        (Idle, ResetCommand) => Some(Unlocked),
        _ => None,
    }
}

/// The event that takes `from` to `to`, if that edge exists.
pub fn event_between(from: NodeState, to: NodeState) -> Option<LifecycleEvent> {
    LifecycleEvent::ALL
        .into_iter()
        .find(|e| next_state(from, *e) == Some(to))
}

/// Stages of the provisioning handshake. No cryptography is modeled; each
/// stage is a timed message exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProvisioningStage {
    DeviceDiscovery,
    SessionEstablishment,
    Configuration,
    ConnectionTermination,
}

impl ProvisioningStage {
    pub const ALL: [ProvisioningStage; 4] = [
        ProvisioningStage::DeviceDiscovery,
        ProvisioningStage::SessionEstablishment,
        ProvisioningStage::Configuration,
        ProvisioningStage::ConnectionTermination,
    ];

    pub fn next(self) -> Option<ProvisioningStage> {
        let i = ProvisioningStage::ALL.iter().position(|s| *s == self)?;
        ProvisioningStage::ALL.get(i + 1).copied()
    }
}

/// How often a node in S mode wakes its radio to fetch queued commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PollPolicy {
    /// Poll on every k-th S-mode cycle; 0 disables polling.
    pub every_cycles: u32,
    /// Share of one radio transmission (energy and duration) spent on a poll
    /// that finds nothing queued. A poll with queued commands costs a full
    /// transmission worth of energy.
    pub empty_fraction: f64,
}

impl Default for PollPolicy {
    fn default() -> Self {
        PollPolicy {
            every_cycles: 3,
            empty_fraction: 0.1,
        }
    }
}

impl PollPolicy {
    pub const DISABLED: PollPolicy = PollPolicy {
        every_cycles: 0,
        empty_fraction: 0.1,
    };

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.empty_fraction) {
            return Err(ConfigError::invalid("poll.empty_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    fn duration(&self, table: &EnergyTable) -> SimTime {
        SimTime::from_millis_f64(table.radio_tx.duration_ms as f64 * self.empty_fraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateTransition {
    pub from: NodeState,
    pub to: NodeState,
    pub event: LifecycleEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeChange {
    pub from: InferenceMode,
    pub to: InferenceMode,
}

/// Everything a property command did to a node.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub response: PropertyResponse,
    pub transition: Option<StateTransition>,
    pub mode_change: Option<ModeChange>,
}

impl CommandOutcome {
    fn reply(response: PropertyResponse) -> Self {
        CommandOutcome {
            response,
            transition: None,
            mode_change: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedOp {
    pub op: Operation,
    pub start: SimTime,
    pub end: SimTime,
}

impl PlannedOp {
    fn after(op: Operation, cursor: &mut SimTime, duration: SimTime) -> Self {
        let start = *cursor;
        *cursor = start + duration;
        PlannedOp {
            op,
            start,
            end: *cursor,
        }
    }
}

/// Timeline of one duty cycle, fixed when the cycle starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclePlan {
    pub index: u64,
    pub mode: InferenceMode,
    pub start: SimTime,
    pub ops: Vec<PlannedOp>,
    pub end: SimTime,
}

impl CyclePlan {
    pub fn duration(&self) -> SimTime {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleError {
    NotWorking(NodeState),
    BatteryDead,
}

/// Outcome of running a whole cycle synchronously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleReport {
    pub plan: CyclePlan,
    /// Number of operations that ran; fewer than planned if the battery died.
    pub completed: usize,
    pub died_at: Option<SimTime>,
}

pub const DEFAULT_SLEEP_PERIOD_MS: u32 = 30_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNode {
    pub id: NodeId,
    state: NodeState,
    mode: InferenceMode,
    tracker: AnomalyTracker,
    pub battery: BatteryState,
    sleep_period_ms: u32,
    sensor_id: String,
    tf_model_size: u32,
    tf_model_bytes: u32,
    pending: VecDeque<PropertyCommand>,
    cycles: u64,
}

impl SensorNode {
    pub fn new(
        id: NodeId,
        mode: InferenceMode,
        history_depth: u32,
        battery: BatteryState,
    ) -> Result<Self, ConfigError> {
        Ok(SensorNode {
            id,
            state: NodeState::Initial,
            mode,
            tracker: AnomalyTracker::new(history_depth)?,
            battery,
            sleep_period_ms: DEFAULT_SLEEP_PERIOD_MS,
            sensor_id: format!("sensor-{}", id.0),
            tf_model_size: 0,
            tf_model_bytes: 0,
            pending: VecDeque::new(),
            cycles: 0,
        })
    }

    /// Skips commissioning: the node starts in WORKING.
    pub fn commissioned(mut self, sleep_period_ms: u32) -> Self {
        self.state = NodeState::Working;
        self.sleep_period_ms = sleep_period_ms;
        self
    }

    pub fn state(&self) -> NodeState {
        self.state
    }

    pub fn mode(&self) -> InferenceMode {
        self.mode
    }

    pub fn tracker(&self) -> &AnomalyTracker {
        &self.tracker
    }

    pub fn sleep_period(&self) -> SimTime {
        SimTime::from_millis(self.sleep_period_ms as u64)
    }

    pub fn cycles_started(&self) -> u64 {
        self.cycles
    }

    pub fn pending_commands(&self) -> usize {
        self.pending.len()
    }

    pub fn is_dead(&self) -> bool {
        self.battery.is_depleted()
    }

    /// Records an on-device prediction in the node's own history.
    pub fn record_prediction(&mut self, anomaly: bool) {
        self.tracker.record(anomaly);
    }

    pub fn step_state_machine(
        &mut self,
        event: LifecycleEvent,
    ) -> Result<StateTransition, ProtocolViolation> {
        match next_state(self.state, event) {
            Some(to) => {
                let t = StateTransition {
                    from: self.state,
                    to,
                    event,
                };
                self.state = to;
                Ok(t)
            }
            None => Err(ProtocolViolation {
                state: self.state,
                event,
            }),
        }
    }

    /// Queues a command until the next radio wake.
    pub fn enqueue_command(&mut self, cmd: PropertyCommand) {
        self.pending.push_back(cmd);
    }

    pub fn take_pending(&mut self) -> Vec<PropertyCommand> {
        self.pending.drain(..).collect()
    }

    /// Whether the radio is listening right now. Only an S-mode node in
    /// WORKING keeps it off between polls.
    pub fn radio_listening(&self) -> bool {
        !(self.state == NodeState::Working && self.mode == InferenceMode::S)
    }

    pub fn apply_property_command(&mut self, cmd: &PropertyCommand) -> CommandOutcome {
        if cmd.target != Device::Sensor(self.id) {
            return CommandOutcome::reply(PropertyResponse::WrongTarget(cmd.property));
        }
        if let Err(resp) = cmd.check(DeviceKind::Sensor) {
            return CommandOutcome::reply(resp);
        }
        if cmd.method == Method::Get {
            let v = match cmd.property {
                PropertyName::SensorId => PropertyValue::Text(self.sensor_id.clone()),
                PropertyName::SleepPeriod => PropertyValue::U32(self.sleep_period_ms),
                PropertyName::State => PropertyValue::U32(self.state as u32),
                PropertyName::InferenceMode => PropertyValue::U8(self.mode as u8),
                other => unreachable!("{other} has no GET on a sensor"),
            };
            return CommandOutcome::reply(PropertyResponse::Value(v));
        }

        let value = cmd.value.as_ref().expect("checked");
        let mut out = CommandOutcome::reply(PropertyResponse::Ok);
        match (cmd.property, value) {
            (PropertyName::State, PropertyValue::U32(raw)) => {
                let Some(target) = NodeState::from_u32(*raw) else {
                    return CommandOutcome::reply(PropertyResponse::InvalidValue(
                        cmd.property,
                        format!("no state with code {raw}"),
                    ));
                };
                // SET state names the destination; the edge supplies the event
                let event = event_between(self.state, target);
                match event.map(|e| self.step_state_machine(e)) {
                    Some(Ok(t)) => out.transition = Some(t),
                    Some(Err(v)) => out.response = PropertyResponse::Violation(v),
                    None => {
                        out.response = PropertyResponse::Violation(ProtocolViolation {
                            state: self.state,
                            event: implied_event(target),
                        })
                    }
                }
                return out;
            }
            (PropertyName::InferenceMode, PropertyValue::U8(raw)) => {
                let Some(to) = InferenceMode::from_u8(*raw) else {
                    return CommandOutcome::reply(PropertyResponse::InvalidValue(
                        cmd.property,
                        format!("no inference mode with code {raw}"),
                    ));
                };
                if !self.mode.can_transition_to(to) {
                    return CommandOutcome::reply(PropertyResponse::InvalidValue(
                        cmd.property,
                        format!("no direct transition from {} to {to}", self.mode),
                    ));
                }
                if to != self.mode {
                    out.mode_change = Some(ModeChange {
                        from: self.mode,
                        to,
                    });
                    self.mode = to;
                    self.tracker.reset();
                }
            }
            (PropertyName::SleepPeriod, PropertyValue::U32(ms)) => self.sleep_period_ms = *ms,
            (PropertyName::TfModelSize, PropertyValue::U32(n)) => self.tf_model_size = *n,
            (PropertyName::TfModelBytes, PropertyValue::Blob(n)) => self.tf_model_bytes = *n,
            _ => unreachable!("type checked"),
        }
        if self.state == NodeState::Unlocked {
            out.transition = self.step_state_machine(LifecycleEvent::PropertiesUpdated).ok();
        }
        out
    }

    /// Lays out the next duty cycle starting at `now`: the sleep phase, a
    /// sample window, then on-device inference (S) or compress-and-transmit
    /// (G, C). An S-mode cycle ends with a command poll when one is due.
    pub fn run_cycle(
        &mut self,
        now: SimTime,
        table: &EnergyTable,
        poll: &PollPolicy,
    ) -> Result<CyclePlan, CycleError> {
        let (index, mut ops) = self.begin_cycle(now, table)?;
        let sampled = ops.last().map_or(now, |o| o.end);
        ops.extend(self.plan_processing(index, sampled, table, poll));
        Ok(CyclePlan {
            index,
            mode: self.mode,
            start: now,
            end: ops.last().map_or(now, |o| o.end),
            ops,
        })
    }

    /// First half of a cycle: sleep (skipped when the period is zero) and the
    /// sample window. Returns the cycle index and the two steps.
    pub fn begin_cycle(
        &mut self,
        now: SimTime,
        table: &EnergyTable,
    ) -> Result<(u64, Vec<PlannedOp>), CycleError> {
        if self.is_dead() {
            return Err(CycleError::BatteryDead);
        }
        if self.state != NodeState::Working {
            return Err(CycleError::NotWorking(self.state));
        }
        let index = self.cycles;
        self.cycles += 1;
        let mut ops = Vec::with_capacity(2);
        let mut t = now;
        if self.sleep_period_ms > 0 {
            ops.push(PlannedOp::after(Operation::Sleep, &mut t, self.sleep_period()));
        }
        ops.push(PlannedOp::after(Operation::Sampling, &mut t, table.sampling.duration()));
        Ok((index, ops))
    }

    /// Second half of cycle `index`, starting at `now`, in the node's current
    /// mode.
    pub fn plan_processing(
        &self,
        index: u64,
        now: SimTime,
        table: &EnergyTable,
        poll: &PollPolicy,
    ) -> Vec<PlannedOp> {
        let mut t = now;
        let mut ops: Vec<PlannedOp> = table
            .active_phase(self.mode)
            .iter()
            .filter(|op| **op != Operation::Sampling)
            .map(|op| {
                let dur = table.fixed_cost(*op).expect("active ops are fixed").duration();
                PlannedOp::after(*op, &mut t, dur)
            })
            .collect();
        let poll_due = self.mode == InferenceMode::S
            && poll.every_cycles > 0
            && (index + 1) % poll.every_cycles as u64 == 0;
        if poll_due {
            ops.push(PlannedOp::after(Operation::CommandPoll, &mut t, poll.duration(table)));
        }
        ops
    }

    /// Charges one planned operation to the battery at its completion time.
    pub fn perform(
        &mut self,
        step: &PlannedOp,
        table: &EnergyTable,
        poll: &PollPolicy,
        ledger: &mut EnergyLedger,
    ) -> DebitOutcome {
        let energy = match step.op {
            Operation::Sleep => table.sleep_energy(step.end - step.start),
            Operation::CommandPoll => {
                let radio = table.radio_tx.energy();
                if self.pending.is_empty() {
                    Energy::from_nanojoules(
                        (radio.as_nanojoules() as f64 * poll.empty_fraction).round() as u64,
                    )
                } else {
                    radio
                }
            }
            op => table.fixed_cost(op).expect("fixed").energy(),
        };
        energy::debit_energy(&mut self.battery, ledger, step.end, self.id, step.op, energy)
    }

    /// Plans and performs a whole cycle, stopping early if the battery dies.
    pub fn execute_cycle(
        &mut self,
        now: SimTime,
        table: &EnergyTable,
        poll: &PollPolicy,
        ledger: &mut EnergyLedger,
    ) -> Result<CycleReport, CycleError> {
        let plan = self.run_cycle(now, table, poll)?;
        let mut completed = 0;
        let mut died_at = None;
        for step in &plan.ops {
            completed += 1;
            if self.perform(step, table, poll, ledger) == DebitOutcome::Dead {
                died_at = Some(step.end);
                break;
            }
        }
        Ok(CycleReport {
            plan,
            completed,
            died_at,
        })
    }
}

fn implied_event(target: NodeState) -> LifecycleEvent {
    match target {
        NodeState::Initial | NodeState::Unlocked => LifecycleEvent::ResetCommand,
        NodeState::Locked => LifecycleEvent::PropertiesUpdated,
        NodeState::Working => LifecycleEvent::ConfigConfirm,
        NodeState::Idle => LifecycleEvent::IdleCommand,
    }
}
