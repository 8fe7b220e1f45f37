use crate::model::{BatteryLevel, ConditionClass, InferenceMode, NodeId, SimTime};
use crate::node::{PropertyCommand, ProvisioningStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    PredictionRequest,
    PredictionResponse,
    BlankResponse,
    ModeCommand,
    PropertyCommand,
    PropertyResponse,
    ProvisioningStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Node(NodeId),
    Gateway,
    Cloud,
    Operator,
}

impl Endpoint {
    pub fn tier(mode: InferenceMode) -> Endpoint {
        match mode {
            InferenceMode::S => panic!("sensor tier is on the node"),
            InferenceMode::G => Endpoint::Gateway,
            InferenceMode::C => Endpoint::Cloud,
        }
    }
}

/// A compressed sample window sent up for remote inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowUpload {
    pub id: u64,
    pub timestep: u64,
    pub mode: InferenceMode,
    pub battery: BatteryLevel,
    /// Compressed size in bytes.
    pub size_bytes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Window(WindowUpload),
    /// Reply to a window; `request` is the upload being answered.
    Reply {
        request: WindowUpload,
        class: Option<ConditionClass>,
        command: Option<PropertyCommand>,
    },
    Command(PropertyCommand),
    Stage(ProvisioningStage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub send_time: SimTime,
    /// Send time of the request a response answers.
    pub request_send_time: Option<SimTime>,
    pub payload: Payload,
}

impl Message {
    pub fn is_response(&self) -> bool {
        matches!(
            self.kind,
            MessageKind::PredictionResponse | MessageKind::BlankResponse | MessageKind::ModeCommand
        )
    }
}
