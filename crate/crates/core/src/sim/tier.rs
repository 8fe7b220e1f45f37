use std::collections::{BTreeMap, VecDeque};

use crate::error::ConfigError;
use crate::model::{AnomalyTracker, InferenceMode, NodeId, SimTime};
use crate::node::{Device, DeviceKind, Method, PropertyCommand, PropertyName, PropertyResponse, PropertyValue};
use crate::sim::Message;

/// A remote inference tier: a FIFO single-server queue plus one anomaly
/// history per node.
#[derive(Debug, Clone)]
pub struct TierServer {
    pub tier: InferenceMode,
    queue: VecDeque<Message>,
    busy: bool,
    service_time: SimTime,
    depth: u32,
    trackers: BTreeMap<NodeId, AnomalyTracker>,
    enqueued: u64,
    serviced: u64,
}

impl TierServer {
    pub fn new(tier: InferenceMode, depth: u32, service_time: SimTime) -> Result<Self, ConfigError> {
        AnomalyTracker::new(depth)?;
        Ok(TierServer {
            tier,
            queue: VecDeque::new(),
            busy: false,
            service_time,
            depth,
            trackers: BTreeMap::new(),
            enqueued: 0,
            serviced: 0,
        })
    }

    pub fn register(&mut self, node: NodeId) {
        self.trackers
            .insert(node, AnomalyTracker::new(self.depth).expect("validated depth"));
    }

    pub fn knows(&self, node: NodeId) -> bool {
        self.trackers.contains_key(&node)
    }

    pub fn tracker(&self, node: NodeId) -> Option<&AnomalyTracker> {
        self.trackers.get(&node)
    }

    pub(crate) fn tracker_mut(&mut self, node: NodeId) -> Option<&mut AnomalyTracker> {
        self.trackers.get_mut(&node)
    }

    pub fn reset_tracker(&mut self, node: NodeId) {
        if let Some(t) = self.trackers.get_mut(&node) {
            t.reset();
        }
    }

    /// Current queue length q_t.
    pub fn queue_len(&self) -> u32 {
        self.queue.len() as u32
    }

    pub fn enqueued(&self) -> u64 {
        self.enqueued
    }

    pub fn serviced(&self) -> u64 {
        self.serviced
    }

    pub fn service_time(&self) -> SimTime {
        self.service_time
    }

    /// Queues a request. Returns true when the server was idle and a service
    /// completion must be scheduled.
    pub(crate) fn enqueue(&mut self, msg: Message) -> bool {
        self.queue.push_back(msg);
        self.enqueued += 1;
        if self.busy {
            false
        } else {
            self.busy = true;
            true
        }
    }

    /// Takes the request at the head of the queue. The second value says
    /// whether more work remains.
    pub(crate) fn dequeue(&mut self) -> Option<(Message, bool)> {
        let msg = self.queue.pop_front()?;
        self.serviced += 1;
        let more = !self.queue.is_empty();
        if !more {
            self.busy = false;
        }
        Some((msg, more))
    }
}

/// Gateway-side device properties.
#[derive(Debug, Clone, Default)]
pub struct GatewayProperties {
    pub gateway_id: String,
    pub provisioned_nodes: Vec<String>,
    pub tf_model_size: u32,
    pub tf_model_bytes: u32,
}

impl GatewayProperties {
    pub fn new(gateway_id: impl Into<String>) -> Self {
        GatewayProperties {
            gateway_id: gateway_id.into(),
            ..Default::default()
        }
    }

    pub fn apply(&mut self, cmd: &PropertyCommand) -> PropertyResponse {
        if cmd.target != Device::Gateway {
            return PropertyResponse::WrongTarget(cmd.property);
        }
        if let Err(resp) = cmd.check(DeviceKind::Gateway) {
            return resp;
        }
        match (cmd.property, cmd.method, cmd.value.clone()) {
            (PropertyName::GatewayId, Method::Get, _) => {
                PropertyResponse::Value(PropertyValue::Text(self.gateway_id.clone()))
            }
            (PropertyName::ProvisionedNodes, Method::Get, _) => {
                PropertyResponse::Value(PropertyValue::TextList(self.provisioned_nodes.clone()))
            }
            (PropertyName::ProvisionedNodes, Method::Set, Some(PropertyValue::TextList(v))) => {
                self.provisioned_nodes = v;
                PropertyResponse::Ok
            }
            (PropertyName::ProvisionedNodes, Method::Add, Some(PropertyValue::Text(s))) => {
                if !self.provisioned_nodes.contains(&s) {
                    self.provisioned_nodes.push(s);
                }
                PropertyResponse::Ok
            }
            (PropertyName::TfModelSize, Method::Set, Some(PropertyValue::U32(n))) => {
                self.tf_model_size = n;
                PropertyResponse::Ok
            }
            (PropertyName::TfModelBytes, Method::Set, Some(PropertyValue::Blob(n))) => {
                self.tf_model_bytes = n;
                PropertyResponse::Ok
            }
            (p, m, _) => unreachable!("{m} {p} passed check"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gateway_property_table() {
        let mut g = GatewayProperties::new("gw-0");
        let add = PropertyCommand::add(Device::Gateway, PropertyName::ProvisionedNodes, PropertyValue::Text("sensor-0".into()));
        assert_eq!(g.apply(&add), PropertyResponse::Ok);
        assert_eq!(g.apply(&add), PropertyResponse::Ok);
        assert_eq!(
            g.apply(&PropertyCommand::get(Device::Gateway, PropertyName::ProvisionedNodes)),
            PropertyResponse::Value(PropertyValue::TextList(vec!["sensor-0".into()]))
        );
        let set_id = PropertyCommand::set(Device::Gateway, PropertyName::GatewayId, PropertyValue::Text("x".into()));
        assert_eq!(g.apply(&set_id), PropertyResponse::MethodNotAllowed(PropertyName::GatewayId, Method::Set));
        let sleep = PropertyCommand::get(Device::Gateway, PropertyName::SleepPeriod);
        assert_eq!(g.apply(&sleep), PropertyResponse::WrongTarget(PropertyName::SleepPeriod));
    }

    #[test]
    fn queue_counts() {
        use crate::sim::{Endpoint, MessageKind, Payload};
        let mut t = TierServer::new(InferenceMode::G, 16, SimTime::ZERO).unwrap();
        let msg = Message {
            kind: MessageKind::PropertyCommand,
            src: Endpoint::Operator,
            dst: Endpoint::Gateway,
            send_time: SimTime::ZERO,
            request_send_time: None,
            payload: Payload::Command(PropertyCommand::get(Device::Gateway, PropertyName::GatewayId)),
        };
        assert!(t.enqueue(msg.clone()));
        assert!(!t.enqueue(msg));
        assert_eq!(t.queue_len(), 2);
        assert!(t.dequeue().unwrap().1);
        assert!(!t.dequeue().unwrap().1);
        assert_eq!(t.enqueued() - t.serviced(), t.queue_len() as u64);
        assert!(t.dequeue().is_none());
    }
}
