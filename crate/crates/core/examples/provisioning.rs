//! Node lifecycle and device properties, first by hand and then through the
//! engine's commissioning sequence.
//!
//! Run with `cargo run --example provisioning`.

use tiersim::node::{Device, LifecycleEvent, PropertyCommand, PropertyName, PropertyValue, SensorNode};
use tiersim::sim::{NodeSpec, SimConfig, Simulation, TraceKind};
use tiersim::{BatteryState, InferenceMode, NodeId, NodeState, SimTime};

fn main() {
    let id = NodeId(0);
    let mut node = SensorNode::new(id, InferenceMode::S, 32, BatteryState::default()).unwrap();
    println!("start: {}", node.state());

    // out-of-order events are rejected and leave the state alone
    let err = node.step_state_machine(LifecycleEvent::ConfigConfirm).unwrap_err();
    println!("confirm too early: {err}");

    node.step_state_machine(LifecycleEvent::ProvisioningComplete).unwrap();
    let sleep = PropertyCommand::set(Device::Sensor(id), PropertyName::SleepPeriod, PropertyValue::U32(30_000));
    let out = node.apply_property_command(&sleep);
    println!("SET sleep_period: {:?}, now {}", out.response, node.state());

    let confirm = PropertyCommand::set(
        Device::Sensor(id),
        PropertyName::State,
        PropertyValue::U32(NodeState::Working as u32),
    );
    node.apply_property_command(&confirm);
    println!("SET state=WORKING: now {}", node.state());

    let set_id = PropertyCommand::set(Device::Sensor(id), PropertyName::SensorId, PropertyValue::Text("x".into()));
    println!("SET sensor_id: {:?}", node.apply_property_command(&set_id).response);
    let get_id = PropertyCommand::get(Device::Sensor(id), PropertyName::SensorId);
    println!("GET sensor_id: {:?}", node.apply_property_command(&get_id).response);

    // the engine runs the same handshake for every node
    let mut sim = Simulation::new(SimConfig::default(), &[NodeSpec::default(); 2]).unwrap();
    sim.run_until(SimTime::from_millis(1_000)).unwrap();
    println!();
    for r in sim.trace() {
        if matches!(r.kind, TraceKind::ProvisioningStage | TraceKind::StateTransition | TraceKind::PropertyCommand) {
            let who = r.node.map_or("gateway".to_string(), |n| format!("node {n}"));
            let state = r.state.map_or(String::new(), |s| s.to_string());
            println!("{:>9} ms  {who:<8} {:<20} {state}", r.time.to_string(), r.kind.as_str());
        }
    }
    println!("provisioned: {:?}", sim.gateway_properties().provisioned_nodes);
}
