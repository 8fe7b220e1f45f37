//! Device properties: named, typed attributes gated by method and target
//! device type.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ProtocolViolation;
use crate::model::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Set,
    Get,
    Add,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Set => "SET",
            Method::Get => "GET",
            Method::Add => "ADD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceKind {
    Gateway,
    Sensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    /// Opaque model blob; only its length is tracked.
    Blob,
    U32,
    U8,
    Text,
    TextList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyName {
    TfModelBytes,
    TfModelSize,
    ProvisionedNodes,
    GatewayId,
    SensorId,
    SleepPeriod,
    State,
    InferenceMode,
}

impl PropertyName {
    pub const ALL: [PropertyName; 8] = [
        PropertyName::TfModelBytes,
        PropertyName::TfModelSize,
        PropertyName::ProvisionedNodes,
        PropertyName::GatewayId,
        PropertyName::SensorId,
        PropertyName::SleepPeriod,
        PropertyName::State,
        PropertyName::InferenceMode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PropertyName::TfModelBytes => "tf_model_bytes",
            PropertyName::TfModelSize => "tf_model_size",
            PropertyName::ProvisionedNodes => "provisioned_nodes",
            PropertyName::GatewayId => "gateway_id",
            PropertyName::SensorId => "sensor_id",
            PropertyName::SleepPeriod => "sleep_period",
            PropertyName::State => "state",
            PropertyName::InferenceMode => "inference_mode",
        }
    }

    pub fn allowed_methods(self) -> &'static [Method] {
        use Method::*;
        match self {
            PropertyName::TfModelBytes | PropertyName::TfModelSize => &[Set],
            PropertyName::ProvisionedNodes => &[Set, Get, Add],
            PropertyName::GatewayId | PropertyName::SensorId => &[Get],
            PropertyName::SleepPeriod | PropertyName::State | PropertyName::InferenceMode => {
                &[Set, Get]
            }
        }
    }

    pub fn allows(self, method: Method) -> bool {
        self.allowed_methods().contains(&method)
    }

    pub fn targets(self) -> &'static [DeviceKind] {
        match self {
            PropertyName::TfModelBytes | PropertyName::TfModelSize => {
                &[DeviceKind::Gateway, DeviceKind::Sensor]
            }
            PropertyName::ProvisionedNodes | PropertyName::GatewayId => &[DeviceKind::Gateway],
            _ => &[DeviceKind::Sensor],
        }
    }

    pub fn data_type(self) -> DataType {
        match self {
            PropertyName::TfModelBytes => DataType::Blob,
            PropertyName::TfModelSize | PropertyName::SleepPeriod | PropertyName::State => {
                DataType::U32
            }
            PropertyName::ProvisionedNodes => DataType::TextList,
            PropertyName::GatewayId | PropertyName::SensorId => DataType::Text,
            PropertyName::InferenceMode => DataType::U8,
        }
    }
}

impl fmt::Display for PropertyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropertyName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PropertyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown property `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropertyValue {
    /// Length in bytes of an opaque payload.
    Blob(u32),
    U32(u32),
    U8(u8),
    Text(String),
    TextList(Vec<String>),
}

impl PropertyValue {
    pub fn data_type(&self) -> DataType {
        match self {
            PropertyValue::Blob(_) => DataType::Blob,
            PropertyValue::U32(_) => DataType::U32,
            PropertyValue::U8(_) => DataType::U8,
            PropertyValue::Text(_) => DataType::Text,
            PropertyValue::TextList(_) => DataType::TextList,
        }
    }
}

impl fmt::Display for PropertyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyValue::Blob(n) => write!(f, "<{n} bytes>"),
            PropertyValue::U32(v) => write!(f, "{v}"),
            PropertyValue::U8(v) => write!(f, "{v}"),
            PropertyValue::Text(s) => f.write_str(s),
            PropertyValue::TextList(v) => write!(f, "[{}]", v.join(";")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Device {
    Gateway,
    Sensor(NodeId),
}

impl Device {
    pub fn kind(self) -> DeviceKind {
        match self {
            Device::Gateway => DeviceKind::Gateway,
            Device::Sensor(_) => DeviceKind::Sensor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyCommand {
    pub target: Device,
    pub property: PropertyName,
    pub method: Method,
    pub value: Option<PropertyValue>,
}

impl PropertyCommand {
    pub fn set(target: Device, property: PropertyName, value: PropertyValue) -> Self {
        PropertyCommand {
            target,
            property,
            method: Method::Set,
            value: Some(value),
        }
    }

    pub fn get(target: Device, property: PropertyName) -> Self {
        PropertyCommand {
            target,
            property,
            method: Method::Get,
            value: None,
        }
    }

    pub fn add(target: Device, property: PropertyName, value: PropertyValue) -> Self {
        PropertyCommand {
            target,
            property,
            method: Method::Add,
            value: Some(value),
        }
    }

    /// Checks method and target against the property table and the value
    /// against the property's data type.
    pub fn check(&self, device: DeviceKind) -> Result<(), PropertyResponse> {
        if !self.property.targets().contains(&device) || self.target.kind() != device {
            return Err(PropertyResponse::WrongTarget(self.property));
        }
        if !self.property.allows(self.method) {
            return Err(PropertyResponse::MethodNotAllowed(self.property, self.method));
        }
        match (&self.method, &self.value) {
            (Method::Get, _) => Ok(()),
            (_, None) => Err(PropertyResponse::InvalidValue(self.property, "missing value".into())),
            (Method::Add, Some(PropertyValue::Text(_))) => Ok(()),
            (Method::Add, Some(_)) => Err(PropertyResponse::InvalidValue(
                self.property,
                "ADD takes a single text entry".into(),
            )),
            (Method::Set, Some(v)) if v.data_type() == self.property.data_type() => Ok(()),
            (Method::Set, Some(v)) => Err(PropertyResponse::InvalidValue(
                self.property,
                format!("expected {:?}, got {:?}", self.property.data_type(), v.data_type()),
            )),
        }
    }
}

impl fmt::Display for PropertyCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.method, self.property)?;
        if let Some(v) = &self.value {
            write!(f, "={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropertyResponse {
    Ok,
    Value(PropertyValue),
    MethodNotAllowed(PropertyName, Method),
    WrongTarget(PropertyName),
    InvalidValue(PropertyName, String),
    Violation(ProtocolViolation),
}

impl PropertyResponse {
    pub fn is_ok(&self) -> bool {
        matches!(self, PropertyResponse::Ok | PropertyResponse::Value(_))
    }
}
