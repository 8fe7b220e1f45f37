use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::model::{InferenceMode, NodeId, SimTime};
use crate::sim::Message;

/// End-to-end response latency per inference mode: a constant plus
/// optional zero-mean uniform jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub sensor_ms: f64,
    pub gateway_ms: f64,
    pub cloud_ms: f64,
    /// Half-widths of the uniform jitter, per mode.
    pub sensor_jitter_ms: f64,
    pub gateway_jitter_ms: f64,
    pub cloud_jitter_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            sensor_ms: 3.33,
            gateway_ms: 148.15,
            cloud_ms: 641.71,
            sensor_jitter_ms: 0.0,
            gateway_jitter_ms: 0.0,
            cloud_jitter_ms: 0.0,
        }
    }
}

impl LatencyModel {
    /// Sets every jitter half-width to `fraction` of that mode's mean.
    pub fn with_relative_jitter(mut self, fraction: f64) -> Self {
        self.sensor_jitter_ms = self.sensor_ms * fraction;
        self.gateway_jitter_ms = self.gateway_ms * fraction;
        self.cloud_jitter_ms = self.cloud_ms * fraction;
        self
    }

    pub fn mean_ms(&self, mode: InferenceMode) -> f64 {
        match mode {
            InferenceMode::S => self.sensor_ms,
            InferenceMode::G => self.gateway_ms,
            InferenceMode::C => self.cloud_ms,
        }
    }

    pub fn jitter_ms(&self, mode: InferenceMode) -> f64 {
        match mode {
            InferenceMode::S => self.sensor_jitter_ms,
            InferenceMode::G => self.gateway_jitter_ms,
            InferenceMode::C => self.cloud_jitter_ms,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for mode in InferenceMode::ALL {
            let (mean, jitter) = (self.mean_ms(mode), self.jitter_ms(mode));
            if !(mean > 0.0) || !mean.is_finite() {
                return Err(ConfigError::invalid(
                    format!("latency.{}", field_prefix(mode)),
                    "latency must be positive",
                ));
            }
            if !(jitter >= 0.0) || jitter >= mean {
                return Err(ConfigError::invalid(
                    format!("latency.{}_jitter_ms", prefix(mode)),
                    "jitter must be non-negative and below the mean",
                ));
            }
        }
        Ok(())
    }

    /// Draws one latency. With zero jitter no randomness is consumed.
    pub fn sample<R: Rng + ?Sized>(&self, mode: InferenceMode, rng: &mut R) -> SimTime {
        let mean = self.mean_ms(mode);
        let jitter = self.jitter_ms(mode);
        let ms = if jitter > 0.0 {
            mean + rng.random_range(-jitter..=jitter)
        } else {
            mean
        };
        SimTime::from_millis_f64(ms)
    }
}

fn prefix(mode: InferenceMode) -> &'static str {
    match mode {
        InferenceMode::S => "sensor",
        InferenceMode::G => "gateway",
        InferenceMode::C => "cloud",
    }
}

fn field_prefix(mode: InferenceMode) -> String {
    format!("{}_ms", prefix(mode))
}

/// Round trip as seen by the node: arrival time minus the request send time
/// echoed in the response.
pub fn measure_latency(node: NodeId, response: &Message, now: SimTime) -> Result<SimTime, SimError> {
    let sent = response.request_send_time.unwrap_or(response.send_time);
    now.checked_sub(sent)
        .ok_or(SimError::NegativeLatency { node, now, sent })
}
