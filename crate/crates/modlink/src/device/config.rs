//! Simulator configuration files (TOML).
//!
//! ```toml
//! protocol_version = 1        # optional, defaults shown
//! firmware_version = 256
//! capabilities = "all"        # or a list: ["lm35", "push-button"]
//!
//! [[extensions]]              # user-defined module types, ids 0x40..=0x7F
//! id = 64
//! name = "gyro-x"
//! direction = "sensor"
//! kind = "scalar"
//! pin_count = 1
//! unit = "mdeg/s"
//! scale = [250, 1]            # milli-units = raw * 250 / 1
//!
//! [[channels]]                # pre-attached channels, ids assigned 0.. in order
//! module = "lm35"             # catalog name, extension name, or numeric id
//! pins = ["A0"]               # "A0".."A7" map to 0xA0..0xA7; integers pass through
//! signal = { type = "constant", raw = 205 }
//! ```
//!
//! Signal tables take the shapes of [`SignalSource`]: `constant { raw }`,
//! `sine { min, max, period_ms }`, `step { values, dwell_ms }`,
//! `trace { samples = [[t_ms, raw], ...], looped }`, `manual { raw }`.

use super::{Device, DeviceConfig, SignalSource};
use crate::catalog::{CatalogError, Direction, ExtensionModule, ModuleType};
use crate::value::ValueKind;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("unknown module {0:?}")]
    UnknownModule(String),
    #[error("bad pin spec {0:?}")]
    BadPin(String),
    #[error("channel {index}: {source}")]
    Attach {
        index: usize,
        source: super::DeviceError,
    },
    #[error("extension: {0}")]
    Extension(#[from] CatalogError),
    #[error("channel {index}: {reason}")]
    BadSignal { index: usize, reason: String },
    #[error("channel {index}: signal given for an actuator")]
    SignalOnActuator { index: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    protocol_version: Option<u8>,
    firmware_version: Option<u16>,
    capabilities: Option<RawCapabilities>,
    #[serde(default)]
    extensions: Vec<RawExtension>,
    #[serde(default)]
    channels: Vec<RawChannel>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawCapabilities {
    All(String),
    List(Vec<RawModuleRef>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawModuleRef {
    Id(u8),
    Name(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExtension {
    id: u8,
    name: String,
    direction: String,
    kind: ValueKind,
    pin_count: u8,
    #[serde(default)]
    unit: String,
    scale: Option<(i32, i32)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    module: RawModuleRef,
    pins: Vec<RawPin>,
    signal: Option<SignalSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawPin {
    Num(u8),
    Name(String),
}

/// A parsed simulator configuration, ready to build devices from.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub device: DeviceConfig,
    /// (module id, pins, optional signal) in attach order.
    pub channels: Vec<(u8, Vec<u8>, Option<SignalSource>)>,
}

impl SimConfig {
    /// Parse from TOML text.
    pub fn from_toml(text: &str) -> Result<SimConfig, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;

        let mut extensions = Vec::new();
        for ext in &raw.extensions {
            let direction = match ext.direction.as_str() {
                "sensor" => Direction::Sensor,
                "actuator" => Direction::Actuator,
                other => {
                    return Err(ConfigError::Syntax(format!(
                        "extension direction must be \"sensor\" or \"actuator\", got {other:?}"
                    )))
                }
            };
            extensions.push(ExtensionModule {
                id: ext.id,
                name: ext.name.clone(),
                direction,
                kind: ext.kind,
                pin_count: ext.pin_count,
                unit: ext.unit.clone(),
                scale: ext.scale,
            });
        }

        let resolve = |module: &RawModuleRef| -> Result<u8, ConfigError> {
            match module {
                RawModuleRef::Id(id) => Ok(*id),
                RawModuleRef::Name(name) => ModuleType::from_name(name)
                    .map(ModuleType::id)
                    .or_else(|| extensions.iter().find(|e| e.name == *name).map(|e| e.id))
                    .ok_or_else(|| ConfigError::UnknownModule(name.clone())),
            }
        };

        let capabilities = match &raw.capabilities {
            None => ModuleType::full_capability_mask(),
            Some(RawCapabilities::All(word)) if word == "all" => ModuleType::full_capability_mask(),
            Some(RawCapabilities::All(word)) => {
                return Err(ConfigError::Syntax(format!(
                    "capabilities must be \"all\" or a list, got {word:?}"
                )))
            }
            Some(RawCapabilities::List(items)) => {
                let mut mask = 0;
                for item in items {
                    let id = resolve(item)?;
                    if id < 32 {
                        mask |= 1 << id;
                    }
                }
                mask
            }
        };

        let mut channels = Vec::new();
        for (index, channel) in raw.channels.iter().enumerate() {
            let module = resolve(&channel.module)?;
            let pins = channel
                .pins
                .iter()
                .map(parse_pin)
                .collect::<Result<Vec<u8>, ConfigError>>()?;
            if let Some(signal) = &channel.signal {
                validate_signal(index, signal)?;
            }
            channels.push((module, pins, channel.signal.clone()));
        }

        Ok(SimConfig {
            device: DeviceConfig {
                protocol_version: raw
                    .protocol_version
                    .unwrap_or(crate::protocol::PROTOCOL_VERSION),
                firmware_version: raw.firmware_version.unwrap_or(0x0100),
                capabilities,
                extensions,
            },
            channels,
        })
    }

    /// Construct a device with the configured channels pre-attached (ids
    /// assigned 0.. in file order) and signal sources installed.
    pub fn build(&self) -> Result<Device, ConfigError> {
        let mut device = Device::new(self.device.clone());
        for (index, (module, pins, signal)) in self.channels.iter().enumerate() {
            let channel = device
                .attach_direct(*module, pins)
                .map_err(|source| ConfigError::Attach { index, source })?;
            if let Some(signal) = signal {
                device
                    .set_signal(channel, signal.clone())
                    .map_err(|_| ConfigError::SignalOnActuator { index })?;
            }
        }
        Ok(device)
    }
}

fn parse_pin(pin: &RawPin) -> Result<u8, ConfigError> {
    match pin {
        RawPin::Num(n) => Ok(*n),
        RawPin::Name(name) => parse_pin_name(name).ok_or_else(|| ConfigError::BadPin(name.clone())),
    }
}

/// Pin spellings accepted in configs and on the command line: plain
/// decimal, hex with 0x, or analog names A0..A7 (mapping to 0xA0..0xA7).
pub fn parse_pin_name(name: &str) -> Option<u8> {
    if let Some(rest) = name.strip_prefix("0x").or_else(|| name.strip_prefix("0X")) {
        return u8::from_str_radix(rest, 16).ok();
    }
    if let Some(rest) = name.strip_prefix('A').or_else(|| name.strip_prefix('a')) {
        let n: u8 = rest.parse().ok()?;
        if n <= 7 {
            return Some(0xA0 + n);
        }
        return None;
    }
    name.parse().ok()
}

fn validate_signal(index: usize, signal: &SignalSource) -> Result<(), ConfigError> {
    let fail = |reason: &str| {
        Err(ConfigError::BadSignal {
            index,
            reason: reason.to_string(),
        })
    };
    match signal {
        SignalSource::Constant { .. } | SignalSource::Manual { .. } => Ok(()),
        SignalSource::Sine {
            min,
            max,
            period_ms,
        } => {
            if min > max {
                return fail("sine min exceeds max");
            }
            if *period_ms == 0 {
                return fail("sine period must be positive");
            }
            Ok(())
        }
        SignalSource::Step { values, dwell_ms } => {
            if values.is_empty() {
                return fail("step needs at least one value");
            }
            if *dwell_ms == 0 {
                return fail("step dwell must be positive");
            }
            Ok(())
        }
        SignalSource::Trace { samples, .. } => {
            if samples.is_empty() {
                return fail("trace needs at least one sample");
            }
            if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
                return fail("trace timestamps must strictly increase");
            }
            Ok(())
        }
    }
}
