//! A virtual controller board.
//!
//! [`Device`] runs the firmware-side loop — receive bytes, parse frames,
//! dispatch one routine per request, respond — against programmable
//! [`SignalSource`]s instead of physical sensors, and records actuator
//! writes in an inspectable [`ActuatorState`] table.
//!
//! Time is virtual: [`Device::tick`] advances the clock and emits the
//! EVENT frames whose subscriptions came due, which makes periodic
//! behavior exactly reproducible in tests. Hosting loops that bridge a
//! device onto a real transport (and onto wall-clock time) live in
//! [`host`](crate::device::host).

mod config;
pub mod host;
mod signal;

pub use config::{parse_pin_name, SimConfig};
pub use signal::SignalSource;

use crate::catalog::{Catalog, Direction, ExtensionModule, ModuleType, RawDomain};
use crate::protocol::{
    decode_command, encode_command, encode_frame, Command, DecodeOutcome, Decoder, DeviceInfo,
    ErrorCode, Frame,
};
use crate::value::ChannelValue;
use std::collections::BTreeMap;
use thiserror::Error;

/// Device-side subscription table bound.
pub const MAX_SUBSCRIPTIONS: usize = 16;

/// How a device presents itself and which modules it accepts.
#[derive(Debug, Clone)]
pub struct DeviceConfig {
    pub protocol_version: u8,
    pub firmware_version: u16,
    /// Bit `i` set means builtin module id `i` can be attached.
    pub capabilities: u32,
    /// User-defined module types this device also accepts.
    pub extensions: Vec<ExtensionModule>,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            protocol_version: crate::protocol::PROTOCOL_VERSION,
            firmware_version: 0x0100,
            capabilities: ModuleType::full_capability_mask(),
            extensions: Vec::new(),
        }
    }
}

/// Last written state of one actuator channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActuatorState {
    Led {
        on: bool,
    },
    IrLed {
        on: bool,
    },
    Buzzer {
        on: bool,
    },
    Servo {
        milli_deg: i32,
    },
    Motor {
        milli_pwm: i32,
    },
    Lcd {
        lines: Vec<String>,
    },
    SevenSegment {
        digit: char,
    },
    /// Extension actuators keep the raw written value.
    Custom {
        value: ChannelValue,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum ChannelRole {
    Sensor(SignalSource),
    Actuator(ActuatorState),
}

#[derive(Debug, Clone, PartialEq)]
struct ChannelEntry {
    module: u8,
    pins: Vec<u8>,
    role: ChannelRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SubEntry {
    channel: u8,
    period_ms: u16,
    next_due_ms: u64,
}

/// Errors from direct (host-process) device manipulation. On the wire the
/// same conditions surface as ERROR frames instead.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeviceError {
    #[error("module type 0x{0:02x} not supported by this device")]
    UnknownModuleType(u8),
    #[error("module 0x{module:02x} needs {expected} pins, got {got}")]
    BadPinCount { module: u8, expected: u8, got: u8 },
    #[error("pin {0} is already claimed")]
    PinConflict(u8),
    #[error("no such channel {0}")]
    BadChannel(u8),
    #[error("channel {0} has the wrong direction for this operation")]
    WrongDirection(u8),
    #[error("bad value: {0}")]
    BadValue(String),
    #[error("device table full")]
    TableFull,
    #[error("no such subscription {0}")]
    BadSubscription(u8),
}

impl DeviceError {
    fn wire_code(&self) -> ErrorCode {
        match self {
            DeviceError::UnknownModuleType(_) => ErrorCode::UnknownModuleType,
            DeviceError::BadPinCount { .. } | DeviceError::BadValue(_) => ErrorCode::BadValue,
            DeviceError::PinConflict(_) => ErrorCode::PinConflict,
            DeviceError::BadChannel(_) => ErrorCode::BadChannel,
            DeviceError::WrongDirection(_) => ErrorCode::WrongDirection,
            DeviceError::TableFull => ErrorCode::TableFull,
            DeviceError::BadSubscription(_) => ErrorCode::BadSubscription,
        }
    }
}

/// The virtual controller. Single-threaded by contract: one context calls
/// [`run_step`](Device::run_step), [`tick`](Device::tick) and the
/// instrumentation methods; hosting drivers serialize access.
#[derive(Debug, Clone)]
pub struct Device {
    config: DeviceConfig,
    catalog: Catalog,
    clock_ms: u64,
    decoder: Decoder,
    pins: BTreeMap<u8, u8>,
    channels: BTreeMap<u8, ChannelEntry>,
    next_channel: u16,
    subs: BTreeMap<u8, SubEntry>,
    next_sub: u16,
}

impl Default for Device {
    fn default() -> Self {
        Device::new(DeviceConfig::default())
    }
}

impl Device {
    pub fn new(config: DeviceConfig) -> Self {
        let mut catalog = Catalog::new();
        for ext in &config.extensions {
            // Config validation happens when the config is built; a bad
            // extension here is a programming error.
            catalog
                .register_extension(ext.clone())
                .expect("invalid extension module in device config");
        }
        Device {
            config,
            catalog,
            clock_ms: 0,
            decoder: Decoder::new(),
            pins: BTreeMap::new(),
            channels: BTreeMap::new(),
            next_channel: 0,
            subs: BTreeMap::new(),
            next_sub: 0,
        }
    }

    pub fn device_info(&self) -> DeviceInfo {
        DeviceInfo {
            protocol_version: self.config.protocol_version,
            firmware_version: self.config.firmware_version,
            capabilities: self.config.capabilities,
        }
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn live_subscriptions(&self) -> usize {
        self.subs.len()
    }

    /// Module wire id bound to `channel`, if attached.
    pub fn channel_module(&self, channel: u8) -> Option<u8> {
        self.channels.get(&channel).map(|entry| entry.module)
    }

    /// Feed inbound bytes through the frame decoder and dispatch every
    /// complete frame; returns the concatenated reply bytes. Frames with a
    /// bad checksum are dropped silently (the requester recovers by
    /// timeout and retry). Every other decodable frame produces exactly
    /// one reply frame.
    pub fn run_step(&mut self, inbound: &[u8]) -> Vec<u8> {
        let outcomes = self.decoder.feed(inbound);
        let mut out = Vec::new();
        for outcome in outcomes {
            match outcome {
                DecodeOutcome::Frame(frame) => {
                    let reply = self.dispatch(&frame);
                    out.extend(encode_frame(&reply).expect("reply frames always fit"));
                }
                DecodeOutcome::BadCrc | DecodeOutcome::Resync(_) => {}
            }
        }
        out
    }

    /// Advance the virtual clock by `advance_ms`, emitting an EVENT frame
    /// for every subscription due in the window, in due-time order (ties
    /// by subscription id). Each event samples its channel at the moment
    /// it was due, so schedules are exact regardless of tick granularity.
    pub fn tick(&mut self, advance_ms: u32) -> Vec<u8> {
        let end = self.clock_ms + u64::from(advance_ms);
        let mut out = Vec::new();
        loop {
            let due_next = self
                .subs
                .iter()
                .filter(|(_, sub)| sub.next_due_ms <= end)
                .min_by_key(|(id, sub)| (sub.next_due_ms, **id))
                .map(|(id, sub)| (*id, *sub));
            let Some((id, sub)) = due_next else { break };

            let raw = self.sample_channel(sub.channel, sub.next_due_ms);
            let value = self.wire_value(sub.channel, raw);
            let frame = encode_command(
                0,
                &Command::Event {
                    subscription: id,
                    value,
                },
            )
            .expect("event frames always encode");
            out.extend(encode_frame(&frame).expect("event frames always fit"));

            self.subs.get_mut(&id).unwrap().next_due_ms =
                sub.next_due_ms + u64::from(sub.period_ms);
        }
        self.clock_ms = end;
        out
    }

    /// Point a sensor channel at a new signal source. Sampling uses the
    /// new source from the current clock onward.
    pub fn set_signal(&mut self, channel: u8, source: SignalSource) -> Result<(), DeviceError> {
        let entry = self
            .channels
            .get_mut(&channel)
            .ok_or(DeviceError::BadChannel(channel))?;
        match &mut entry.role {
            ChannelRole::Sensor(slot) => {
                *slot = source;
                Ok(())
            }
            ChannelRole::Actuator(_) => Err(DeviceError::WrongDirection(channel)),
        }
    }

    /// Current state of every actuator channel.
    pub fn actuator_snapshot(&self) -> BTreeMap<u8, ActuatorState> {
        self.channels
            .iter()
            .filter_map(|(channel, entry)| match &entry.role {
                ChannelRole::Actuator(state) => Some((*channel, state.clone())),
                ChannelRole::Sensor(_) => None,
            })
            .collect()
    }

    /// Attach a module without going over the wire — the same routine the
    /// ATTACH dispatch uses, exposed for config preloading and tests.
    pub fn attach_direct(&mut self, module: u8, pins: &[u8]) -> Result<u8, DeviceError> {
        let supported = match ModuleType::from_id(module) {
            Some(t) => self.config.capabilities & (1 << t.id()) != 0,
            None => self.catalog.spec(module).is_ok(),
        };
        if !supported {
            return Err(DeviceError::UnknownModuleType(module));
        }
        let spec = self
            .catalog
            .spec(module)
            .map_err(|_| DeviceError::UnknownModuleType(module))?;
        if pins.len() != usize::from(spec.pin_count()) {
            return Err(DeviceError::BadPinCount {
                module,
                expected: spec.pin_count(),
                got: pins.len() as u8,
            });
        }
        for (i, pin) in pins.iter().enumerate() {
            if self.pins.contains_key(pin) || pins[..i].contains(pin) {
                return Err(DeviceError::PinConflict(*pin));
            }
        }
        if self.next_channel > 0xFF {
            return Err(DeviceError::TableFull);
        }

        let channel = self.next_channel as u8;
        // Channel ids are never reused after detach within a session.
        self.next_channel += 1;
        for pin in pins {
            self.pins.insert(*pin, channel);
        }
        let role = match spec.direction() {
            Direction::Sensor => ChannelRole::Sensor(SignalSource::Constant { raw: 0 }),
            Direction::Actuator => ChannelRole::Actuator(initial_actuator_state(module)),
        };
        self.channels.insert(
            channel,
            ChannelEntry {
                module,
                pins: pins.to_vec(),
                role,
            },
        );
        Ok(channel)
    }

    fn detach(&mut self, channel: u8) -> Result<(), DeviceError> {
        let entry = self
            .channels
            .remove(&channel)
            .ok_or(DeviceError::BadChannel(channel))?;
        for pin in &entry.pins {
            self.pins.remove(pin);
        }
        self.subs.retain(|_, sub| sub.channel != channel);
        Ok(())
    }

    fn read(&self, channel: u8) -> Result<ChannelValue, DeviceError> {
        let entry = self
            .channels
            .get(&channel)
            .ok_or(DeviceError::BadChannel(channel))?;
        match &entry.role {
            ChannelRole::Sensor(_) => {
                let raw = self.sample_channel(channel, self.clock_ms);
                Ok(self.wire_value(channel, raw))
            }
            ChannelRole::Actuator(_) => Err(DeviceError::WrongDirection(channel)),
        }
    }

    fn write(&mut self, channel: u8, value: &ChannelValue) -> Result<(), DeviceError> {
        let module = self
            .channels
            .get(&channel)
            .ok_or(DeviceError::BadChannel(channel))?
            .module;
        let spec = self
            .catalog
            .spec(module)
            .expect("attached channels always resolve");
        if spec.direction() != Direction::Actuator {
            return Err(DeviceError::WrongDirection(channel));
        }
        spec.validate_write(value)
            .map_err(|e| DeviceError::BadValue(e.to_string()))?;
        let state = actuator_state_for(module, value);
        let entry = self.channels.get_mut(&channel).unwrap();
        entry.role = ChannelRole::Actuator(state);
        Ok(())
    }

    fn subscribe(&mut self, channel: u8, period_ms: u16) -> Result<u8, DeviceError> {
        let entry = self
            .channels
            .get(&channel)
            .ok_or(DeviceError::BadChannel(channel))?;
        if !matches!(entry.role, ChannelRole::Sensor(_)) {
            return Err(DeviceError::WrongDirection(channel));
        }
        if !(10..=60_000).contains(&period_ms) {
            return Err(DeviceError::BadValue(format!(
                "subscription period {period_ms} ms outside 10..=60000"
            )));
        }
        if self.subs.len() >= MAX_SUBSCRIPTIONS || self.next_sub > 0xFF {
            return Err(DeviceError::TableFull);
        }
        let id = self.next_sub as u8;
        self.next_sub += 1;
        self.subs.insert(
            id,
            SubEntry {
                channel,
                period_ms,
                next_due_ms: self.clock_ms + u64::from(period_ms),
            },
        );
        Ok(id)
    }

    fn unsubscribe(&mut self, subscription: u8) -> Result<(), DeviceError> {
        self.subs
            .remove(&subscription)
            .map(|_| ())
            .ok_or(DeviceError::BadSubscription(subscription))
    }

    /// Raw reading of a sensor channel at time `t`, clamped to the
    /// module's raw domain.
    fn sample_channel(&self, channel: u8, t_ms: u64) -> u16 {
        let entry = &self.channels[&channel];
        let ChannelRole::Sensor(source) = &entry.role else {
            unreachable!("subscriptions and reads only target sensors");
        };
        let spec = self.catalog.spec(entry.module).unwrap();
        spec.raw_domain().clamp(source.sample(t_ms))
    }

    /// How a raw reading travels in VALUE/EVENT payloads: digital levels
    /// as digital, ADC counts as analog, wide raws (echo microseconds) in
    /// a scalar container. Hosts convert to engineering units.
    fn wire_value(&self, channel: u8, raw: u16) -> ChannelValue {
        let entry = &self.channels[&channel];
        let spec = self.catalog.spec(entry.module).unwrap();
        match spec.raw_domain() {
            RawDomain::Level => ChannelValue::Digital(raw != 0),
            RawDomain::Adc => ChannelValue::Analog(raw),
            RawDomain::Wide => ChannelValue::Scalar(i32::from(raw)),
        }
    }

    /// The "switch statement": exactly one reply per decoded frame.
    fn dispatch(&mut self, frame: &Frame) -> Frame {
        let error = |code: ErrorCode| Command::Error {
            code: code.as_u8(),
            offending_opcode: frame.opcode,
        };
        let reply = match decode_command(frame) {
            Err(crate::protocol::ProtocolError::UnknownOpcode(_)) => {
                error(ErrorCode::UnknownOpcode)
            }
            Err(_) => error(ErrorCode::MalformedPayload),
            Ok(cmd) => match cmd {
                Command::Ping => Command::AckPing,
                Command::Hello { .. } => Command::AckHello(self.device_info()),
                Command::Attach { module_type, pins } => {
                    match self.attach_direct(module_type, &pins) {
                        Ok(channel) => Command::AckAttach { channel },
                        Err(e) => error(e.wire_code()),
                    }
                }
                Command::Detach { channel } => match self.detach(channel) {
                    Ok(()) => Command::AckDetach,
                    Err(e) => error(e.wire_code()),
                },
                Command::Read { channel } => match self.read(channel) {
                    Ok(value) => Command::Value { channel, value },
                    Err(e) => error(e.wire_code()),
                },
                Command::Write { channel, value } => match self.write(channel, &value) {
                    Ok(()) => Command::AckWrite,
                    Err(e) => error(e.wire_code()),
                },
                Command::Subscribe { channel, period_ms } => {
                    match self.subscribe(channel, period_ms) {
                        Ok(subscription) => Command::AckSubscribe { subscription },
                        Err(e) => error(e.wire_code()),
                    }
                }
                Command::Unsubscribe { subscription } => match self.unsubscribe(subscription) {
                    Ok(()) => Command::AckUnsubscribe,
                    Err(e) => error(e.wire_code()),
                },
                // A device only serves requests; replies and events landing
                // here are not servable.
                _ => error(ErrorCode::UnknownOpcode),
            },
        };
        encode_command(frame.seq, &reply).expect("reply commands always encode")
    }

    /// Invariant sweep used by tests: pin table and channel table agree,
    /// channel ids were assigned densely, subscriptions point at sensors.
    pub fn check_tables(&self) -> Result<(), String> {
        for (pin, channel) in &self.pins {
            let entry = self
                .channels
                .get(channel)
                .ok_or(format!("pin {pin} maps to missing channel {channel}"))?;
            if !entry.pins.contains(pin) {
                return Err(format!("pin {pin} not listed by channel {channel}"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (channel, entry) in &self.channels {
            if u16::from(*channel) >= self.next_channel {
                return Err(format!("channel {channel} beyond allocator"));
            }
            for pin in &entry.pins {
                if self.pins.get(pin) != Some(channel) {
                    return Err(format!("channel {channel} claims unowned pin {pin}"));
                }
                if !seen.insert(*pin) {
                    return Err(format!("pin {pin} claimed twice"));
                }
            }
        }
        for (id, sub) in &self.subs {
            let entry = self
                .channels
                .get(&sub.channel)
                .ok_or(format!("subscription {id} targets missing channel"))?;
            if !matches!(entry.role, ChannelRole::Sensor(_)) {
                return Err(format!("subscription {id} targets an actuator"));
            }
        }
        if self.subs.len() > MAX_SUBSCRIPTIONS {
            return Err("subscription table overfull".into());
        }
        Ok(())
    }
}

fn initial_actuator_state(module: u8) -> ActuatorState {
    match ModuleType::from_id(module) {
        Some(ModuleType::Led) => ActuatorState::Led { on: false },
        Some(ModuleType::IrLed) => ActuatorState::IrLed { on: false },
        Some(ModuleType::Buzzer) => ActuatorState::Buzzer { on: false },
        Some(ModuleType::ServoSg90) => ActuatorState::Servo { milli_deg: 0 },
        Some(ModuleType::DcMotor) => ActuatorState::Motor { milli_pwm: 0 },
        Some(ModuleType::Lcd16x2) | Some(ModuleType::Lcd16x4) => {
            ActuatorState::Lcd { lines: Vec::new() }
        }
        Some(ModuleType::SevenSegment) => ActuatorState::SevenSegment { digit: '0' },
        _ => ActuatorState::Custom {
            value: ChannelValue::Digital(false),
        },
    }
}

fn actuator_state_for(module: u8, value: &ChannelValue) -> ActuatorState {
    match (ModuleType::from_id(module), value) {
        (Some(ModuleType::Led), ChannelValue::Digital(on)) => ActuatorState::Led { on: *on },
        (Some(ModuleType::IrLed), ChannelValue::Digital(on)) => ActuatorState::IrLed { on: *on },
        (Some(ModuleType::Buzzer), ChannelValue::Digital(on)) => ActuatorState::Buzzer { on: *on },
        (Some(ModuleType::ServoSg90), ChannelValue::Scalar(milli_deg)) => ActuatorState::Servo {
            milli_deg: *milli_deg,
        },
        (Some(ModuleType::DcMotor), ChannelValue::Scalar(milli_pwm)) => ActuatorState::Motor {
            milli_pwm: *milli_pwm,
        },
        (Some(ModuleType::Lcd16x2) | Some(ModuleType::Lcd16x4), ChannelValue::Text(text)) => {
            ActuatorState::Lcd {
                lines: text.split('\n').map(str::to_owned).collect(),
            }
        }
        (Some(ModuleType::SevenSegment), ChannelValue::Text(text)) => ActuatorState::SevenSegment {
            digit: text.chars().next().unwrap_or('0'),
        },
        _ => ActuatorState::Custom {
            value: value.clone(),
        },
    }
}
