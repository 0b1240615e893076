//! The catalog of sensor and actuator module types a controller can carry:
//! identity, direction, value kind, pin needs, and the raw-to-engineering
//! conversions applied host-side.
//!
//! Seventeen builtin types cover the common hobby modules (ids 0x00..=0x10).
//! Ids 0x40..=0x7F are reserved for user-defined extensions, registered at
//! runtime through [`Catalog::register_extension`] — a gyroscope breakout,
//! for example, that the builtin list does not know.
//!
//! `docs/catalog.md` tabulates ids, pins, units and conversion formulas.

use crate::value::{ChannelValue, ValueKind, ANALOG_MAX, TEXT_MAX};
use std::collections::BTreeMap;
use thiserror::Error;

/// First and last wire ids available for user-defined extension modules.
pub const EXTENSION_ID_MIN: u8 = 0x40;
pub const EXTENSION_ID_MAX: u8 = 0x7F;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Sensor,
    Actuator,
}

/// Domain of the device-side raw integer a sensor produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawDomain {
    /// 0 or 1 (digital input level).
    Level,
    /// 10-bit ADC count, 0..=1023.
    Adc,
    /// Full u16 (e.g. an echo time in microseconds).
    Wide,
}

impl RawDomain {
    pub fn clamp(self, raw: u16) -> u16 {
        match self {
            RawDomain::Level => u16::from(raw != 0),
            RawDomain::Adc => raw.min(ANALOG_MAX),
            RawDomain::Wide => raw,
        }
    }
}

/// The builtin module types, with their stable wire ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ModuleType {
    PushButton = 0x00,
    Lcd16x2 = 0x01,
    Lcd16x4 = 0x02,
    Lm35 = 0x03,
    HcSr04 = 0x04,
    Ldr = 0x05,
    ServoSg90 = 0x06,
    DcMotor = 0x07,
    IrLed = 0x08,
    IrReceiver = 0x09,
    GasMq = 0x0A,
    SevenSegment = 0x0B,
    Potentiometer = 0x0C,
    Led = 0x0D,
    Microphone = 0x0E,
    VibrationSw420 = 0x0F,
    Buzzer = 0x10,
}

impl ModuleType {
    pub const ALL: [ModuleType; 17] = [
        ModuleType::PushButton,
        ModuleType::Lcd16x2,
        ModuleType::Lcd16x4,
        ModuleType::Lm35,
        ModuleType::HcSr04,
        ModuleType::Ldr,
        ModuleType::ServoSg90,
        ModuleType::DcMotor,
        ModuleType::IrLed,
        ModuleType::IrReceiver,
        ModuleType::GasMq,
        ModuleType::SevenSegment,
        ModuleType::Potentiometer,
        ModuleType::Led,
        ModuleType::Microphone,
        ModuleType::VibrationSw420,
        ModuleType::Buzzer,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<ModuleType> {
        ModuleType::ALL.into_iter().find(|t| t.id() == id)
    }

    pub fn name(self) -> &'static str {
        descriptor_of(self).name
    }

    pub fn from_name(name: &str) -> Option<ModuleType> {
        ModuleType::ALL
            .into_iter()
            .find(|t| t.name() == name.to_ascii_lowercase())
    }

    /// Capability mask with every builtin id set.
    pub fn full_capability_mask() -> u32 {
        ModuleType::ALL
            .into_iter()
            .fold(0, |mask, t| mask | (1 << t.id()))
    }
}

/// Static metadata of one builtin module type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuleDescriptor {
    pub module_type: ModuleType,
    pub name: &'static str,
    pub direction: Direction,
    pub kind: ValueKind,
    pub pin_count: u8,
    /// Display label for converted values ("" when unit-less).
    pub unit: &'static str,
    /// Meaningful for sensors only.
    pub raw_domain: RawDomain,
}

use Direction::{Actuator, Sensor};
use RawDomain::{Adc, Level, Wide};
use ValueKind::{Analog, Digital, Scalar, Text};

#[rustfmt::skip]
static CATALOG: [ModuleDescriptor; 17] = [
    ModuleDescriptor { module_type: ModuleType::PushButton, name: "push-button", direction: Sensor, kind: Digital, pin_count: 1, unit: "", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::Lcd16x2, name: "lcd16x2", direction: Actuator, kind: Text, pin_count: 6, unit: "", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::Lcd16x4, name: "lcd16x4", direction: Actuator, kind: Text, pin_count: 6, unit: "", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::Lm35, name: "lm35", direction: Sensor, kind: Scalar, pin_count: 1, unit: "m°C", raw_domain: Adc },
    ModuleDescriptor { module_type: ModuleType::HcSr04, name: "hc-sr04", direction: Sensor, kind: Scalar, pin_count: 2, unit: "mm", raw_domain: Wide },
    ModuleDescriptor { module_type: ModuleType::Ldr, name: "ldr", direction: Sensor, kind: Analog, pin_count: 1, unit: "counts", raw_domain: Adc },
    ModuleDescriptor { module_type: ModuleType::ServoSg90, name: "servo-sg90", direction: Actuator, kind: Scalar, pin_count: 1, unit: "deg", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::DcMotor, name: "dc-motor", direction: Actuator, kind: Scalar, pin_count: 2, unit: "pwm", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::IrLed, name: "ir-led", direction: Actuator, kind: Digital, pin_count: 1, unit: "", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::IrReceiver, name: "ir-receiver", direction: Sensor, kind: Analog, pin_count: 1, unit: "counts", raw_domain: Adc },
    ModuleDescriptor { module_type: ModuleType::GasMq, name: "gas-mq", direction: Sensor, kind: Analog, pin_count: 1, unit: "counts", raw_domain: Adc },
    ModuleDescriptor { module_type: ModuleType::SevenSegment, name: "seven-segment", direction: Actuator, kind: Text, pin_count: 8, unit: "", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::Potentiometer, name: "potentiometer", direction: Sensor, kind: Analog, pin_count: 1, unit: "counts", raw_domain: Adc },
    ModuleDescriptor { module_type: ModuleType::Led, name: "led", direction: Actuator, kind: Digital, pin_count: 1, unit: "", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::Microphone, name: "microphone", direction: Sensor, kind: Analog, pin_count: 1, unit: "counts", raw_domain: Adc },
    ModuleDescriptor { module_type: ModuleType::VibrationSw420, name: "vibration-sw420", direction: Sensor, kind: Digital, pin_count: 1, unit: "", raw_domain: Level },
    ModuleDescriptor { module_type: ModuleType::Buzzer, name: "buzzer", direction: Actuator, kind: Digital, pin_count: 1, unit: "", raw_domain: Level },
];

/// Descriptor for a builtin module type. Total over the enum.
pub fn descriptor_of(t: ModuleType) -> &'static ModuleDescriptor {
    &CATALOG[usize::from(t.id())]
}

/// Descriptor lookup by wire id.
pub fn descriptor_for_id(id: u8) -> Result<&'static ModuleDescriptor, CatalogError> {
    ModuleType::from_id(id)
        .map(descriptor_of)
        .ok_or(CatalogError::UnknownModuleType(id))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("unknown module type 0x{0:02x}")]
    UnknownModuleType(u8),
    #[error("module 0x{0:02x} is not a sensor")]
    NotASensor(u8),
    #[error("module 0x{0:02x} is not an actuator")]
    NotAnActuator(u8),
    #[error("raw analog value {0} exceeds {ANALOG_MAX}")]
    AnalogOutOfRange(u16),
    #[error("module 0x{module:02x} takes {expected} values, got {got}")]
    WrongKind {
        module: u8,
        expected: ValueKind,
        got: ValueKind,
    },
    #[error("value out of range for module 0x{module:02x}: {reason}")]
    OutOfRange { module: u8, reason: &'static str },
    #[error("extension id 0x{0:02x} outside 0x40..=0x7F")]
    BadExtensionId(u8),
    #[error("extension id 0x{0:02x} already registered")]
    DuplicateExtension(u8),
}

/// Convert a device-side raw sample into the engineering value a caller
/// sees. Truncating integer arithmetic throughout, matching what naive
/// firmware would compute.
pub fn convert_raw(t: ModuleType, raw: u16) -> Result<ChannelValue, CatalogError> {
    let desc = descriptor_of(t);
    if desc.direction != Direction::Sensor {
        return Err(CatalogError::NotASensor(t.id()));
    }
    if desc.raw_domain == RawDomain::Adc && raw > ANALOG_MAX {
        return Err(CatalogError::AnalogOutOfRange(raw));
    }
    Ok(match t {
        // 10-bit ADC against a 5 V reference at 10 mV/°C:
        // milli-°C = raw * 5_000_000 µV / 1023 / 10 µV-per-m°C.
        ModuleType::Lm35 => ChannelValue::Scalar((i64::from(raw) * 500_000 / 1023) as i32),
        // Echo time in µs; sound covers 1 mm in 5.8 µs round trip.
        ModuleType::HcSr04 => ChannelValue::Scalar((i64::from(raw) * 10 / 58) as i32),
        ModuleType::PushButton | ModuleType::VibrationSw420 => ChannelValue::Digital(raw != 0),
        _ => ChannelValue::Analog(raw),
    })
}

/// Check that `value` is something `t` accepts as a write.
pub fn validate_write(t: ModuleType, value: &ChannelValue) -> Result<(), CatalogError> {
    let desc = descriptor_of(t);
    if desc.direction != Direction::Actuator {
        return Err(CatalogError::NotAnActuator(t.id()));
    }
    if value.kind() != desc.kind {
        return Err(CatalogError::WrongKind {
            module: t.id(),
            expected: desc.kind,
            got: value.kind(),
        });
    }
    let out_of_range = |reason| CatalogError::OutOfRange {
        module: t.id(),
        reason,
    };
    match (t, value) {
        (ModuleType::ServoSg90, ChannelValue::Scalar(milli_deg)) => {
            if !(0..=180_000).contains(milli_deg) {
                return Err(out_of_range("servo angle outside 0..=180000 milli-degrees"));
            }
        }
        (ModuleType::DcMotor, ChannelValue::Scalar(milli_pwm)) => {
            if !(-255_000..=255_000).contains(milli_pwm) {
                return Err(out_of_range("motor pwm outside -255000..=255000"));
            }
        }
        (ModuleType::Lcd16x2, ChannelValue::Text(text)) => {
            validate_lcd_text(t, text, 32, 1)?;
        }
        (ModuleType::Lcd16x4, ChannelValue::Text(text)) => {
            validate_lcd_text(t, text, 64, 3)?;
        }
        (ModuleType::SevenSegment, ChannelValue::Text(text)) => {
            let mut chars = text.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_digit() => {}
                _ => return Err(out_of_range("seven-segment takes exactly one digit 0-9")),
            }
        }
        // Digital actuators: kind check above is the whole contract.
        _ => {}
    }
    value.check().map_err(|_| CatalogError::OutOfRange {
        module: t.id(),
        reason: "value violates its own bounds",
    })?;
    Ok(())
}

/// Text rules for LCDs: `max_chars` visible characters (line breaks not
/// counted), at most `max_breaks` line breaks, and the overall text cap.
fn validate_lcd_text(
    t: ModuleType,
    text: &str,
    max_chars: usize,
    max_breaks: usize,
) -> Result<(), CatalogError> {
    let breaks = text.bytes().filter(|b| *b == b'\n').count();
    let visible = text.len() - breaks;
    if visible > max_chars {
        return Err(CatalogError::OutOfRange {
            module: t.id(),
            reason: "text longer than the display",
        });
    }
    if breaks > max_breaks {
        return Err(CatalogError::OutOfRange {
            module: t.id(),
            reason: "too many line breaks for the display",
        });
    }
    if text.len() > TEXT_MAX {
        return Err(CatalogError::OutOfRange {
            module: t.id(),
            reason: "text exceeds the 64-byte wire cap",
        });
    }
    Ok(())
}

/// A user-defined module type occupying an extension id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionModule {
    pub id: u8,
    pub name: String,
    pub direction: Direction,
    pub kind: ValueKind,
    pub pin_count: u8,
    pub unit: String,
    /// For `Scalar` sensors: milli-units = raw * num / den.
    pub scale: Option<(i32, i32)>,
}

/// Unified view over a builtin descriptor or a registered extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuleSpec<'a> {
    Builtin(&'static ModuleDescriptor),
    Extension(&'a ExtensionModule),
}

impl ModuleSpec<'_> {
    pub fn id(&self) -> u8 {
        match self {
            ModuleSpec::Builtin(d) => d.module_type.id(),
            ModuleSpec::Extension(e) => e.id,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ModuleSpec::Builtin(d) => d.name,
            ModuleSpec::Extension(e) => &e.name,
        }
    }

    pub fn direction(&self) -> Direction {
        match self {
            ModuleSpec::Builtin(d) => d.direction,
            ModuleSpec::Extension(e) => e.direction,
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            ModuleSpec::Builtin(d) => d.kind,
            ModuleSpec::Extension(e) => e.kind,
        }
    }

    pub fn pin_count(&self) -> u8 {
        match self {
            ModuleSpec::Builtin(d) => d.pin_count,
            ModuleSpec::Extension(e) => e.pin_count,
        }
    }

    pub fn unit(&self) -> &str {
        match self {
            ModuleSpec::Builtin(d) => d.unit,
            ModuleSpec::Extension(e) => &e.unit,
        }
    }

    pub fn raw_domain(&self) -> RawDomain {
        match self {
            ModuleSpec::Builtin(d) => d.raw_domain,
            ModuleSpec::Extension(e) => match e.kind {
                ValueKind::Digital => RawDomain::Level,
                ValueKind::Analog => RawDomain::Adc,
                _ => RawDomain::Wide,
            },
        }
    }

    /// Raw-to-engineering conversion for this module.
    pub fn convert_raw(&self, raw: u16) -> Result<ChannelValue, CatalogError> {
        match self {
            ModuleSpec::Builtin(d) => convert_raw(d.module_type, raw),
            ModuleSpec::Extension(e) => {
                if e.direction != Direction::Sensor {
                    return Err(CatalogError::NotASensor(e.id));
                }
                Ok(match e.kind {
                    ValueKind::Digital => ChannelValue::Digital(raw != 0),
                    ValueKind::Analog => {
                        if raw > ANALOG_MAX {
                            return Err(CatalogError::AnalogOutOfRange(raw));
                        }
                        ChannelValue::Analog(raw)
                    }
                    _ => {
                        let (num, den) = e.scale.unwrap_or((1, 1));
                        let den = if den == 0 { 1 } else { den };
                        ChannelValue::Scalar(
                            (i64::from(raw) * i64::from(num) / i64::from(den)) as i32,
                        )
                    }
                })
            }
        }
    }

    /// Write validation for this module.
    pub fn validate_write(&self, value: &ChannelValue) -> Result<(), CatalogError> {
        match self {
            ModuleSpec::Builtin(d) => validate_write(d.module_type, value),
            ModuleSpec::Extension(e) => {
                if e.direction != Direction::Actuator {
                    return Err(CatalogError::NotAnActuator(e.id));
                }
                if value.kind() != e.kind {
                    return Err(CatalogError::WrongKind {
                        module: e.id,
                        expected: e.kind,
                        got: value.kind(),
                    });
                }
                value.check().map_err(|_| CatalogError::OutOfRange {
                    module: e.id,
                    reason: "value violates its own bounds",
                })
            }
        }
    }
}

/// The builtin catalog plus any registered extension modules.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    extensions: BTreeMap<u8, ExtensionModule>,
}

impl Catalog {
    /// Builtins only.
    pub fn new() -> Self {
        Catalog::default()
    }

    pub fn register_extension(&mut self, ext: ExtensionModule) -> Result<(), CatalogError> {
        if !(EXTENSION_ID_MIN..=EXTENSION_ID_MAX).contains(&ext.id) {
            return Err(CatalogError::BadExtensionId(ext.id));
        }
        if self.extensions.contains_key(&ext.id) {
            return Err(CatalogError::DuplicateExtension(ext.id));
        }
        self.extensions.insert(ext.id, ext);
        Ok(())
    }

    pub fn extensions(&self) -> impl Iterator<Item = &ExtensionModule> {
        self.extensions.values()
    }

    /// Look up any module id: builtin, then registered extensions.
    pub fn spec(&self, id: u8) -> Result<ModuleSpec<'_>, CatalogError> {
        if let Ok(desc) = descriptor_for_id(id) {
            return Ok(ModuleSpec::Builtin(desc));
        }
        self.extensions
            .get(&id)
            .map(ModuleSpec::Extension)
            .ok_or(CatalogError::UnknownModuleType(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_stable_and_unique() {
        for (index, t) in ModuleType::ALL.into_iter().enumerate() {
            assert_eq!(usize::from(t.id()), index);
            assert_eq!(descriptor_of(t).module_type, t);
            assert_eq!(ModuleType::from_id(t.id()), Some(t));
            assert_eq!(ModuleType::from_name(t.name()), Some(t));
        }
        assert_eq!(ModuleType::ALL.len(), 17);
    }

    #[test]
    fn descriptor_examples() {
        let lm35 = descriptor_of(ModuleType::Lm35);
        assert_eq!(lm35.direction, Direction::Sensor);
        assert_eq!(lm35.kind, ValueKind::Scalar);
        assert_eq!(lm35.pin_count, 1);
        assert_eq!(lm35.unit, "m°C");

        let servo = descriptor_of(ModuleType::ServoSg90);
        assert_eq!(servo.direction, Direction::Actuator);
        assert_eq!(servo.kind, ValueKind::Scalar);
        assert_eq!(servo.pin_count, 1);
        assert_eq!(servo.unit, "deg");

        assert_eq!(
            descriptor_for_id(0x33),
            Err(CatalogError::UnknownModuleType(0x33))
        );
    }

    #[test]
    fn spec_direction_split() {
        let sensors = [
            ModuleType::PushButton,
            ModuleType::Lm35,
            ModuleType::HcSr04,
            ModuleType::Ldr,
            ModuleType::IrReceiver,
            ModuleType::GasMq,
            ModuleType::Potentiometer,
            ModuleType::Microphone,
            ModuleType::VibrationSw420,
        ];
        for t in ModuleType::ALL {
            let expected = if sensors.contains(&t) {
                Direction::Sensor
            } else {
                Direction::Actuator
            };
            assert_eq!(descriptor_of(t).direction, expected, "{t:?}");
        }
    }

    #[test]
    fn lm35_conversion() {
        assert_eq!(
            convert_raw(ModuleType::Lm35, 0),
            Ok(ChannelValue::Scalar(0))
        );
        // 205 * 500000 / 1023 = 100195 (truncated), frozen from exact
        // integer evaluation.
        assert_eq!(
            convert_raw(ModuleType::Lm35, 205),
            Ok(ChannelValue::Scalar(100_195))
        );
        assert_eq!(
            convert_raw(ModuleType::Lm35, 1024),
            Err(CatalogError::AnalogOutOfRange(1024))
        );
    }

    #[test]
    fn hc_sr04_conversion() {
        // 5800 µs * 10 / 58 = 1000 mm exactly.
        assert_eq!(
            convert_raw(ModuleType::HcSr04, 5800),
            Ok(ChannelValue::Scalar(1000))
        );
        // Raw domain is the full u16, not ADC-bounded.
        assert!(convert_raw(ModuleType::HcSr04, 65535).is_ok());
    }

    #[test]
    fn digital_and_passthrough_conversions() {
        assert_eq!(
            convert_raw(ModuleType::PushButton, 1),
            Ok(ChannelValue::Digital(true))
        );
        assert_eq!(
            convert_raw(ModuleType::PushButton, 0),
            Ok(ChannelValue::Digital(false))
        );
        assert_eq!(
            convert_raw(ModuleType::Potentiometer, 512),
            Ok(ChannelValue::Analog(512))
        );
        assert_eq!(
            convert_raw(ModuleType::Led, 1),
            Err(CatalogError::NotASensor(0x0D))
        );
    }

    #[test]
    fn conversions_are_monotone() {
        for t in [ModuleType::Lm35, ModuleType::HcSr04] {
            let max = if t == ModuleType::Lm35 { 1023 } else { 65535 };
            let mut last = i32::MIN;
            for raw in (0..=max).step_by(7) {
                let ChannelValue::Scalar(v) = convert_raw(t, raw).unwrap() else {
                    panic!("scalar expected");
                };
                assert!(v >= last, "{t:?} not monotone at raw {raw}");
                last = v;
            }
        }
    }

    #[test]
    fn every_sensor_converts_over_its_whole_raw_domain() {
        for t in ModuleType::ALL {
            let desc = descriptor_of(t);
            if desc.direction != Direction::Sensor {
                continue;
            }
            let max = match desc.raw_domain {
                RawDomain::Level => 1,
                RawDomain::Adc => 1023,
                RawDomain::Wide => 65535,
            };
            for raw in (0..=max).step_by(11).chain([max]) {
                let value = convert_raw(t, raw).unwrap_or_else(|e| panic!("{t:?} raw {raw}: {e}"));
                assert_eq!(value.kind(), desc.kind, "{t:?} raw {raw}");
            }
        }
    }

    #[test]
    fn accepted_writes_round_trip_the_wire_encoding() {
        use crate::protocol::{decode_command, encode_command, Command};
        let candidates = [
            ChannelValue::Digital(false),
            ChannelValue::Digital(true),
            ChannelValue::Analog(0),
            ChannelValue::Analog(512),
            ChannelValue::Analog(1023),
            ChannelValue::Scalar(0),
            ChannelValue::Scalar(-255_000),
            ChannelValue::Scalar(180_000),
            ChannelValue::Text("7".into()),
            ChannelValue::Text("HELLO".into()),
            ChannelValue::Text("x".repeat(16) + "\n" + &"y".repeat(16)),
            ChannelValue::Text("one\ntwo\nthree\nfour".into()),
        ];
        for t in ModuleType::ALL {
            for value in &candidates {
                if validate_write(t, value).is_err() {
                    continue;
                }
                let frame = encode_command(
                    0,
                    &Command::Write {
                        channel: 0,
                        value: value.clone(),
                    },
                )
                .unwrap();
                let Command::Write { value: back, .. } = decode_command(&frame).unwrap() else {
                    panic!("write did not decode as a write");
                };
                assert_eq!(&back, value, "{t:?} altered an accepted value");
            }
        }
    }

    #[test]
    fn servo_write_bounds() {
        assert!(validate_write(ModuleType::ServoSg90, &ChannelValue::Scalar(90_000)).is_ok());
        assert!(validate_write(ModuleType::ServoSg90, &ChannelValue::Scalar(0)).is_ok());
        assert!(validate_write(ModuleType::ServoSg90, &ChannelValue::Scalar(180_000)).is_ok());
        assert!(matches!(
            validate_write(ModuleType::ServoSg90, &ChannelValue::Scalar(181_000)),
            Err(CatalogError::OutOfRange { .. })
        ));
        assert!(matches!(
            validate_write(ModuleType::ServoSg90, &ChannelValue::Scalar(-1)),
            Err(CatalogError::OutOfRange { .. })
        ));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        assert!(matches!(
            validate_write(ModuleType::Led, &ChannelValue::Analog(5)),
            Err(CatalogError::WrongKind { .. })
        ));
        assert!(matches!(
            validate_write(ModuleType::Lm35, &ChannelValue::Digital(true)),
            Err(CatalogError::NotAnActuator(_))
        ));
    }

    #[test]
    fn lcd_text_rules() {
        let ok = |t: ModuleType, s: &str| validate_write(t, &ChannelValue::Text(s.into()));
        assert!(ok(ModuleType::Lcd16x2, "HELLO").is_ok());
        assert!(ok(
            ModuleType::Lcd16x2,
            &("x".repeat(16) + "\n" + &"y".repeat(16))
        )
        .is_ok());
        assert!(matches!(
            ok(ModuleType::Lcd16x2, &"x".repeat(40)),
            Err(CatalogError::OutOfRange { .. })
        ));
        assert!(matches!(
            ok(ModuleType::Lcd16x2, "a\nb\nc"),
            Err(CatalogError::OutOfRange { .. })
        ));
        assert!(ok(ModuleType::Lcd16x4, "one\ntwo\nthree\nfour").is_ok());
        assert!(matches!(
            ok(ModuleType::Lcd16x4, "1\n2\n3\n4\n5"),
            Err(CatalogError::OutOfRange { .. })
        ));
    }

    #[test]
    fn seven_segment_takes_one_digit() {
        assert!(validate_write(ModuleType::SevenSegment, &ChannelValue::Text("7".into())).is_ok());
        for bad in ["", "12", "x"] {
            assert!(matches!(
                validate_write(ModuleType::SevenSegment, &ChannelValue::Text(bad.into())),
                Err(CatalogError::OutOfRange { .. })
            ));
        }
    }

    #[test]
    fn extension_registration() {
        let mut catalog = Catalog::new();
        let gyro = ExtensionModule {
            id: 0x40,
            name: "gyro-x".into(),
            direction: Direction::Sensor,
            kind: ValueKind::Scalar,
            pin_count: 1,
            unit: "mdeg/s".into(),
            scale: Some((250, 1)),
        };
        catalog.register_extension(gyro.clone()).unwrap();
        assert_eq!(
            catalog.register_extension(gyro.clone()),
            Err(CatalogError::DuplicateExtension(0x40))
        );
        assert_eq!(
            catalog.register_extension(ExtensionModule { id: 0x20, ..gyro }),
            Err(CatalogError::BadExtensionId(0x20))
        );

        let spec = catalog.spec(0x40).unwrap();
        assert_eq!(spec.convert_raw(100), Ok(ChannelValue::Scalar(25_000)));
        assert_eq!(
            catalog.spec(0x41),
            Err(CatalogError::UnknownModuleType(0x41))
        );
        // Builtins resolve through the same lookup.
        assert_eq!(catalog.spec(0x03).unwrap().name(), "lm35");
    }

    #[test]
    fn full_capability_mask_matches_catalog() {
        assert_eq!(ModuleType::full_capability_mask(), 0x0001_FFFF);
    }
}
