//! Typed sample and command values carried over channels.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest ADC reading a 10-bit converter can produce.
pub const ANALOG_MAX: u16 = 1023;

/// Longest text value a channel accepts, in bytes.
pub const TEXT_MAX: usize = 64;

/// The four value shapes a channel can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Digital,
    Analog,
    Scalar,
    Text,
}

impl ValueKind {
    /// Wire tag used in value payloads.
    pub fn wire_id(self) -> u8 {
        match self {
            ValueKind::Digital => 0x00,
            ValueKind::Analog => 0x01,
            ValueKind::Scalar => 0x02,
            ValueKind::Text => 0x03,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<ValueKind> {
        match id {
            0x00 => Some(ValueKind::Digital),
            0x01 => Some(ValueKind::Analog),
            0x02 => Some(ValueKind::Scalar),
            0x03 => Some(ValueKind::Text),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Digital => "digital",
            ValueKind::Analog => "analog",
            ValueKind::Scalar => "scalar",
            ValueKind::Text => "text",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One sample read from, or command written to, a channel.
///
/// `Analog` is a raw 10-bit ADC count. `Scalar` is an engineering value in
/// milli-units of the owning module's unit (milli-degrees, milli-°C, ...),
/// kept integral so firmware never touches floating point. `Text` is
/// printable ASCII plus `\n` line breaks, at most [`TEXT_MAX`] bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelValue {
    Digital(bool),
    Analog(u16),
    Scalar(i32),
    Text(String),
}

impl ChannelValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            ChannelValue::Digital(_) => ValueKind::Digital,
            ChannelValue::Analog(_) => ValueKind::Analog,
            ChannelValue::Scalar(_) => ValueKind::Scalar,
            ChannelValue::Text(_) => ValueKind::Text,
        }
    }

    /// Check the value's own invariants (range and text shape).
    pub fn check(&self) -> Result<(), ValueError> {
        match self {
            ChannelValue::Digital(_) | ChannelValue::Scalar(_) => Ok(()),
            ChannelValue::Analog(raw) => {
                if *raw > ANALOG_MAX {
                    Err(ValueError::AnalogOutOfRange(*raw))
                } else {
                    Ok(())
                }
            }
            ChannelValue::Text(text) => {
                if text.len() > TEXT_MAX {
                    return Err(ValueError::TextTooLong(text.len()));
                }
                if let Some(&byte) = text.as_bytes().iter().find(|b| !is_printable(**b)) {
                    return Err(ValueError::UnprintableByte(byte));
                }
                Ok(())
            }
        }
    }

    /// Comparison value used by trigger predicates: milli-units of the
    /// converted value. Digital maps to 0/1000, analog counts scale by
    /// 1000, scalars are already milli. Text has no ordering.
    pub fn as_milli(&self) -> Option<i64> {
        match self {
            ChannelValue::Digital(level) => Some(i64::from(*level) * 1000),
            ChannelValue::Analog(raw) => Some(i64::from(*raw) * 1000),
            ChannelValue::Scalar(milli) => Some(i64::from(*milli)),
            ChannelValue::Text(_) => None,
        }
    }
}

impl fmt::Display for ChannelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelValue::Digital(level) => write!(f, "digital:{}", u8::from(*level)),
            ChannelValue::Analog(raw) => write!(f, "analog:{raw}"),
            ChannelValue::Scalar(milli) => write!(f, "scalar:{milli}"),
            ChannelValue::Text(text) => write!(f, "text:{text}"),
        }
    }
}

/// Bytes allowed inside a `Text` value: printable ASCII or a line break.
pub fn is_printable(byte: u8) -> bool {
    (0x20..=0x7E).contains(&byte) || byte == b'\n'
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValueError {
    #[error("analog value {0} exceeds {ANALOG_MAX}")]
    AnalogOutOfRange(u16),
    #[error("text value is {0} bytes, limit is {TEXT_MAX}")]
    TextTooLong(usize),
    #[error("text value contains unprintable byte 0x{0:02x}")]
    UnprintableByte(u8),
}
