//! Typed commands and their payload layouts.
//!
//! Payloads per opcode (all integers little-endian):
//!
//! ```text
//! PING / ACK_PING / ACK_DETACH / ACK_WRITE / ACK_UNSUBSCRIBE   (empty)
//! HELLO        [version]
//! ATTACH       [module_type, pin_count, pins...]
//! DETACH       [channel]
//! READ         [channel]
//! WRITE        [channel, value...]
//! SUBSCRIBE    [channel, period_lo, period_hi]
//! UNSUBSCRIBE  [subscription]
//! ACK_HELLO    [version, fw_lo, fw_hi, cap0, cap1, cap2, cap3]
//! ACK_ATTACH   [channel]
//! VALUE        [channel, value...]
//! ACK_SUBSCRIBE [subscription]
//! EVENT        [value...]            (frame SEQ carries the subscription id)
//! ERROR        [code, offending_opcode]
//! ```
//!
//! A `value...` field is a kind tag followed by the value bytes:
//! `00 b` digital, `01 lo hi` analog, `02 b0..b3` scalar (i32),
//! `03 len bytes...` text.

use super::{DeviceInfo, Frame, Opcode, ProtocolError};
use crate::value::{ChannelValue, ValueKind, ANALOG_MAX, TEXT_MAX};

/// Error codes a device reports in ERROR frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    UnknownOpcode,
    MalformedPayload,
    UnknownModuleType,
    PinConflict,
    BadChannel,
    WrongDirection,
    BadValue,
    TableFull,
    BadSubscription,
    /// A code this crate does not know (newer firmware, or corruption the
    /// CRC missed).
    Other(u8),
}

impl ErrorCode {
    pub fn as_u8(self) -> u8 {
        match self {
            ErrorCode::UnknownOpcode => 0x01,
            ErrorCode::MalformedPayload => 0x02,
            ErrorCode::UnknownModuleType => 0x03,
            ErrorCode::PinConflict => 0x04,
            ErrorCode::BadChannel => 0x05,
            ErrorCode::WrongDirection => 0x06,
            ErrorCode::BadValue => 0x07,
            ErrorCode::TableFull => 0x08,
            ErrorCode::BadSubscription => 0x09,
            ErrorCode::Other(code) => code,
        }
    }

    pub fn from_u8(code: u8) -> ErrorCode {
        match code {
            0x01 => ErrorCode::UnknownOpcode,
            0x02 => ErrorCode::MalformedPayload,
            0x03 => ErrorCode::UnknownModuleType,
            0x04 => ErrorCode::PinConflict,
            0x05 => ErrorCode::BadChannel,
            0x06 => ErrorCode::WrongDirection,
            0x07 => ErrorCode::BadValue,
            0x08 => ErrorCode::TableFull,
            0x09 => ErrorCode::BadSubscription,
            other => ErrorCode::Other(other),
        }
    }
}

/// A decoded frame: one variant per opcode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Ping,
    Hello {
        protocol_version: u8,
    },
    Attach {
        module_type: u8,
        pins: Vec<u8>,
    },
    Detach {
        channel: u8,
    },
    Read {
        channel: u8,
    },
    Write {
        channel: u8,
        value: ChannelValue,
    },
    Subscribe {
        channel: u8,
        period_ms: u16,
    },
    Unsubscribe {
        subscription: u8,
    },
    AckPing,
    AckHello(DeviceInfo),
    AckAttach {
        channel: u8,
    },
    AckDetach,
    Value {
        channel: u8,
        value: ChannelValue,
    },
    AckWrite,
    AckSubscribe {
        subscription: u8,
    },
    AckUnsubscribe,
    Event {
        subscription: u8,
        value: ChannelValue,
    },
    Error {
        code: u8,
        offending_opcode: u8,
    },
}

impl Command {
    pub fn opcode(&self) -> Opcode {
        match self {
            Command::Ping => Opcode::Ping,
            Command::Hello { .. } => Opcode::Hello,
            Command::Attach { .. } => Opcode::Attach,
            Command::Detach { .. } => Opcode::Detach,
            Command::Read { .. } => Opcode::Read,
            Command::Write { .. } => Opcode::Write,
            Command::Subscribe { .. } => Opcode::Subscribe,
            Command::Unsubscribe { .. } => Opcode::Unsubscribe,
            Command::AckPing => Opcode::AckPing,
            Command::AckHello(_) => Opcode::AckHello,
            Command::AckAttach { .. } => Opcode::AckAttach,
            Command::AckDetach => Opcode::AckDetach,
            Command::Value { .. } => Opcode::Value,
            Command::AckWrite => Opcode::AckWrite,
            Command::AckSubscribe { .. } => Opcode::AckSubscribe,
            Command::AckUnsubscribe => Opcode::AckUnsubscribe,
            Command::Event { .. } => Opcode::Event,
            Command::Error { .. } => Opcode::Error,
        }
    }
}

/// Append the wire form of a value (kind tag + bytes) to `out`.
pub fn encode_value(value: &ChannelValue, out: &mut Vec<u8>) -> Result<(), ProtocolError> {
    match value {
        ChannelValue::Digital(level) => {
            out.push(ValueKind::Digital.wire_id());
            out.push(u8::from(*level));
        }
        ChannelValue::Analog(raw) => {
            if *raw > ANALOG_MAX {
                return Err(ProtocolError::InvalidField("analog value exceeds 1023"));
            }
            out.push(ValueKind::Analog.wire_id());
            out.extend_from_slice(&raw.to_le_bytes());
        }
        ChannelValue::Scalar(milli) => {
            out.push(ValueKind::Scalar.wire_id());
            out.extend_from_slice(&milli.to_le_bytes());
        }
        ChannelValue::Text(text) => {
            if text.len() > TEXT_MAX {
                return Err(ProtocolError::InvalidField("text value exceeds 64 bytes"));
            }
            if !text.bytes().all(crate::value::is_printable) {
                return Err(ProtocolError::InvalidField(
                    "text value has unprintable bytes",
                ));
            }
            out.push(ValueKind::Text.wire_id());
            out.push(text.len() as u8);
            out.extend_from_slice(text.as_bytes());
        }
    }
    Ok(())
}

/// Cursor over a frame payload with strict bounds checking.
struct Reader<'a> {
    payload: &'a [u8],
    cursor: usize,
    opcode: u8,
}

impl<'a> Reader<'a> {
    fn new(frame: &'a Frame) -> Self {
        Reader {
            payload: &frame.payload,
            cursor: 0,
            opcode: frame.opcode,
        }
    }

    fn fail(&self, reason: &'static str) -> ProtocolError {
        ProtocolError::MalformedPayload {
            opcode: self.opcode,
            reason,
        }
    }

    fn take_u8(&mut self) -> Result<u8, ProtocolError> {
        if self.cursor >= self.payload.len() {
            return Err(self.fail("payload shorter than layout requires"));
        }
        let byte = self.payload[self.cursor];
        self.cursor += 1;
        Ok(byte)
    }

    fn take_u16(&mut self) -> Result<u16, ProtocolError> {
        let lo = self.take_u8()?;
        let hi = self.take_u8()?;
        Ok(u16::from_le_bytes([lo, hi]))
    }

    fn take_bytes(&mut self, count: usize) -> Result<&'a [u8], ProtocolError> {
        if self.payload.len() - self.cursor < count {
            return Err(self.fail("payload shorter than layout requires"));
        }
        let slice = &self.payload[self.cursor..self.cursor + count];
        self.cursor += count;
        Ok(slice)
    }

    fn take_value(&mut self) -> Result<ChannelValue, ProtocolError> {
        let kind = self.take_u8()?;
        let kind = ValueKind::from_wire_id(kind).ok_or_else(|| self.fail("unknown value kind"))?;
        match kind {
            ValueKind::Digital => match self.take_u8()? {
                0 => Ok(ChannelValue::Digital(false)),
                1 => Ok(ChannelValue::Digital(true)),
                _ => Err(self.fail("digital value must be 0 or 1")),
            },
            ValueKind::Analog => {
                let raw = self.take_u16()?;
                if raw > ANALOG_MAX {
                    return Err(self.fail("analog value exceeds 1023"));
                }
                Ok(ChannelValue::Analog(raw))
            }
            ValueKind::Scalar => {
                let bytes = self.take_bytes(4)?;
                Ok(ChannelValue::Scalar(i32::from_le_bytes([
                    bytes[0], bytes[1], bytes[2], bytes[3],
                ])))
            }
            ValueKind::Text => {
                let len = self.take_u8()? as usize;
                if len > TEXT_MAX {
                    return Err(self.fail("text length exceeds 64"));
                }
                let bytes = self.take_bytes(len)?;
                if !bytes.iter().copied().all(crate::value::is_printable) {
                    return Err(self.fail("text value has unprintable bytes"));
                }
                // Printable ASCII is always valid UTF-8.
                Ok(ChannelValue::Text(
                    String::from_utf8(bytes.to_vec()).unwrap(),
                ))
            }
        }
    }

    fn finish(self) -> Result<(), ProtocolError> {
        if self.cursor != self.payload.len() {
            return Err(self.fail("trailing bytes after payload"));
        }
        Ok(())
    }
}

/// Build the frame carrying `cmd`.
///
/// `seq` becomes the frame's sequence number, except for `Event`, whose
/// SEQ field carries the subscription id (unsolicited frames have no
/// request to correlate with).
pub fn encode_command(seq: u8, cmd: &Command) -> Result<Frame, ProtocolError> {
    let mut payload = Vec::new();
    let mut frame_seq = seq;
    match cmd {
        Command::Ping
        | Command::AckPing
        | Command::AckDetach
        | Command::AckWrite
        | Command::AckUnsubscribe => {}
        Command::Hello { protocol_version } => payload.push(*protocol_version),
        Command::Attach { module_type, pins } => {
            if pins.len() > 62 {
                return Err(ProtocolError::InvalidField(
                    "attach carries at most 62 pins",
                ));
            }
            payload.push(*module_type);
            payload.push(pins.len() as u8);
            payload.extend_from_slice(pins);
        }
        Command::Detach { channel } | Command::Read { channel } => payload.push(*channel),
        Command::Write { channel, value } => {
            payload.push(*channel);
            encode_value(value, &mut payload)?;
        }
        Command::Subscribe { channel, period_ms } => {
            payload.push(*channel);
            payload.extend_from_slice(&period_ms.to_le_bytes());
        }
        Command::Unsubscribe { subscription } => payload.push(*subscription),
        Command::AckHello(info) => {
            payload.push(info.protocol_version);
            payload.extend_from_slice(&info.firmware_version.to_le_bytes());
            payload.extend_from_slice(&info.capabilities.to_le_bytes());
        }
        Command::AckAttach { channel } => payload.push(*channel),
        Command::Value { channel, value } => {
            payload.push(*channel);
            encode_value(value, &mut payload)?;
        }
        Command::AckSubscribe { subscription } => payload.push(*subscription),
        Command::Event {
            subscription,
            value,
        } => {
            frame_seq = *subscription;
            encode_value(value, &mut payload)?;
        }
        Command::Error {
            code,
            offending_opcode,
        } => {
            payload.push(*code);
            payload.push(*offending_opcode);
        }
    }
    Ok(Frame {
        seq: frame_seq,
        opcode: cmd.opcode() as u8,
        payload,
    })
}

/// Inverse of [`encode_command`]. The frame must already have passed its
/// CRC check.
pub fn decode_command(frame: &Frame) -> Result<Command, ProtocolError> {
    let opcode = Opcode::from_u8(frame.opcode).ok_or(ProtocolError::UnknownOpcode(frame.opcode))?;
    let mut reader = Reader::new(frame);
    let cmd = match opcode {
        Opcode::Ping => Command::Ping,
        Opcode::Hello => Command::Hello {
            protocol_version: reader.take_u8()?,
        },
        Opcode::Attach => {
            let module_type = reader.take_u8()?;
            let pin_count = reader.take_u8()? as usize;
            let pins = reader.take_bytes(pin_count)?.to_vec();
            Command::Attach { module_type, pins }
        }
        Opcode::Detach => Command::Detach {
            channel: reader.take_u8()?,
        },
        Opcode::Read => Command::Read {
            channel: reader.take_u8()?,
        },
        Opcode::Write => Command::Write {
            channel: reader.take_u8()?,
            value: reader.take_value()?,
        },
        Opcode::Subscribe => Command::Subscribe {
            channel: reader.take_u8()?,
            period_ms: reader.take_u16()?,
        },
        Opcode::Unsubscribe => Command::Unsubscribe {
            subscription: reader.take_u8()?,
        },
        Opcode::AckPing => Command::AckPing,
        Opcode::AckHello => {
            let protocol_version = reader.take_u8()?;
            let firmware_version = reader.take_u16()?;
            let bytes = reader.take_bytes(4)?;
            Command::AckHello(DeviceInfo {
                protocol_version,
                firmware_version,
                capabilities: u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
            })
        }
        Opcode::AckAttach => Command::AckAttach {
            channel: reader.take_u8()?,
        },
        Opcode::AckDetach => Command::AckDetach,
        Opcode::Value => Command::Value {
            channel: reader.take_u8()?,
            value: reader.take_value()?,
        },
        Opcode::AckWrite => Command::AckWrite,
        Opcode::AckSubscribe => Command::AckSubscribe {
            subscription: reader.take_u8()?,
        },
        Opcode::AckUnsubscribe => Command::AckUnsubscribe,
        Opcode::Event => Command::Event {
            subscription: frame.seq,
            value: reader.take_value()?,
        },
        Opcode::Error => Command::Error {
            code: reader.take_u8()?,
            offending_opcode: reader.take_u8()?,
        },
    };
    reader.finish()?;
    Ok(cmd)
}
