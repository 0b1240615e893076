//! The wire protocol spoken between a host and a controller board.
//!
//! Every message is one frame:
//!
//! ```text
//! ┌─────────┬─────────┬─────────┬──────────┬─────────────┬─────────┐
//! │ SOF 7E  │ LEN (1) │ SEQ (1) │ OPCODE(1)│ PAYLOAD 0-64│ CRC (1) │
//! └─────────┴─────────┴─────────┴──────────┴─────────────┴─────────┘
//! ```
//!
//! `LEN` counts SEQ + OPCODE + PAYLOAD (2..=66). The CRC covers LEN, SEQ,
//! OPCODE and PAYLOAD. There is no byte stuffing: receivers scan for the
//! start byte and rely on the CRC to reject frames sliced mid-stream.
//! Multi-byte integers inside payloads are little-endian.
//!
//! Request opcodes live below 0x80 and each reply is `request | 0x80`.
//! `EVENT` (0xC5) is unsolicited — its SEQ field carries the subscription
//! id instead of a request sequence number. `ERROR` (0xFF) answers any
//! failed request, echoing the request's SEQ.
//!
//! `docs/protocol.md` in the repository root reproduces the full byte
//! layout table for every command.

mod command;
mod crc;
mod decoder;

pub use command::{decode_command, encode_command, encode_value, Command, ErrorCode};
pub use crc::crc8;
pub use decoder::{DecodeOutcome, Decoder};

use thiserror::Error;

/// Start-of-frame marker.
pub const SOF: u8 = 0x7E;

/// Hard cap on payload bytes per frame (device buffer bound).
pub const MAX_PAYLOAD: usize = 64;

/// Protocol revision this crate implements.
pub const PROTOCOL_VERSION: u8 = 1;

/// One wire message, before framing bytes and checksum are applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub seq: u8,
    pub opcode: u8,
    pub payload: Vec<u8>,
}

/// Operation selectors. Replies are `request | 0x80`; `Event` and `Error`
/// stand outside that scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Ping = 0x01,
    Hello = 0x02,
    Attach = 0x03,
    Detach = 0x04,
    Read = 0x05,
    Write = 0x06,
    Subscribe = 0x07,
    Unsubscribe = 0x08,
    AckPing = 0x81,
    AckHello = 0x82,
    AckAttach = 0x83,
    AckDetach = 0x84,
    Value = 0x85,
    AckWrite = 0x86,
    AckSubscribe = 0x87,
    AckUnsubscribe = 0x88,
    Event = 0xC5,
    Error = 0xFF,
}

impl Opcode {
    pub fn from_u8(byte: u8) -> Option<Opcode> {
        use Opcode::*;
        Some(match byte {
            0x01 => Ping,
            0x02 => Hello,
            0x03 => Attach,
            0x04 => Detach,
            0x05 => Read,
            0x06 => Write,
            0x07 => Subscribe,
            0x08 => Unsubscribe,
            0x81 => AckPing,
            0x82 => AckHello,
            0x83 => AckAttach,
            0x84 => AckDetach,
            0x85 => Value,
            0x86 => AckWrite,
            0x87 => AckSubscribe,
            0x88 => AckUnsubscribe,
            0xC5 => Event,
            0xFF => Error,
            _ => return None,
        })
    }

    pub fn is_request(self) -> bool {
        (self as u8) < 0x80
    }

    /// The opcode acknowledging this request, if it is one.
    pub fn reply(self) -> Option<Opcode> {
        if self.is_request() {
            Opcode::from_u8(self as u8 | 0x80)
        } else {
            None
        }
    }
}

/// What a device reports in its handshake acknowledgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceInfo {
    pub protocol_version: u8,
    pub firmware_version: u16,
    /// Bit `i` set means builtin module id `i` is supported.
    pub capabilities: u32,
}

impl DeviceInfo {
    pub fn supports(&self, module_id: u8) -> bool {
        module_id < 32 && self.capabilities & (1 << module_id) != 0
    }

    /// Module ids present in the capability mask, ascending.
    pub fn capability_ids(&self) -> Vec<u8> {
        (0..32).filter(|id| self.supports(*id)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("payload is {0} bytes, frame limit is {MAX_PAYLOAD}")]
    PayloadTooLong(usize),
    #[error("field out of encoding range: {0}")]
    InvalidField(&'static str),
    #[error("unknown opcode 0x{0:02x}")]
    UnknownOpcode(u8),
    #[error("malformed payload for opcode 0x{opcode:02x}: {reason}")]
    MalformedPayload { opcode: u8, reason: &'static str },
    #[error("protocol version mismatch: device reports {0}, expected {PROTOCOL_VERSION}")]
    VersionMismatch(u8),
}

/// Serialize a frame to wire bytes.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, ProtocolError> {
    if frame.payload.len() > MAX_PAYLOAD {
        return Err(ProtocolError::PayloadTooLong(frame.payload.len()));
    }
    let len = (frame.payload.len() + 2) as u8;
    let mut out = Vec::with_capacity(frame.payload.len() + 5);
    out.push(SOF);
    out.push(len);
    out.push(frame.seq);
    out.push(frame.opcode);
    out.extend_from_slice(&frame.payload);
    let crc = crc8(&out[1..]);
    out.push(crc);
    Ok(out)
}

/// The HELLO frame a host opens a session with.
pub fn build_handshake_request() -> Frame {
    Frame {
        seq: 0,
        opcode: Opcode::Hello as u8,
        payload: vec![PROTOCOL_VERSION],
    }
}

/// Extract [`DeviceInfo`] from an ACK_HELLO frame.
///
/// Reply payload layout: `[version, fw_lo, fw_hi, cap0, cap1, cap2, cap3]`
/// with the capability mask little-endian.
pub fn parse_handshake_reply(frame: &Frame) -> Result<DeviceInfo, ProtocolError> {
    if frame.opcode != Opcode::AckHello as u8 {
        return Err(ProtocolError::MalformedPayload {
            opcode: frame.opcode,
            reason: "not an ACK_HELLO frame",
        });
    }
    if frame.payload.len() != 7 {
        return Err(ProtocolError::MalformedPayload {
            opcode: frame.opcode,
            reason: "ACK_HELLO payload must be 7 bytes",
        });
    }
    let info = DeviceInfo {
        protocol_version: frame.payload[0],
        firmware_version: u16::from_le_bytes([frame.payload[1], frame.payload[2]]),
        capabilities: u32::from_le_bytes([
            frame.payload[3],
            frame.payload[4],
            frame.payload[5],
            frame.payload[6],
        ]),
    };
    if info.protocol_version != PROTOCOL_VERSION {
        return Err(ProtocolError::VersionMismatch(info.protocol_version));
    }
    Ok(info)
}
