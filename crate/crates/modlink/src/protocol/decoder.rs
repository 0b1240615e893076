//! Incremental frame decoder.
//!
//! Feed it bytes in whatever chunks the transport delivers; it emits one
//! outcome per completed frame, CRC failure, or resynchronization. The
//! decoder never fails hard: garbage is skipped while scanning for the
//! start byte, and a frame whose checksum does not match is discarded
//! without rescanning its interior.
//!
//! Buffering is bounded: at most the start byte, the length byte, and the
//! 66-byte body are held for an in-progress frame (the trailing CRC byte
//! is compared on arrival). A frame started by stray bytes that mimic a
//! header therefore resolves within 68 bytes, after which the stream
//! realigns — any valid frame preceded by at least 68 non-start filler
//! bytes is always decoded.

use super::{crc8, Frame, MAX_PAYLOAD, SOF};

/// What one decoding step produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    /// A complete frame with a valid checksum.
    Frame(Frame),
    /// A complete frame whose checksum failed; it has been discarded.
    BadCrc,
    /// `n` garbage bytes were skipped before a start byte was found.
    Resync(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    /// Scanning for SOF.
    Hunt,
    /// SOF seen, next byte is LEN.
    Length,
    /// Collecting LEN body bytes into `buf`, then the CRC.
    Body { len: usize },
}

/// Stateful incremental decoder. One instance per byte stream; do not feed
/// a single instance from multiple threads.
#[derive(Debug, Clone)]
pub struct Decoder {
    state: State,
    /// Holds `[LEN, SEQ, OPCODE, payload...]` while a frame is in progress.
    buf: Vec<u8>,
    skipped: usize,
}

impl Default for Decoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Decoder {
    pub fn new() -> Self {
        Decoder {
            state: State::Hunt,
            buf: Vec::with_capacity(MAX_PAYLOAD + 3),
            skipped: 0,
        }
    }

    /// Bytes currently held for an in-progress frame, counting the
    /// consumed SOF marker. Never exceeds 68 (SOF + LEN + 66-byte body).
    pub fn buffered_len(&self) -> usize {
        match self.state {
            State::Hunt => 0,
            State::Length => 1,
            State::Body { .. } => 1 + self.buf.len(),
        }
    }

    /// Consume `bytes`, returning the outcomes they completed. Chunking is
    /// irrelevant: splitting a stream across `feed` calls in any way yields
    /// the same outcome sequence.
    pub fn feed(&mut self, bytes: &[u8]) -> Vec<DecodeOutcome> {
        let mut out = Vec::new();
        for &byte in bytes {
            self.push(byte, &mut out);
        }
        out
    }

    fn push(&mut self, byte: u8, out: &mut Vec<DecodeOutcome>) {
        match self.state {
            State::Hunt => {
                if byte == SOF {
                    if self.skipped > 0 {
                        out.push(DecodeOutcome::Resync(std::mem::take(&mut self.skipped)));
                    }
                    self.state = State::Length;
                } else {
                    self.skipped += 1;
                }
            }
            State::Length => {
                let len = byte as usize;
                if (2..=MAX_PAYLOAD + 2).contains(&len) {
                    self.buf.clear();
                    self.buf.push(byte);
                    self.state = State::Body { len };
                } else {
                    // Not a real frame start. The SOF byte was garbage; the
                    // length byte might itself start a frame, so rescan it.
                    self.skipped += 1;
                    self.state = State::Hunt;
                    self.push(byte, out);
                }
            }
            State::Body { len } => {
                if self.buf.len() < len + 1 {
                    self.buf.push(byte);
                } else {
                    // Body complete; this byte is the CRC.
                    if crc8(&self.buf) == byte {
                        out.push(DecodeOutcome::Frame(Frame {
                            seq: self.buf[1],
                            opcode: self.buf[2],
                            payload: self.buf[3..].to_vec(),
                        }));
                    } else {
                        out.push(DecodeOutcome::BadCrc);
                    }
                    self.buf.clear();
                    self.state = State::Hunt;
                }
            }
        }
    }
}
