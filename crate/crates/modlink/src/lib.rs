//! Toolkit for building game controllers out of hobby sensor and actuator
//! modules attached to a microcontroller board.
//!
//! The crate has three halves that meet on a byte stream:
//!
//! * [`protocol`] — the framed, checksummed wire format spoken between a
//!   host and a controller board, plus an incremental decoder that accepts
//!   arbitrary chunking.
//! * [`session`] — the host side: handshake, request/reply correlation with
//!   stop-and-wait retry, typed channel reads/writes, and periodic
//!   subscription streams.
//! * [`device`] — a virtual controller that runs the firmware-side loop
//!   (receive, parse, dispatch, respond) against programmable signal
//!   sources, so everything can be exercised without hardware.
//!
//! On top of those sit the [`catalog`] of supported module types (what a
//!   channel means, how raw readings convert to engineering units), the
//! [`trigger`] engine that turns sample streams into named game actions,
//! and [`record`] for capturing and replaying timestamped traces.
//!
//! Transports are pluggable: serial devices, TCP sockets, and in-memory
//! loopback pairs all implement [`transport::Transport`].

pub mod catalog;
pub mod device;
pub mod protocol;
pub mod record;
pub mod serial;
pub mod session;
pub mod transport;
pub mod trigger;
pub mod value;

pub use catalog::{descriptor_of, Catalog, Direction, ModuleDescriptor, ModuleType};
pub use protocol::{Command, DecodeOutcome, Decoder, DeviceInfo, Frame, Opcode, ProtocolError};
pub use session::{Session, SessionConfig, SessionError, SessionState, Subscription};
pub use transport::{Endpoint, Transport};
pub use value::{ChannelValue, ValueKind};
