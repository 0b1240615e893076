//! Host side of the link: handshake, request/reply correlation, typed
//! channel access, and subscription event delivery.
//!
//! A session is stop-and-wait: one request in flight, matched to its reply
//! by sequence number, resent up to the configured attempt count when a
//! reply does not arrive in time. EVENT frames interleave freely with
//! replies; they are converted to engineering units and either handed to a
//! subscription's sink or queued (bounded) for [`Session::poll_events`].
//!
//! A session may move between threads but must not serve requests from two
//! contexts at once; the type is `Send` and not `Sync`, which makes the
//! compiler enforce exactly that.

use crate::catalog::{Catalog, CatalogError, Direction, ModuleType};
use crate::protocol::{
    decode_command, encode_command, encode_frame, Command, DecodeOutcome, Decoder, DeviceInfo,
    ErrorCode, Frame, Opcode, ProtocolError, PROTOCOL_VERSION,
};
use crate::transport::Transport;
use crate::value::ChannelValue;
use std::collections::{BTreeMap, VecDeque};
use std::io;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Queued events the session holds before dropping the oldest.
pub const EVENT_QUEUE_CAP: usize = 1024;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// How long one attempt waits for its reply.
    pub reply_timeout: Duration,
    /// Total send attempts per request, first try included.
    pub retries: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            reply_timeout: Duration::from_millis(250),
            retries: 3,
        }
    }
}

/// Connection lifecycle. Requests are only served in `Ready`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionState {
    Disconnected,
    HelloSent,
    Ready,
    Closed,
    Failed(String),
}

/// Handle for one live subscription.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subscription {
    pub id: u8,
    pub channel: u8,
    pub period_ms: u16,
}

/// Consumer for pushed subscription events: `(subscription id, value)`.
pub type EventSink = Box<dyn FnMut(u8, ChannelValue) + Send>;

struct SubRecord {
    channel: u8,
    sink: Option<EventSink>,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("handshake timed out after {0} attempts")]
    HandshakeTimeout(u32),
    #[error("protocol version mismatch: device reports {0}")]
    VersionMismatch(u8),
    #[error("request timed out after {0} attempts")]
    Timeout(u32),
    #[error("transport: {0}")]
    Transport(#[from] io::Error),
    #[error("device reported {code:?} for opcode 0x{opcode:02x}")]
    Device { code: ErrorCode, opcode: u8 },
    #[error("channel {channel} has the wrong direction (operation needs a {needed:?})")]
    WrongDirection { channel: u8, needed: Direction },
    #[error("module 0x{module:02x} needs {expected} pins, got {got}")]
    PinCount { module: u8, expected: u8, got: u8 },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("subscription period {0} ms outside 10..=60000")]
    InvalidPeriod(u16),
    #[error("session is closed")]
    Closed,
    #[error("session is not ready: {0}")]
    NotReady(String),
    #[error("malformed reply: {0}")]
    BadReply(&'static str),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Open a session over `transport`: sends HELLO, awaits the device's
/// acknowledgment, and verifies the protocol version.
pub fn open_session(
    transport: Box<dyn Transport>,
    config: SessionConfig,
) -> Result<Session, SessionError> {
    Session::open(transport, config)
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("state", &self.state)
            .field("info", &self.info)
            .field("bindings", &self.bindings)
            .field("queued_events", &self.events.len())
            .finish_non_exhaustive()
    }
}

pub struct Session {
    transport: Option<Box<dyn Transport>>,
    config: SessionConfig,
    catalog: Catalog,
    state: SessionState,
    info: DeviceInfo,
    decoder: Decoder,
    next_seq: u8,
    /// channel -> module wire id, for local checks and unit conversion.
    bindings: BTreeMap<u8, u8>,
    subs: BTreeMap<u8, SubRecord>,
    events: VecDeque<(u8, ChannelValue)>,
    dropped_events: u64,
    /// Events handed to sinks (they bypass the queue).
    sunk: u64,
}

impl Session {
    pub fn open(
        transport: Box<dyn Transport>,
        config: SessionConfig,
    ) -> Result<Session, SessionError> {
        Session::open_with_catalog(transport, config, Catalog::new())
    }

    /// Like [`Session::open`] but with extension modules already
    /// registered, so they can be attached immediately.
    pub fn open_with_catalog(
        transport: Box<dyn Transport>,
        config: SessionConfig,
        catalog: Catalog,
    ) -> Result<Session, SessionError> {
        let mut session = Session {
            transport: Some(transport),
            config,
            catalog,
            state: SessionState::Disconnected,
            info: DeviceInfo {
                protocol_version: 0,
                firmware_version: 0,
                capabilities: 0,
            },
            decoder: Decoder::new(),
            next_seq: 0,
            bindings: BTreeMap::new(),
            subs: BTreeMap::new(),
            events: VecDeque::new(),
            dropped_events: 0,
            sunk: 0,
        };
        session.state = SessionState::HelloSent;
        match session.roundtrip(&Command::Hello {
            protocol_version: PROTOCOL_VERSION,
        }) {
            Ok(Command::AckHello(info)) => {
                if info.protocol_version != PROTOCOL_VERSION {
                    session.state =
                        SessionState::Failed(format!("version {}", info.protocol_version));
                    return Err(SessionError::VersionMismatch(info.protocol_version));
                }
                session.info = info;
                session.state = SessionState::Ready;
                Ok(session)
            }
            Ok(_) => {
                session.state = SessionState::Failed("bad handshake reply".into());
                Err(SessionError::BadReply("handshake reply was not ACK_HELLO"))
            }
            Err(SessionError::Timeout(attempts)) => {
                session.state = SessionState::Failed("handshake timeout".into());
                Err(SessionError::HandshakeTimeout(attempts))
            }
            Err(other) => {
                session.state = SessionState::Failed(other.to_string());
                Err(other)
            }
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn device_info(&self) -> DeviceInfo {
        self.info
    }

    /// Extension modules must be registered here (or via
    /// [`Session::open_with_catalog`]) before attaching them.
    pub fn catalog_mut(&mut self) -> &mut Catalog {
        &mut self.catalog
    }

    /// Events dropped to the queue bound since the session opened.
    pub fn dropped_events(&self) -> u64 {
        self.dropped_events
    }

    /// Round-trip time of one PING.
    pub fn ping(&mut self) -> Result<Duration, SessionError> {
        self.ensure_ready()?;
        let start = Instant::now();
        match self.roundtrip(&Command::Ping)? {
            Command::AckPing => Ok(start.elapsed()),
            _ => Err(SessionError::BadReply("expected ACK_PING")),
        }
    }

    /// Attach a module to the given pins; returns the device-assigned
    /// channel. Pin count is checked locally against the catalog before
    /// anything is sent.
    pub fn attach(&mut self, module: u8, pins: &[u8]) -> Result<u8, SessionError> {
        self.ensure_ready()?;
        let expected = self.catalog.spec(module)?.pin_count();
        if usize::from(expected) != pins.len() {
            return Err(SessionError::PinCount {
                module,
                expected,
                got: pins.len() as u8,
            });
        }
        match self.roundtrip(&Command::Attach {
            module_type: module,
            pins: pins.to_vec(),
        })? {
            Command::AckAttach { channel } => {
                self.bindings.insert(channel, module);
                Ok(channel)
            }
            _ => Err(SessionError::BadReply("expected ACK_ATTACH")),
        }
    }

    pub fn attach_module(&mut self, module: ModuleType, pins: &[u8]) -> Result<u8, SessionError> {
        self.attach(module.id(), pins)
    }

    /// Tell the session what a channel attached elsewhere (an earlier
    /// process, a config preload) means, enabling local checks and unit
    /// conversion for it.
    pub fn register_channel(&mut self, channel: u8, module: u8) -> Result<(), SessionError> {
        self.catalog.spec(module)?;
        self.bindings.insert(channel, module);
        Ok(())
    }

    pub fn detach(&mut self, channel: u8) -> Result<(), SessionError> {
        self.ensure_ready()?;
        match self.roundtrip(&Command::Detach { channel })? {
            Command::AckDetach => {
                self.bindings.remove(&channel);
                self.subs.retain(|_, sub| sub.channel != channel);
                Ok(())
            }
            _ => Err(SessionError::BadReply("expected ACK_DETACH")),
        }
    }

    /// Read a sensor channel, converting the raw reading per the module's
    /// descriptor. Channels this session has no binding for are passed
    /// through unconverted (the device still validates them).
    pub fn read(&mut self, channel: u8) -> Result<ChannelValue, SessionError> {
        self.ensure_ready()?;
        self.check_direction(channel, Direction::Sensor)?;
        match self.roundtrip(&Command::Read { channel })? {
            Command::Value {
                channel: got,
                value,
            } if got == channel => self.convert_incoming(channel, &value),
            Command::Value { .. } => Err(SessionError::BadReply("value for the wrong channel")),
            _ => Err(SessionError::BadReply("expected VALUE")),
        }
    }

    /// Write an actuator channel. For channels with a known binding the
    /// value is validated locally first, so bad writes fail fast without a
    /// device round trip.
    pub fn write(&mut self, channel: u8, value: ChannelValue) -> Result<(), SessionError> {
        self.ensure_ready()?;
        self.check_direction(channel, Direction::Actuator)?;
        if let Some(&module) = self.bindings.get(&channel) {
            self.catalog.spec(module)?.validate_write(&value)?;
        }
        match self.roundtrip(&Command::Write { channel, value })? {
            Command::AckWrite => Ok(()),
            _ => Err(SessionError::BadReply("expected ACK_WRITE")),
        }
    }

    /// Subscribe to periodic samples of a sensor channel; events arrive
    /// via [`Session::poll_events`].
    pub fn subscribe(&mut self, channel: u8, period_ms: u16) -> Result<Subscription, SessionError> {
        self.subscribe_inner(channel, period_ms, None)
    }

    /// Subscribe with a sink that is invoked during pumping instead of
    /// queueing.
    pub fn subscribe_with_sink(
        &mut self,
        channel: u8,
        period_ms: u16,
        sink: EventSink,
    ) -> Result<Subscription, SessionError> {
        self.subscribe_inner(channel, period_ms, Some(sink))
    }

    fn subscribe_inner(
        &mut self,
        channel: u8,
        period_ms: u16,
        sink: Option<EventSink>,
    ) -> Result<Subscription, SessionError> {
        self.ensure_ready()?;
        if !(10..=60_000).contains(&period_ms) {
            return Err(SessionError::InvalidPeriod(period_ms));
        }
        self.check_direction(channel, Direction::Sensor)?;
        match self.roundtrip(&Command::Subscribe { channel, period_ms })? {
            Command::AckSubscribe { subscription } => {
                self.subs.insert(subscription, SubRecord { channel, sink });
                Ok(Subscription {
                    id: subscription,
                    channel,
                    period_ms,
                })
            }
            _ => Err(SessionError::BadReply("expected ACK_SUBSCRIBE")),
        }
    }

    /// Stop a subscription. Events already received stay queued; events in
    /// flight during the exchange are drained into the queue as usual.
    pub fn unsubscribe(&mut self, sub: Subscription) -> Result<(), SessionError> {
        self.ensure_ready()?;
        match self.roundtrip(&Command::Unsubscribe {
            subscription: sub.id,
        })? {
            Command::AckUnsubscribe => {
                self.subs.remove(&sub.id);
                Ok(())
            }
            _ => Err(SessionError::BadReply("expected ACK_UNSUBSCRIBE")),
        }
    }

    /// Return up to `max` queued `(subscription id, value)` events without
    /// blocking, draining whatever the transport already holds first.
    pub fn poll_events(&mut self, max: usize) -> Result<Vec<(u8, ChannelValue)>, SessionError> {
        self.ensure_ready()?;
        self.drain_transport()?;
        let n = max.min(self.events.len());
        Ok(self.events.drain(..n).collect())
    }

    /// Block up to `wait` for traffic, then drain. Returns the number of
    /// events added to the queue (or delivered to sinks).
    pub fn pump(&mut self, wait: Duration) -> Result<usize, SessionError> {
        self.ensure_ready()?;
        let before = self.queued_plus_sunk();
        let mut buf = [0u8; 512];
        let n = self.transport_read(&mut buf, wait)?;
        if n > 0 {
            self.ingest(&buf[..n]);
        }
        self.drain_transport()?;
        Ok(self.queued_plus_sunk() - before)
    }

    /// Close the session: nothing is sent, the transport is released, and
    /// every later call fails with [`SessionError::Closed`].
    pub fn close(&mut self) {
        self.state = SessionState::Closed;
        self.transport = None;
    }

    fn queued_plus_sunk(&self) -> usize {
        // Sinks consume events immediately; count both so pump() reports
        // progress either way.
        self.events.len() + self.sunk as usize
    }

    fn ensure_ready(&self) -> Result<(), SessionError> {
        match &self.state {
            SessionState::Ready | SessionState::HelloSent => Ok(()),
            SessionState::Closed => Err(SessionError::Closed),
            SessionState::Disconnected => Err(SessionError::NotReady("not connected".into())),
            SessionState::Failed(reason) => Err(SessionError::NotReady(reason.clone())),
        }
    }

    fn check_direction(&self, channel: u8, needed: Direction) -> Result<(), SessionError> {
        if let Some(&module) = self.bindings.get(&channel) {
            let spec = self.catalog.spec(module)?;
            if spec.direction() != needed {
                return Err(SessionError::WrongDirection { channel, needed });
            }
        }
        Ok(())
    }

    fn transport_read(&mut self, buf: &mut [u8], wait: Duration) -> Result<usize, SessionError> {
        let transport = self.transport.as_mut().ok_or(SessionError::Closed)?;
        match transport.read(buf, wait) {
            Ok(n) => Ok(n),
            Err(e) => {
                self.state = SessionState::Failed(e.to_string());
                Err(SessionError::Transport(e))
            }
        }
    }

    fn transport_write(&mut self, bytes: &[u8]) -> Result<(), SessionError> {
        let transport = self.transport.as_mut().ok_or(SessionError::Closed)?;
        match transport.write(bytes) {
            Ok(()) => Ok(()),
            Err(e) => {
                self.state = SessionState::Failed(e.to_string());
                Err(SessionError::Transport(e))
            }
        }
    }

    /// Stop-and-wait exchange: send, await the matching-seq reply, retry
    /// on silence. Interleaved EVENT frames are dispatched, never returned.
    fn roundtrip(&mut self, cmd: &Command) -> Result<Command, SessionError> {
        let seq = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        let request = encode_command(seq, cmd)?;
        let reply_opcode = Opcode::from_u8(request.opcode)
            .and_then(Opcode::reply)
            .map(|op| op as u8)
            .ok_or(SessionError::BadReply("command is not a request"))?;
        let bytes = encode_frame(&request)?;

        let attempts = self.config.retries.max(1);
        let mut buf = [0u8; 512];
        for _ in 0..attempts {
            self.transport_write(&bytes)?;
            let deadline = Instant::now() + self.config.reply_timeout;
            loop {
                let remaining = deadline.saturating_duration_since(Instant::now());
                let n = self.transport_read(&mut buf, remaining)?;
                if n == 0 {
                    break; // this attempt's window is over
                }
                if let Some(reply) = self.ingest_expecting(&buf[..n], seq, reply_opcode)? {
                    return Ok(reply);
                }
                if Instant::now() >= deadline {
                    break;
                }
            }
        }
        Err(SessionError::Timeout(attempts))
    }

    /// Feed bytes to the decoder; dispatch events; return the reply
    /// matching (`seq`, `reply_opcode`) if it appeared. A matching ERROR
    /// frame fails the request.
    fn ingest_expecting(
        &mut self,
        bytes: &[u8],
        seq: u8,
        reply_opcode: u8,
    ) -> Result<Option<Command>, SessionError> {
        for outcome in self.decoder.feed(bytes) {
            let DecodeOutcome::Frame(frame) = outcome else {
                // Bad CRC or resync: the retry policy recovers; nothing to
                // do here.
                continue;
            };
            if frame.opcode == Opcode::Event as u8 {
                self.handle_event(&frame);
                continue;
            }
            if frame.seq != seq {
                continue; // stale reply to an earlier attempt or request
            }
            if frame.opcode == Opcode::Error as u8 {
                if let Ok(Command::Error {
                    code,
                    offending_opcode,
                }) = decode_command(&frame)
                {
                    return Err(SessionError::Device {
                        code: ErrorCode::from_u8(code),
                        opcode: offending_opcode,
                    });
                }
                continue;
            }
            if frame.opcode == reply_opcode {
                return Ok(Some(decode_command(&frame)?));
            }
        }
        Ok(None)
    }

    /// Feed bytes outside any pending request: events are dispatched,
    /// anything else is stale and dropped.
    fn ingest(&mut self, bytes: &[u8]) {
        for outcome in self.decoder.feed(bytes) {
            if let DecodeOutcome::Frame(frame) = outcome {
                if frame.opcode == Opcode::Event as u8 {
                    self.handle_event(&frame);
                }
            }
        }
    }

    fn drain_transport(&mut self) -> Result<(), SessionError> {
        let mut buf = [0u8; 512];
        loop {
            let n = self.transport_read(&mut buf, Duration::ZERO)?;
            if n == 0 {
                return Ok(());
            }
            self.ingest(&buf[..n]);
        }
    }

    fn handle_event(&mut self, frame: &Frame) {
        let Ok(Command::Event {
            subscription,
            value,
        }) = decode_command(frame)
        else {
            return; // junk event, drop
        };
        let Some(channel) = self.subs.get(&subscription).map(|s| s.channel) else {
            return; // stale event after unsubscribe
        };
        let Ok(converted) = self.convert_incoming(channel, &value) else {
            return; // out-of-domain raw, drop
        };
        let record = self.subs.get_mut(&subscription).unwrap();
        if let Some(sink) = record.sink.as_mut() {
            sink(subscription, converted);
            self.sunk += 1;
        } else {
            if self.events.len() >= EVENT_QUEUE_CAP {
                self.events.pop_front();
                self.dropped_events += 1;
            }
            self.events.push_back((subscription, converted));
        }
    }

    /// Convert a wire value (raw reading) into engineering units per the
    /// channel's module binding; unbound channels pass through.
    fn convert_incoming(
        &self,
        channel: u8,
        wire: &ChannelValue,
    ) -> Result<ChannelValue, SessionError> {
        let Some(&module) = self.bindings.get(&channel) else {
            return Ok(wire.clone());
        };
        let spec = self.catalog.spec(module)?;
        let raw: u16 = match wire {
            ChannelValue::Digital(level) => u16::from(*level),
            ChannelValue::Analog(raw) => *raw,
            ChannelValue::Scalar(raw) => u16::try_from(*raw)
                .map_err(|_| SessionError::BadReply("raw reading outside u16"))?,
            ChannelValue::Text(_) => {
                return Err(SessionError::BadReply("text in a sensor reading"))
            }
        };
        spec.convert_raw(raw)
            .map_err(|_| SessionError::BadReply("raw reading outside module domain"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ExtensionModule;
    use crate::device::host::{InlineDevice, InlineTransport};
    use crate::device::{ActuatorState, Device, DeviceConfig, SignalSource};
    use crate::value::ValueKind;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    fn fast_config() -> SessionConfig {
        SessionConfig {
            reply_timeout: Duration::from_millis(20),
            retries: 3,
        }
    }

    fn inline_session() -> (InlineDevice, Session) {
        let (handle, transport) = InlineDevice::new(Device::default());
        let session = Session::open(Box::new(transport), fast_config()).unwrap();
        (handle, session)
    }

    /// Counts frames written, for asserting what was (not) sent.
    struct CountingTransport<T> {
        inner: T,
        writes: Arc<AtomicUsize>,
    }

    impl<T: Transport> Transport for CountingTransport<T> {
        fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
            self.writes.fetch_add(1, Ordering::SeqCst);
            self.inner.write(bytes)
        }
        fn read(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<usize> {
            self.inner.read(buf, timeout)
        }
    }

    /// Records writes, answers nothing.
    struct MuteTransport {
        writes: Arc<Mutex<Vec<Vec<u8>>>>,
    }

    impl Transport for MuteTransport {
        fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
            self.writes.lock().unwrap().push(bytes.to_vec());
            Ok(())
        }
        fn read(&mut self, _buf: &mut [u8], _timeout: Duration) -> io::Result<usize> {
            Ok(0)
        }
    }

    /// Swallows the device's reply to the write with the given index,
    /// forcing the session to retry that request.
    struct LossyTransport {
        inner: InlineTransport,
        drop_reply_for_write: usize,
        writes_seen: usize,
    }

    impl Transport for LossyTransport {
        fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
            self.inner.write(bytes)?;
            if self.writes_seen == self.drop_reply_for_write {
                let mut sink = [0u8; 512];
                while self.inner.read(&mut sink, Duration::ZERO)? > 0 {}
            }
            self.writes_seen += 1;
            Ok(())
        }
        fn read(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<usize> {
            self.inner.read(buf, timeout)
        }
    }

    #[test]
    fn session_is_send() {
        fn assert_send<T: Send>() {}
        assert_send::<Session>();
    }

    #[test]
    fn open_reaches_ready_with_device_info() {
        let (_handle, session) = inline_session();
        assert_eq!(session.state(), &SessionState::Ready);
        assert_eq!(
            session.device_info().capabilities,
            ModuleType::full_capability_mask()
        );
    }

    #[test]
    fn handshake_timeout_sends_exactly_retries_hellos() {
        let writes = Arc::new(Mutex::new(Vec::new()));
        let transport = MuteTransport {
            writes: Arc::clone(&writes),
        };
        let err = Session::open(Box::new(transport), fast_config()).unwrap_err();
        assert!(matches!(err, SessionError::HandshakeTimeout(3)));
        let writes = writes.lock().unwrap();
        assert_eq!(writes.len(), 3);
        // Retries resend the identical HELLO frame.
        assert_eq!(writes[0], writes[1]);
        assert_eq!(writes[1], writes[2]);
        assert_eq!(writes[0][3], Opcode::Hello as u8);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let device = Device::new(DeviceConfig {
            protocol_version: 2,
            ..DeviceConfig::default()
        });
        let (_handle, transport) = InlineDevice::new(device);
        let err = Session::open(Box::new(transport), fast_config()).unwrap_err();
        assert!(matches!(err, SessionError::VersionMismatch(2)));
    }

    #[test]
    fn ping_round_trips() {
        let (_handle, mut session) = inline_session();
        session.ping().unwrap();
    }

    #[test]
    fn attach_then_read_converts() {
        let (handle, mut session) = inline_session();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        assert_eq!(channel, 0);
        handle
            .set_signal(channel, SignalSource::Constant { raw: 205 })
            .unwrap();
        assert_eq!(
            session.read(channel).unwrap(),
            ChannelValue::Scalar(100_195)
        );
    }

    #[test]
    fn pin_count_mismatch_fails_locally() {
        let (handle, transport) = {
            let (handle, inner) = InlineDevice::new(Device::default());
            (handle, inner)
        };
        let writes = Arc::new(AtomicUsize::new(0));
        let transport = CountingTransport {
            inner: transport,
            writes: Arc::clone(&writes),
        };
        let mut session = Session::open(Box::new(transport), fast_config()).unwrap();
        let after_handshake = writes.load(Ordering::SeqCst);

        let err = session.attach_module(ModuleType::Lm35, &[]).unwrap_err();
        assert!(matches!(
            err,
            SessionError::PinCount {
                expected: 1,
                got: 0,
                ..
            }
        ));
        assert_eq!(
            writes.load(Ordering::SeqCst),
            after_handshake,
            "nothing sent"
        );
        drop(handle);
    }

    #[test]
    fn detach_frees_the_pin_but_not_the_channel_id() {
        let (_handle, mut session) = inline_session();
        let first = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        session.detach(first).unwrap();
        let second = session.attach_module(ModuleType::Ldr, &[0xA0]).unwrap();
        assert_eq!(second, first + 1);
        assert!(matches!(
            session.read(first).unwrap_err(),
            SessionError::Device {
                code: ErrorCode::BadChannel,
                ..
            }
        ));
    }

    #[test]
    fn device_errors_surface_typed() {
        let (_handle, mut session) = inline_session();
        session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        let err = session.attach_module(ModuleType::Ldr, &[0xA0]).unwrap_err();
        assert!(matches!(
            err,
            SessionError::Device {
                code: ErrorCode::PinConflict,
                ..
            }
        ));
        // Reading a channel nothing is attached to is the device's call.
        let err = session.read(9).unwrap_err();
        assert!(matches!(
            err,
            SessionError::Device {
                code: ErrorCode::BadChannel,
                ..
            }
        ));
    }

    #[test]
    fn direction_checks_fail_locally() {
        let (_handle, mut session) = inline_session();
        let servo = session.attach_module(ModuleType::ServoSg90, &[9]).unwrap();
        let lm35 = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        assert!(matches!(
            session.read(servo).unwrap_err(),
            SessionError::WrongDirection {
                needed: Direction::Sensor,
                ..
            }
        ));
        assert!(matches!(
            session
                .write(lm35, ChannelValue::Digital(true))
                .unwrap_err(),
            SessionError::WrongDirection {
                needed: Direction::Actuator,
                ..
            }
        ));
        assert!(matches!(
            session.subscribe(servo, 100).unwrap_err(),
            SessionError::WrongDirection {
                needed: Direction::Sensor,
                ..
            }
        ));
    }

    #[test]
    fn write_validates_locally_then_applies() {
        let (handle, mut session) = inline_session();
        let servo = session.attach_module(ModuleType::ServoSg90, &[9]).unwrap();
        session.write(servo, ChannelValue::Scalar(90_000)).unwrap();
        assert_eq!(
            handle.actuator_snapshot().get(&servo),
            Some(&ActuatorState::Servo { milli_deg: 90_000 })
        );
        // 40 visible chars on a 16x2: rejected before anything is sent.
        let lcd = session
            .attach_module(ModuleType::Lcd16x2, &[2, 3, 4, 5, 6, 7])
            .unwrap();
        assert!(matches!(
            session
                .write(lcd, ChannelValue::Text("x".repeat(40)))
                .unwrap_err(),
            SessionError::Catalog(CatalogError::OutOfRange { .. })
        ));
    }

    #[test]
    fn subscription_stream_delivers_converted_events() {
        let (handle, mut session) = inline_session();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        handle
            .set_signal(channel, SignalSource::Constant { raw: 205 })
            .unwrap();
        let sub = session.subscribe(channel, 50).unwrap();
        handle.tick(1000);
        let events = session.poll_events(100).unwrap();
        assert_eq!(events.len(), 20);
        for (id, value) in &events {
            assert_eq!(*id, sub.id);
            assert_eq!(*value, ChannelValue::Scalar(100_195));
        }
    }

    #[test]
    fn poll_is_fifo_and_bounded_by_max() {
        let (handle, mut session) = inline_session();
        let channel = session
            .attach_module(ModuleType::Potentiometer, &[14])
            .unwrap();
        handle
            .set_signal(
                channel,
                SignalSource::Step {
                    values: vec![10, 20, 30],
                    dwell_ms: 50,
                },
            )
            .unwrap();
        session.subscribe(channel, 50).unwrap();
        handle.tick(150);
        // Samples at t=50,100,150 -> step values 20,30,10.
        let first = session.poll_events(2).unwrap();
        assert_eq!(
            first.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>(),
            vec![ChannelValue::Analog(20), ChannelValue::Analog(30)]
        );
        let rest = session.poll_events(2).unwrap();
        assert_eq!(rest, vec![(0, ChannelValue::Analog(10))]);
        assert!(session.poll_events(2).unwrap().is_empty());
    }

    #[test]
    fn unsubscribe_stops_the_stream() {
        let (handle, mut session) = inline_session();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        let sub = session.subscribe(channel, 50).unwrap();
        handle.tick(100);
        session.unsubscribe(sub).unwrap();
        // Events produced before the unsubscribe are still deliverable.
        assert_eq!(session.poll_events(10).unwrap().len(), 2);
        handle.tick(1000);
        assert!(session.poll_events(10).unwrap().is_empty());
    }

    #[test]
    fn subscribe_rejects_bad_periods_locally() {
        let (_handle, mut session) = inline_session();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        assert!(matches!(
            session.subscribe(channel, 9).unwrap_err(),
            SessionError::InvalidPeriod(9)
        ));
        assert!(matches!(
            session.subscribe(channel, 60_001).unwrap_err(),
            SessionError::InvalidPeriod(60_001)
        ));
    }

    #[test]
    fn seventeenth_subscription_hits_the_table_bound() {
        let (_handle, mut session) = inline_session();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        for _ in 0..16 {
            session.subscribe(channel, 100).unwrap();
        }
        assert!(matches!(
            session.subscribe(channel, 100).unwrap_err(),
            SessionError::Device {
                code: ErrorCode::TableFull,
                ..
            }
        ));
    }

    #[test]
    fn sink_receives_events_during_pump() {
        let (handle, mut session) = inline_session();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        handle
            .set_signal(channel, SignalSource::Constant { raw: 205 })
            .unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen_by_sink = Arc::clone(&seen);
        session
            .subscribe_with_sink(
                channel,
                50,
                Box::new(move |id, value| seen_by_sink.lock().unwrap().push((id, value))),
            )
            .unwrap();
        handle.tick(200);
        let delivered = session.pump(Duration::ZERO).unwrap();
        assert_eq!(delivered, 4);
        assert_eq!(seen.lock().unwrap().len(), 4);
        // Sunk events never enter the poll queue.
        assert!(session.poll_events(10).unwrap().is_empty());
    }

    #[test]
    fn interleaved_events_never_satisfy_a_request() {
        let (handle, mut session) = inline_session();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        handle
            .set_signal(channel, SignalSource::Constant { raw: 100 })
            .unwrap();
        session.subscribe(channel, 50).unwrap();
        // Queue events ahead of the next reply: the read must skip past
        // them to its VALUE and the events must land in the queue.
        handle.tick(200);
        let value = session.read(channel).unwrap();
        assert_eq!(value, convert_like_oracle(100));
        assert_eq!(session.poll_events(10).unwrap().len(), 4);
    }

    fn convert_like_oracle(raw: u16) -> ChannelValue {
        ChannelValue::Scalar((i64::from(raw) * 500_000 / 1023) as i32)
    }

    #[test]
    fn lost_reply_is_retried_yielding_one_value() {
        let (handle, inner) = InlineDevice::new(Device::default());
        // Write 0 is HELLO, write 1 is ATTACH; the READ's first attempt is
        // write 2 and its reply vanishes, so the session must resend.
        let transport = LossyTransport {
            inner,
            drop_reply_for_write: 2,
            writes_seen: 0,
        };
        let mut session = Session::open(Box::new(transport), fast_config()).unwrap();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        handle
            .set_signal(channel, SignalSource::Constant { raw: 205 })
            .unwrap();
        assert_eq!(
            session.read(channel).unwrap(),
            ChannelValue::Scalar(100_195)
        );
        // The retry's late twin (same seq) must not confuse later requests.
        assert_eq!(
            session.read(channel).unwrap(),
            ChannelValue::Scalar(100_195)
        );
    }

    #[test]
    fn event_queue_drops_oldest_on_overflow() {
        let (handle, mut session) = inline_session();
        let channel = session
            .attach_module(ModuleType::Potentiometer, &[14])
            .unwrap();
        handle
            .set_signal(
                channel,
                SignalSource::Step {
                    values: (0..1023).collect(),
                    dwell_ms: 10,
                },
            )
            .unwrap();
        session.subscribe(channel, 10).unwrap();
        // 1300 events against a 1024-slot queue.
        handle.tick(13_000);
        let events = session.poll_events(usize::MAX).unwrap();
        assert_eq!(events.len(), EVENT_QUEUE_CAP);
        assert_eq!(session.dropped_events(), 1300 - EVENT_QUEUE_CAP as u64);
        // Oldest dropped: the head of the queue is event 277 (1-based),
        // i.e. the step value at t = 277 * 10.
        assert_eq!(events[0].1, ChannelValue::Analog(277));
    }

    #[test]
    fn close_makes_every_call_fail() {
        let (_handle, mut session) = inline_session();
        let channel = session.attach_module(ModuleType::Lm35, &[0xA0]).unwrap();
        session.close();
        assert!(matches!(session.ping().unwrap_err(), SessionError::Closed));
        assert!(matches!(
            session.read(channel).unwrap_err(),
            SessionError::Closed
        ));
        assert!(matches!(
            session.poll_events(1).unwrap_err(),
            SessionError::Closed
        ));
    }

    #[test]
    fn extension_module_end_to_end() {
        let gyro = ExtensionModule {
            id: 0x40,
            name: "gyro-x".into(),
            direction: Direction::Sensor,
            kind: ValueKind::Scalar,
            pin_count: 1,
            unit: "mdeg/s".into(),
            scale: Some((250, 1)),
        };
        let device = Device::new(DeviceConfig {
            extensions: vec![gyro.clone()],
            ..DeviceConfig::default()
        });
        let (handle, transport) = InlineDevice::new(device);
        let mut catalog = Catalog::new();
        catalog.register_extension(gyro).unwrap();
        let mut session =
            Session::open_with_catalog(Box::new(transport), fast_config(), catalog).unwrap();

        let channel = session.attach(0x40, &[10]).unwrap();
        handle
            .set_signal(channel, SignalSource::Constant { raw: 100 })
            .unwrap();
        assert_eq!(session.read(channel).unwrap(), ChannelValue::Scalar(25_000));
    }
}
