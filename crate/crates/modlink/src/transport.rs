//! Duplex byte-stream transports: TCP, serial, and in-memory loopback.
//!
//! Endpoints are spelled the same everywhere (library and CLI):
//!
//! ```text
//! serial:/dev/ttyUSB0?baud=115200
//! tcp:127.0.0.1:7900
//! loopback:                         (test only: a dangling in-memory pair)
//! ```

use std::collections::VecDeque;
use std::fmt;
use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

/// Default serial bit rate when an endpoint does not name one.
pub const DEFAULT_BAUD: u32 = 115_200;

/// An ordered duplex byte stream. No message boundaries are assumed; the
/// frame decoder upstairs accepts arbitrary chunking.
pub trait Transport: Send {
    /// Write all of `bytes`.
    fn write(&mut self, bytes: &[u8]) -> io::Result<()>;

    /// Read up to `buf.len()` bytes, waiting at most `timeout`.
    ///
    /// `Ok(0)` means no data will arrive within the caller's timeout —
    /// implementations either block for the full duration or know that
    /// nothing can show up while the caller holds control. Link failure
    /// (including EOF) is an error.
    fn read(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<usize>;
}

/// Connection target, parseable from the shared endpoint syntax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Serial { path: String, baud: u32 },
    Tcp { host: String, port: u16 },
    Loopback,
}

impl FromStr for Endpoint {
    type Err = io::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidInput, msg);
        if let Some(rest) = s.strip_prefix("serial:") {
            let (path, baud) = match rest.split_once('?') {
                None => (rest, DEFAULT_BAUD),
                Some((path, query)) => {
                    let baud = query
                        .strip_prefix("baud=")
                        .and_then(|b| b.parse().ok())
                        .ok_or_else(|| bad(format!("bad serial query {query:?}")))?;
                    (path, baud)
                }
            };
            if path.is_empty() {
                return Err(bad("serial endpoint needs a device path".into()));
            }
            Ok(Endpoint::Serial {
                path: path.to_string(),
                baud,
            })
        } else if let Some(rest) = s.strip_prefix("tcp:") {
            let (host, port) = rest
                .rsplit_once(':')
                .ok_or_else(|| bad(format!("tcp endpoint {rest:?} needs host:port")))?;
            let port = port
                .parse()
                .map_err(|_| bad(format!("bad tcp port {port:?}")))?;
            Ok(Endpoint::Tcp {
                host: host.to_string(),
                port,
            })
        } else if s == "loopback:" {
            Ok(Endpoint::Loopback)
        } else {
            Err(bad(format!(
                "unknown endpoint {s:?} (expected serial:, tcp:, or loopback:)"
            )))
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Serial { path, baud } => write!(f, "serial:{path}?baud={baud}"),
            Endpoint::Tcp { host, port } => write!(f, "tcp:{host}:{port}"),
            Endpoint::Loopback => f.write_str("loopback:"),
        }
    }
}

/// Open a client transport for `endpoint`.
pub fn connect(endpoint: &Endpoint) -> io::Result<Box<dyn Transport>> {
    match endpoint {
        Endpoint::Serial { path, baud } => {
            Ok(Box::new(crate::serial::SerialTransport::open(path, *baud)?))
        }
        Endpoint::Tcp { host, port } => Ok(Box::new(TcpTransport::connect(host, *port)?)),
        Endpoint::Loopback => {
            // A pair with the far end leaked: never answers, never closes,
            // so requests run into clean timeouts.
            let (near, far) = loopback_pair();
            std::mem::forget(far);
            Ok(Box::new(near))
        }
    }
}

/// TCP client wrapper.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(host: &str, port: u16) -> io::Result<TcpTransport> {
        let addr = (host, port)
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no address for host"))?;
        let stream = TcpStream::connect(addr)?;
        Self::from_stream(stream)
    }

    pub fn from_stream(stream: TcpStream) -> io::Result<TcpTransport> {
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream })
    }
}

impl Transport for TcpTransport {
    fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
        use io::Write;
        self.stream.write_all(bytes)?;
        self.stream.flush()
    }

    fn read(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<usize> {
        use io::Read;
        // A zero timeout is not portable; one millisecond is close enough.
        let timeout = timeout.max(Duration::from_millis(1));
        self.stream.set_read_timeout(Some(timeout))?;
        match self.stream.read(buf) {
            Ok(0) => Err(io::Error::new(io::ErrorKind::UnexpectedEof, "peer closed")),
            Ok(n) => Ok(n),
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock
                    || e.kind() == io::ErrorKind::TimedOut
                    || e.kind() == io::ErrorKind::Interrupted =>
            {
                Ok(0)
            }
            Err(e) => Err(e),
        }
    }
}

struct Pipe {
    state: Mutex<PipeState>,
    readable: Condvar,
}

#[derive(Default)]
struct PipeState {
    data: VecDeque<u8>,
    closed: bool,
}

impl Pipe {
    fn new() -> Arc<Pipe> {
        Arc::new(Pipe {
            state: Mutex::new(PipeState::default()),
            readable: Condvar::new(),
        })
    }
}

/// One end of an in-memory duplex pair. Dropping an end closes both
/// directions: the peer's reads fail once drained and its writes fail
/// immediately.
pub struct LoopbackTransport {
    rx: Arc<Pipe>,
    tx: Arc<Pipe>,
}

/// Two connected in-memory transports.
pub fn loopback_pair() -> (LoopbackTransport, LoopbackTransport) {
    let a_to_b = Pipe::new();
    let b_to_a = Pipe::new();
    (
        LoopbackTransport {
            rx: Arc::clone(&b_to_a),
            tx: Arc::clone(&a_to_b),
        },
        LoopbackTransport {
            rx: a_to_b,
            tx: b_to_a,
        },
    )
}

impl Transport for LoopbackTransport {
    fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
        let mut state = self.tx.state.lock().unwrap();
        if state.closed {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "peer dropped"));
        }
        state.data.extend(bytes);
        self.tx.readable.notify_all();
        Ok(())
    }

    fn read(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<usize> {
        let deadline = Instant::now() + timeout;
        let mut state = self.rx.state.lock().unwrap();
        loop {
            if !state.data.is_empty() {
                let n = buf.len().min(state.data.len());
                for slot in buf.iter_mut().take(n) {
                    *slot = state.data.pop_front().unwrap();
                }
                return Ok(n);
            }
            if state.closed {
                return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "peer dropped"));
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Ok(0);
            }
            let (guard, _result) = self.rx.readable.wait_timeout(state, remaining).unwrap();
            state = guard;
        }
    }
}

impl Drop for LoopbackTransport {
    fn drop(&mut self) {
        for pipe in [&self.rx, &self.tx] {
            pipe.state.lock().unwrap().closed = true;
            pipe.readable.notify_all();
        }
    }
}
