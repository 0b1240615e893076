//! Drivers that put a virtual device on a live transport.
//!
//! A [`Device`] is single-threaded by contract; these hosts own one and
//! serialize access to it. [`DeviceHost`] pumps a device behind any
//! [`Transport`] on a background thread — tests drive its virtual clock
//! explicitly. [`serve_listener`] is the wall-clock TCP front used by the
//! `simulate` CLI command.

use super::{ActuatorState, Device, DeviceError, SignalSource};
use crate::transport::Transport;
use std::collections::BTreeMap;
use std::io;
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

/// A device pumped behind a transport on a background thread, with the
/// virtual clock stepped through the handle. Replies and events written by
/// either side are frame-atomic: the transport lock is held per batch.
pub struct DeviceHost {
    device: Arc<Mutex<Device>>,
    transport: Arc<Mutex<Box<dyn Transport>>>,
    stop: Arc<AtomicBool>,
    pump: Option<JoinHandle<()>>,
}

impl DeviceHost {
    pub fn spawn(device: Device, transport: Box<dyn Transport>) -> DeviceHost {
        let device = Arc::new(Mutex::new(device));
        let transport = Arc::new(Mutex::new(transport));
        let stop = Arc::new(AtomicBool::new(false));

        let pump = {
            let device = Arc::clone(&device);
            let transport = Arc::clone(&transport);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                let mut buf = [0u8; 512];
                while !stop.load(Ordering::Relaxed) {
                    // Drain without holding the transport lock across a
                    // blocking wait, so tick() never stalls behind the
                    // pump's idle time.
                    let read = transport.lock().unwrap().read(&mut buf, Duration::ZERO);
                    match read {
                        Ok(0) => std::thread::sleep(Duration::from_millis(1)),
                        Ok(n) => {
                            let out = device.lock().unwrap().run_step(&buf[..n]);
                            if !out.is_empty() && transport.lock().unwrap().write(&out).is_err() {
                                break;
                            }
                        }
                        Err(_) => break,
                    }
                }
            })
        };

        DeviceHost {
            device,
            transport,
            stop,
            pump: Some(pump),
        }
    }

    /// Advance the device clock; due EVENT frames are written to the
    /// transport before this returns.
    pub fn tick(&self, advance_ms: u32) {
        let out = self.device.lock().unwrap().tick(advance_ms);
        if !out.is_empty() {
            let _ = self.transport.lock().unwrap().write(&out);
        }
    }

    pub fn set_signal(&self, channel: u8, source: SignalSource) -> Result<(), DeviceError> {
        self.device.lock().unwrap().set_signal(channel, source)
    }

    pub fn actuator_snapshot(&self) -> BTreeMap<u8, ActuatorState> {
        self.device.lock().unwrap().actuator_snapshot()
    }

    /// Run `f` with the device locked, for instrumentation the other
    /// helpers do not cover.
    pub fn with_device<R>(&self, f: impl FnOnce(&mut Device) -> R) -> R {
        f(&mut self.device.lock().unwrap())
    }

    pub fn shutdown(mut self) {
        self.stop_pump();
    }

    fn stop_pump(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.pump.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for DeviceHost {
    fn drop(&mut self) {
        self.stop_pump();
    }
}

/// A device hosted inside the transport itself: writes run the device
/// loop synchronously, reads drain its output queue. No threads, no wall
/// clock — every exchange is exactly reproducible. The handle half steps
/// the virtual clock and inspects state.
pub struct InlineDevice {
    device: Arc<Mutex<Device>>,
    outbound: Arc<Mutex<std::collections::VecDeque<u8>>>,
}

/// The transport half of [`InlineDevice::new`].
pub struct InlineTransport {
    device: Arc<Mutex<Device>>,
    outbound: Arc<Mutex<std::collections::VecDeque<u8>>>,
}

impl InlineDevice {
    pub fn new(device: Device) -> (InlineDevice, InlineTransport) {
        let device = Arc::new(Mutex::new(device));
        let outbound = Arc::new(Mutex::new(std::collections::VecDeque::new()));
        (
            InlineDevice {
                device: Arc::clone(&device),
                outbound: Arc::clone(&outbound),
            },
            InlineTransport { device, outbound },
        )
    }

    /// Advance the device clock; due EVENT frames land in the transport's
    /// read queue before this returns.
    pub fn tick(&self, advance_ms: u32) {
        let out = self.device.lock().unwrap().tick(advance_ms);
        self.outbound.lock().unwrap().extend(out);
    }

    pub fn set_signal(&self, channel: u8, source: SignalSource) -> Result<(), DeviceError> {
        self.device.lock().unwrap().set_signal(channel, source)
    }

    pub fn actuator_snapshot(&self) -> BTreeMap<u8, ActuatorState> {
        self.device.lock().unwrap().actuator_snapshot()
    }

    pub fn with_device<R>(&self, f: impl FnOnce(&mut Device) -> R) -> R {
        f(&mut self.device.lock().unwrap())
    }
}

impl Transport for InlineTransport {
    fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
        let out = self.device.lock().unwrap().run_step(bytes);
        self.outbound.lock().unwrap().extend(out);
        Ok(())
    }

    fn read(&mut self, buf: &mut [u8], _timeout: Duration) -> io::Result<usize> {
        // Nothing can arrive while the caller holds control, so an empty
        // queue is a full timeout.
        let mut queue = self.outbound.lock().unwrap();
        let n = buf.len().min(queue.len());
        for slot in buf.iter_mut().take(n) {
            *slot = queue.pop_front().unwrap();
        }
        Ok(n)
    }
}

/// Options for [`serve_listener`].
#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Tick granularity in milliseconds.
    pub tick_ms: u32,
    /// When set, the clock advances by `tick_ms` per processed inbound
    /// chunk instead of following wall time — deterministic demos.
    pub virtual_time: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            tick_ms: 10,
            virtual_time: false,
        }
    }
}

/// Serve `device` to TCP clients, one connection at a time; device state
/// persists across connections. In wall-clock mode the virtual clock
/// tracks elapsed time in `tick_ms` steps while a client is connected (it
/// freezes between connections). Returns when `stop` is set.
pub fn serve_listener(
    listener: TcpListener,
    device: &mut Device,
    opts: &ServeOptions,
    stop: &AtomicBool,
) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    while !stop.load(Ordering::Relaxed) {
        let (stream, _addr) = match listener.accept() {
            Ok(pair) => pair,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(e),
        };
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        let mut transport = crate::transport::TcpTransport::from_stream(stream)?;
        serve_transport(&mut transport, device, opts, stop);
    }
    Ok(())
}

/// Pump one transport against `device` until the link drops or `stop` is
/// set: inbound bytes run the device loop, and in wall-clock mode elapsed
/// time is fed to the virtual clock in `tick_ms` steps.
pub fn serve_transport(
    transport: &mut dyn Transport,
    device: &mut Device,
    opts: &ServeOptions,
    stop: &AtomicBool,
) {
    let tick = u64::from(opts.tick_ms.max(1));
    let mut buf = [0u8; 512];
    let mut last_tick = Instant::now();
    loop {
        if stop.load(Ordering::Relaxed) {
            return;
        }
        match transport.read(&mut buf, Duration::from_millis(tick.min(10))) {
            Ok(0) => {}
            Ok(n) => {
                let mut out = device.run_step(&buf[..n]);
                if opts.virtual_time {
                    out.extend(device.tick(opts.tick_ms));
                }
                if !out.is_empty() && transport.write(&out).is_err() {
                    return;
                }
            }
            Err(_) => return,
        }
        if !opts.virtual_time {
            let elapsed = last_tick.elapsed().as_millis() as u64;
            if elapsed >= tick {
                let whole = elapsed - elapsed % tick;
                last_tick += Duration::from_millis(whole);
                let out = device.tick(whole as u32);
                if !out.is_empty() && transport.write(&out).is_err() {
                    return;
                }
            }
        }
    }
}
