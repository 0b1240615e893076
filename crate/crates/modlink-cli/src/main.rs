//! `modlink` — work with custom-controller devices from the shell.
//!
//! Exit codes are contractual: 0 success, 2 protocol/device error,
//! 3 timeout, 4 config/usage error. See `docs/cli.md`.

mod commands;

use clap::{Args, Parser, Subcommand};
use modlink::session::SessionError;
use std::io;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

#[derive(Parser)]
#[command(
    name = "modlink",
    version,
    about = "Talk to sensor/actuator controller boards"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Endpoint: serial:<path>?baud=115200 | tcp:<host>:<port> | loopback:
    #[arg(long)]
    endpoint: String,

    /// Reply timeout per attempt, in milliseconds.
    #[arg(long, default_value_t = 250)]
    timeout_ms: u64,

    /// Send attempts per request (first try included).
    #[arg(long, default_value_t = 3)]
    retries: u32,

    /// Machine-readable output: one JSON object per line on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone)]
struct StreamArgs {
    /// Channel to subscribe.
    #[arg(long)]
    channel: u8,

    /// Sampling period in milliseconds (10..=60000).
    #[arg(long, default_value_t = 100)]
    period_ms: u16,

    /// Stop after this many events.
    #[arg(long)]
    count: Option<u64>,

    /// Stop after this much wall time.
    #[arg(long)]
    duration_ms: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Round-trip a PING and report the latency.
    Ping {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of pings.
        #[arg(long, default_value_t = 1)]
        count: u32,
    },
    /// Handshake and print the device's identity and capabilities.
    Info {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Attach a module to pins; prints the assigned channel.
    Attach {
        #[command(flatten)]
        common: CommonArgs,
        /// Module name (see docs/catalog.md) or numeric id.
        #[arg(long)]
        module: String,
        /// Comma-separated pins: decimal, 0xHH, or A0..A7.
        #[arg(long, value_delimiter = ',')]
        pins: Vec<String>,
    },
    /// Read a sensor channel once.
    Read {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        channel: u8,
        /// Module bound to the channel, enabling unit conversion.
        #[arg(long)]
        module: Option<String>,
    },
    /// Write a value to an actuator channel.
    Write {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        channel: u8,
        /// Value literal: digital:0|1, analog:N, scalar:N, or text:STRING.
        #[arg(long)]
        value: String,
        /// Module bound to the channel, enabling local validation.
        #[arg(long)]
        module: Option<String>,
    },
    /// Subscribe to a channel and print events as they arrive.
    Monitor {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stream: StreamArgs,
        /// Module bound to the channel, enabling unit conversion.
        #[arg(long)]
        module: Option<String>,
    },
    /// Subscribe to a channel and write events to a trace file.
    Record {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stream: StreamArgs,
        /// Output trace file (one JSON object per line).
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Host a simulated device that replays a recorded trace file.
    Replay {
        #[command(flatten)]
        common: CommonArgs,
        /// Trace file produced by `record`.
        #[arg(long)]
        file: std::path::PathBuf,
        /// Override the module for a channel: CH:NAME (repeatable).
        #[arg(long)]
        module: Vec<String>,
        /// Clock granularity in milliseconds.
        #[arg(long, default_value_t = 10)]
        tick_ms: u32,
        /// Advance the clock only on inbound traffic (deterministic demos).
        #[arg(long)]
        virtual_time: bool,
    },
    /// Host a simulated device described by a config file.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Simulator config (TOML; see docs/cli.md).
        #[arg(long)]
        config: std::path::PathBuf,
        /// Clock granularity in milliseconds.
        #[arg(long, default_value_t = 10)]
        tick_ms: u32,
        /// Advance the clock only on inbound traffic (deterministic demos).
        #[arg(long)]
        virtual_time: bool,
    },
    /// Subscribe to the channels a rule file references and print one JSON
    /// action line per fired trigger.
    Map {
        #[command(flatten)]
        common: CommonArgs,
        /// Trigger rule file (see docs/triggers.md).
        #[arg(long)]
        rules: std::path::PathBuf,
        /// Sampling period for every subscribed channel.
        #[arg(long, default_value_t = 100)]
        period_ms: u16,
        /// Bind a module to a channel for unit conversion: CH:NAME
        /// (repeatable).
        #[arg(long)]
        module: Vec<String>,
        /// Stop after this many events have been evaluated.
        #[arg(long)]
        count: Option<u64>,
        /// Stop after this much wall time.
        #[arg(long)]
        duration_ms: Option<u64>,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad files, bad syntax: exit 4.
    Usage(String),
    /// Link could not be established or failed mid-flight: exit 2.
    Link(io::Error),
    /// Session-level failure: exit 3 for timeouts, else 2.
    Session(SessionError),
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        CliError::Session(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 4,
            CliError::Link(_) => 2,
            CliError::Session(SessionError::Timeout(_) | SessionError::HandshakeTimeout(_)) => 3,
            CliError::Session(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(msg) => msg.clone(),
            CliError::Link(e) => format!("link: {e}"),
            CliError::Session(e) => e.to_string(),
        }
    }
}

pub(crate) static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_sig: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_sigint_handler() {
    let handler = on_sigint as extern "C" fn(libc::c_int) as libc::sighandler_t;
    // SAFETY: the handler only touches an atomic.
    unsafe {
        libc::signal(libc::SIGINT, handler);
        libc::signal(libc::SIGTERM, handler);
    }
}

pub fn interrupted() -> bool {
    INTERRUPTED.load(Ordering::SeqCst)
}

fn main() -> ExitCode {
    install_sigint_handler();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes; everything else is usage.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("modlink: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
