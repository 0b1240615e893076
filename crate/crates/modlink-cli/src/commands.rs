use crate::{interrupted, CliError, Cmd, CommonArgs, StreamArgs, INTERRUPTED};
use modlink::catalog::{Catalog, ModuleType};
use modlink::device::host::{serve_listener, serve_transport, ServeOptions};
use modlink::device::SimConfig;
use modlink::record::{build_replay_device, parse_record_file, write_record_line, RecordLine};
use modlink::session::{Session, SessionConfig, Subscription};
use modlink::transport::Endpoint;
use modlink::trigger::{parse_rules, TriggerEngine};
use modlink::value::ChannelValue;
use serde_json::json;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::time::{Duration, Instant};

pub fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Ping { common, count } => ping(&common, count),
        Cmd::Info { common } => info(&common),
        Cmd::Attach {
            common,
            module,
            pins,
        } => attach(&common, &module, &pins),
        Cmd::Read {
            common,
            channel,
            module,
        } => read(&common, channel, module.as_deref()),
        Cmd::Write {
            common,
            channel,
            value,
            module,
        } => write(&common, channel, &value, module.as_deref()),
        Cmd::Monitor {
            common,
            stream,
            module,
        } => monitor(&common, &stream, module.as_deref()),
        Cmd::Record {
            common,
            stream,
            out,
        } => record(&common, &stream, &out),
        Cmd::Replay {
            common,
            file,
            module,
            tick_ms,
            virtual_time,
        } => replay(&common, &file, &module, tick_ms, virtual_time),
        Cmd::Simulate {
            common,
            config,
            tick_ms,
            virtual_time,
        } => simulate(&common, &config, tick_ms, virtual_time),
        Cmd::Map {
            common,
            rules,
            period_ms,
            module,
            count,
            duration_ms,
        } => map(&common, &rules, period_ms, &module, count, duration_ms),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_endpoint(text: &str) -> Result<Endpoint, CliError> {
    text.parse().map_err(|e| usage(format!("{e}")))
}

fn open(common: &CommonArgs) -> Result<Session, CliError> {
    let endpoint = parse_endpoint(&common.endpoint)?;
    let transport = modlink::transport::connect(&endpoint).map_err(CliError::Link)?;
    let config = SessionConfig {
        reply_timeout: Duration::from_millis(common.timeout_ms),
        retries: common.retries,
    };
    Ok(Session::open(transport, config)?)
}

/// Module spelled as a catalog name or a numeric id.
fn resolve_module(text: &str) -> Result<u8, CliError> {
    if let Some(t) = ModuleType::from_name(text) {
        return Ok(t.id());
    }
    let parsed = if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u8::from_str_radix(hex, 16).ok()
    } else {
        text.parse().ok()
    };
    parsed.ok_or_else(|| usage(format!("unknown module {text:?} (see docs/catalog.md)")))
}

fn parse_pins(pins: &[String]) -> Result<Vec<u8>, CliError> {
    pins.iter()
        .map(|p| {
            modlink::device::parse_pin_name(p)
                .ok_or_else(|| usage(format!("bad pin {p:?} (decimal, 0xHH, or A0..A7)")))
        })
        .collect()
}

/// Value literals: `digital:0|1`, `analog:N`, `scalar:N`, `text:STRING`.
fn parse_value_literal(text: &str) -> Result<ChannelValue, CliError> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("bad value {text:?} (expected kind:value)")))?;
    let bad = || usage(format!("bad value {text:?}"));
    match kind {
        "digital" => match rest {
            "0" => Ok(ChannelValue::Digital(false)),
            "1" => Ok(ChannelValue::Digital(true)),
            _ => Err(bad()),
        },
        "analog" => rest.parse().map(ChannelValue::Analog).map_err(|_| bad()),
        "scalar" => rest.parse().map(ChannelValue::Scalar).map_err(|_| bad()),
        "text" => Ok(ChannelValue::Text(rest.to_string())),
        _ => Err(bad()),
    }
}

/// `CH:NAME` bindings used by map and replay.
fn parse_channel_module(text: &str) -> Result<(u8, u8), CliError> {
    let (channel, module) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("bad binding {text:?} (expected CH:MODULE)")))?;
    let channel = channel
        .parse()
        .map_err(|_| usage(format!("bad channel in {text:?}")))?;
    Ok((channel, resolve_module(module)?))
}

fn value_json(value: &ChannelValue) -> serde_json::Value {
    match value {
        ChannelValue::Digital(level) => json!(u8::from(*level)),
        ChannelValue::Analog(raw) => json!(raw),
        ChannelValue::Scalar(milli) => json!(milli),
        ChannelValue::Text(text) => json!(text),
    }
}

fn unit_of(module: u8) -> String {
    Catalog::new()
        .spec(module)
        .map(|spec| spec.unit().to_string())
        .unwrap_or_default()
}

fn ping(common: &CommonArgs, count: u32) -> Result<(), CliError> {
    let mut session = open(common)?;
    for seq in 0..count.max(1) {
        let rtt = session.ping()?;
        let rtt_ms = rtt.as_secs_f64() * 1000.0;
        if common.json {
            println!("{}", json!({"event": "pong", "seq": seq, "rtt_ms": rtt_ms}));
        } else {
            println!(
                "pong from {}: seq={seq} rtt={rtt_ms:.3} ms",
                common.endpoint
            );
        }
    }
    session.close();
    Ok(())
}

fn info(common: &CommonArgs) -> Result<(), CliError> {
    let mut session = open(common)?;
    let info = session.device_info();
    let names: Vec<String> = info
        .capability_ids()
        .into_iter()
        .map(|id| match ModuleType::from_id(id) {
            Some(t) => t.name().to_string(),
            None => format!("0x{id:02x}"),
        })
        .collect();
    if common.json {
        println!(
            "{}",
            json!({
                "protocol_version": info.protocol_version,
                "firmware_version": info.firmware_version,
                "capabilities": names,
            })
        );
    } else {
        println!("protocol version {}", info.protocol_version);
        println!(
            "firmware {}.{}",
            info.firmware_version >> 8,
            info.firmware_version & 0xFF
        );
        println!("modules: {}", names.join(", "));
    }
    session.close();
    Ok(())
}

fn attach(common: &CommonArgs, module: &str, pins: &[String]) -> Result<(), CliError> {
    let module = resolve_module(module)?;
    let pins = parse_pins(pins)?;
    let mut session = open(common)?;
    let channel = session.attach(module, &pins)?;
    if common.json {
        println!("{}", json!({"channel": channel}));
    } else {
        println!("channel {channel}");
    }
    session.close();
    Ok(())
}

fn read(common: &CommonArgs, channel: u8, module: Option<&str>) -> Result<(), CliError> {
    let mut session = open(common)?;
    let module_id = module.map(resolve_module).transpose()?;
    if let Some(id) = module_id {
        session.register_channel(channel, id)?;
    }
    let value = session.read(channel)?;
    let unit = module_id.map(unit_of).unwrap_or_default();
    if common.json {
        println!(
            "{}",
            json!({
                "channel": channel,
                "kind": value.kind().name(),
                "value": value_json(&value),
                "unit": unit,
            })
        );
    } else if unit.is_empty() {
        println!("channel {channel} = {value}");
    } else {
        println!("channel {channel} = {value} {unit}");
    }
    session.close();
    Ok(())
}

fn write(
    common: &CommonArgs,
    channel: u8,
    literal: &str,
    module: Option<&str>,
) -> Result<(), CliError> {
    let value = parse_value_literal(literal)?;
    let mut session = open(common)?;
    if let Some(name) = module {
        let id = resolve_module(name)?;
        session.register_channel(channel, id)?;
    }
    session.write(channel, value)?;
    if common.json {
        println!("{}", json!({"event": "ack", "channel": channel}));
    } else {
        println!("ok");
    }
    session.close();
    Ok(())
}

/// Shared subscribe-and-drain loop. Calls `on_event` with the synthesized
/// emission time `(i+1) * period` for the i-th event received.
fn stream_events(
    session: &mut Session,
    sub: Subscription,
    stream: &StreamArgs,
    mut on_event: impl FnMut(u64, &ChannelValue) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let deadline = stream
        .duration_ms
        .map(|ms| started + Duration::from_millis(ms));
    let mut received: u64 = 0;
    'outer: loop {
        if interrupted() {
            break;
        }
        if let Some(deadline) = deadline {
            if Instant::now() >= deadline {
                break;
            }
        }
        session.pump(Duration::from_millis(20))?;
        for (id, value) in session.poll_events(256)? {
            if id != sub.id {
                continue;
            }
            received += 1;
            on_event(received * u64::from(sub.period_ms), &value)?;
            if stream.count.is_some_and(|limit| received >= limit) {
                break 'outer;
            }
        }
    }
    let _ = session.unsubscribe(sub);
    Ok(())
}

fn monitor(common: &CommonArgs, stream: &StreamArgs, module: Option<&str>) -> Result<(), CliError> {
    let mut session = open(common)?;
    if let Some(name) = module {
        let id = resolve_module(name)?;
        session.register_channel(stream.channel, id)?;
    }
    let sub = session.subscribe(stream.channel, stream.period_ms)?;
    let json = common.json;
    let channel = stream.channel;
    stream_events(&mut session, sub, stream, |t_ms, value| {
        if json {
            println!(
                "{}",
                json!({
                    "t_ms": t_ms,
                    "subscription": sub.id,
                    "channel": channel,
                    "kind": value.kind().name(),
                    "value": value_json(value),
                })
            );
        } else {
            println!("t_ms={t_ms} subscription={} value={value}", sub.id);
        }
        Ok(())
    })?;
    session.close();
    Ok(())
}

fn record(common: &CommonArgs, stream: &StreamArgs, out: &std::path::Path) -> Result<(), CliError> {
    // No module binding on purpose: the file captures raw wire values, so
    // replay reproduces them exactly whatever module produced them.
    let mut session = open(common)?;
    let file = std::fs::File::create(out)
        .map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    let sub = session.subscribe(stream.channel, stream.period_ms)?;
    let channel = stream.channel;
    let mut written: u64 = 0;
    stream_events(&mut session, sub, stream, |t_ms, value| {
        let line = write_record_line(&RecordLine {
            t_ms,
            channel,
            value: value.clone(),
        });
        writeln!(writer, "{line}").map_err(|e| usage(format!("write failed: {e}")))?;
        written += 1;
        Ok(())
    })?;
    writer
        .flush()
        .map_err(|e| usage(format!("write failed: {e}")))?;
    eprintln!("recorded {written} events to {}", out.display());
    session.close();
    Ok(())
}

fn serve(
    common: &CommonArgs,
    mut device: modlink::device::Device,
    tick_ms: u32,
    virtual_time: bool,
) -> Result<(), CliError> {
    let opts = ServeOptions {
        tick_ms,
        virtual_time,
    };
    match parse_endpoint(&common.endpoint)? {
        Endpoint::Tcp { host, port } => {
            let listener =
                std::net::TcpListener::bind((host.as_str(), port)).map_err(CliError::Link)?;
            let addr = listener.local_addr().map_err(CliError::Link)?;
            announce_listening(common.json, &format!("tcp:{addr}"));
            serve_listener(listener, &mut device, &opts, &INTERRUPTED).map_err(CliError::Link)?;
        }
        Endpoint::Serial { path, baud } => {
            let mut transport =
                modlink::serial::SerialTransport::open(&path, baud).map_err(CliError::Link)?;
            announce_listening(common.json, &common.endpoint);
            serve_transport(&mut transport, &mut device, &opts, &INTERRUPTED);
        }
        Endpoint::Loopback => {
            return Err(usage("simulate/replay cannot serve on loopback:"));
        }
    }
    Ok(())
}

fn announce_listening(json: bool, endpoint: &str) {
    if json {
        println!("{}", json!({"event": "listening", "endpoint": endpoint}));
    } else {
        println!("listening on {endpoint}");
    }
    let _ = std::io::stdout().flush();
}

fn simulate(
    common: &CommonArgs,
    config: &std::path::Path,
    tick_ms: u32,
    virtual_time: bool,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| usage(format!("cannot read {}: {e}", config.display())))?;
    let sim = SimConfig::from_toml(&text).map_err(|e| usage(e.to_string()))?;
    let device = sim.build().map_err(|e| usage(e.to_string()))?;
    serve(common, device, tick_ms, virtual_time)
}

fn replay(
    common: &CommonArgs,
    file: &std::path::Path,
    modules: &[String],
    tick_ms: u32,
    virtual_time: bool,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| usage(format!("cannot read {}: {e}", file.display())))?;
    let records = parse_record_file(&text).map_err(|e| usage(e.to_string()))?;
    let mut overrides = BTreeMap::new();
    for binding in modules {
        let (channel, module) = parse_channel_module(binding)?;
        overrides.insert(channel, module);
    }
    let device = build_replay_device(&records, &overrides).map_err(|e| usage(e.to_string()))?;
    serve(common, device, tick_ms, virtual_time)
}

fn map(
    common: &CommonArgs,
    rules_path: &std::path::Path,
    period_ms: u16,
    modules: &[String],
    count: Option<u64>,
    duration_ms: Option<u64>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(rules_path)
        .map_err(|e| usage(format!("cannot read {}: {e}", rules_path.display())))?;
    let rules = parse_rules(&text).map_err(|e| usage(e.to_string()))?;
    if rules.is_empty() {
        return Err(usage("rule file defines no rules"));
    }
    let mut engine = TriggerEngine::new(rules).map_err(|e| usage(e.to_string()))?;

    let mut session = open(common)?;
    for binding in modules {
        let (channel, module) = parse_channel_module(binding)?;
        session.register_channel(channel, module)?;
    }

    // One subscription per channel the rules watch, all on one period, so
    // synthesized emission times stay aligned across channels.
    let mut by_sub: BTreeMap<u8, (u8, u64)> = BTreeMap::new();
    let mut subs = Vec::new();
    for channel in engine.channels() {
        let sub = session.subscribe(channel, period_ms)?;
        by_sub.insert(sub.id, (channel, 0));
        subs.push(sub);
    }

    let started = Instant::now();
    let deadline = duration_ms.map(|ms| started + Duration::from_millis(ms));
    let mut evaluated: u64 = 0;
    'outer: loop {
        if interrupted() {
            break;
        }
        if let Some(deadline) = deadline {
            if Instant::now() >= deadline {
                break;
            }
        }
        session.pump(Duration::from_millis(20))?;
        for (id, value) in session.poll_events(256)? {
            let Some((channel, seen)) = by_sub.get_mut(&id) else {
                continue;
            };
            *seen += 1;
            let t_ms = *seen * u64::from(period_ms);
            let channel = *channel;
            let actions = engine
                .evaluate_sample(t_ms, channel, &value)
                .map_err(|e| usage(e.to_string()))?;
            for action in actions {
                println!("{}", action.to_json_line());
            }
            evaluated += 1;
            if count.is_some_and(|limit| evaluated >= limit) {
                break 'outer;
            }
        }
    }
    let _ = std::io::stdout().flush();
    for sub in subs {
        let _ = session.unsubscribe(sub);
    }
    session.close();
    Ok(())
}
