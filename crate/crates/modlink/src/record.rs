//! Timestamped trace files: one JSON object per line, stable field order,
//! so recordings diff cleanly and survive protocol revisions.
//!
//! ```text
//! {"t_ms":50,"channel":0,"kind":"analog","value":512}
//! {"t_ms":100,"channel":0,"kind":"analog","value":517}
//! ```
//!
//! Lines carry the *wire* value (the device's raw reading) rather than the
//! converted engineering value: replaying a file into a simulator then
//! re-recording reproduces the original values exactly, regardless of
//! which module produced them. Timestamps must strictly increase within a
//! file.

use crate::catalog::ModuleType;
use crate::device::{Device, DeviceConfig, SignalSource};
use crate::value::{ChannelValue, ValueKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// One recorded sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordLine {
    pub t_ms: u64,
    pub channel: u8,
    pub value: ChannelValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("channel {channel} mixes value kinds ({first:?} then {second:?})")]
    MixedKinds {
        channel: u8,
        first: ValueKind,
        second: ValueKind,
    },
    #[error("channel {channel}: {reason}")]
    BadSample { channel: u8, reason: String },
    #[error("replay device ran out of channels or pins")]
    TooManyChannels,
}

#[derive(Serialize, Deserialize)]
struct RawLine {
    t_ms: u64,
    channel: u8,
    kind: ValueKind,
    value: serde_json::Value,
}

/// Canonical single-line form of a record.
pub fn write_record_line(record: &RecordLine) -> String {
    let value = match &record.value {
        ChannelValue::Digital(level) => serde_json::json!(u8::from(*level)),
        ChannelValue::Analog(raw) => serde_json::json!(raw),
        ChannelValue::Scalar(milli) => serde_json::json!(milli),
        ChannelValue::Text(text) => serde_json::json!(text),
    };
    serde_json::to_string(&RawLine {
        t_ms: record.t_ms,
        channel: record.channel,
        kind: record.value.kind(),
        value,
    })
    .expect("record lines always serialize")
}

/// Parse one line. The reason string carries no line number; callers that
/// read whole files add it.
pub fn parse_record_line(text: &str) -> Result<RecordLine, String> {
    let raw: RawLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let value = match raw.kind {
        ValueKind::Digital => match raw.value.as_u64() {
            Some(0) => ChannelValue::Digital(false),
            Some(1) => ChannelValue::Digital(true),
            _ => return Err(format!("digital value must be 0 or 1, got {}", raw.value)),
        },
        ValueKind::Analog => {
            let n = raw
                .value
                .as_u64()
                .and_then(|n| u16::try_from(n).ok())
                .ok_or_else(|| format!("bad analog value {}", raw.value))?;
            ChannelValue::Analog(n)
        }
        ValueKind::Scalar => {
            let n = raw
                .value
                .as_i64()
                .and_then(|n| i32::try_from(n).ok())
                .ok_or_else(|| format!("bad scalar value {}", raw.value))?;
            ChannelValue::Scalar(n)
        }
        ValueKind::Text => {
            let s = raw
                .value
                .as_str()
                .ok_or_else(|| format!("bad text value {}", raw.value))?;
            ChannelValue::Text(s.to_string())
        }
    };
    value.check().map_err(|e| e.to_string())?;
    Ok(RecordLine {
        t_ms: raw.t_ms,
        channel: raw.channel,
        value,
    })
}

/// Serialize records to file text (one line each, trailing newline).
pub fn write_record_file(records: &[RecordLine]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&write_record_line(record));
        out.push('\n');
    }
    out
}

/// Parse a whole file, enforcing strictly increasing timestamps. Blank
/// lines are ignored.
pub fn parse_record_file(text: &str) -> Result<Vec<RecordLine>, RecordError> {
    let mut records: Vec<RecordLine> = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record_line(line).map_err(|reason| RecordError::Parse {
            line: line_no,
            reason,
        })?;
        if let Some(last) = records.last() {
            if record.t_ms <= last.t_ms {
                return Err(RecordError::Parse {
                    line: line_no,
                    reason: format!("t_ms {} does not increase past {}", record.t_ms, last.t_ms),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Per-channel raw sample traces, keyed by channel, each tagged with the
/// value kind the channel carried.
pub type ChannelTraces = BTreeMap<u8, (ValueKind, Vec<(u64, u16)>)>;

/// Per-channel raw sample traces extracted from records, with the value
/// kind each channel carried.
pub fn trace_map(records: &[RecordLine]) -> Result<ChannelTraces, RecordError> {
    let mut map: ChannelTraces = BTreeMap::new();
    for record in records {
        let kind = record.value.kind();
        let raw: u16 = match &record.value {
            ChannelValue::Digital(level) => u16::from(*level),
            ChannelValue::Analog(raw) => *raw,
            ChannelValue::Scalar(milli) => {
                u16::try_from(*milli).map_err(|_| RecordError::BadSample {
                    channel: record.channel,
                    reason: format!("scalar {milli} is not a raw u16 reading"),
                })?
            }
            ChannelValue::Text(_) => {
                return Err(RecordError::BadSample {
                    channel: record.channel,
                    reason: "text values cannot be replayed".into(),
                })
            }
        };
        let entry = map
            .entry(record.channel)
            .or_insert_with(|| (kind, Vec::new()));
        if entry.0 != kind {
            return Err(RecordError::MixedKinds {
                channel: record.channel,
                first: entry.0,
                second: kind,
            });
        }
        entry.1.push((record.t_ms, raw));
    }
    Ok(map)
}

/// Module inferred for a replayed channel from the values it carried:
/// digital readings look like a push button, ADC counts like a
/// potentiometer, wide scalars like an ultrasonic ranger.
pub fn module_for_kind(kind: ValueKind) -> ModuleType {
    match kind {
        ValueKind::Digital => ModuleType::PushButton,
        ValueKind::Scalar => ModuleType::HcSr04,
        _ => ModuleType::Potentiometer,
    }
}

/// Build a fresh device whose channels replay `records` as trace sources.
/// Channel numbering matches the file: gaps up to the highest recorded
/// channel are padded with idle push buttons. `overrides` pins a module id
/// to a channel in place of kind inference.
pub fn build_replay_device(
    records: &[RecordLine],
    overrides: &BTreeMap<u8, u8>,
) -> Result<Device, RecordError> {
    let traces = trace_map(records)?;
    let mut device = Device::new(DeviceConfig::default());
    let Some(&max_channel) = traces.keys().max() else {
        return Ok(device);
    };

    let mut next_pin: u16 = 0;
    let mut take_pins = |count: u8| -> Result<Vec<u8>, RecordError> {
        let start = next_pin;
        next_pin += u16::from(count);
        if next_pin > 0x100 {
            return Err(RecordError::TooManyChannels);
        }
        Ok((start..next_pin).map(|p| p as u8).collect())
    };

    for channel in 0..=max_channel {
        let module = match (overrides.get(&channel), traces.get(&channel)) {
            (Some(&module), _) => module,
            (None, Some((kind, _))) => module_for_kind(*kind).id(),
            (None, None) => ModuleType::PushButton.id(),
        };
        let pin_count = match ModuleType::from_id(module) {
            Some(t) => crate::catalog::descriptor_of(t).pin_count,
            None => 1,
        };
        let pins = take_pins(pin_count)?;
        let assigned = device
            .attach_direct(module, &pins)
            .map_err(|_| RecordError::TooManyChannels)?;
        debug_assert_eq!(assigned, channel);

        if let Some((_, samples)) = traces.get(&channel) {
            device
                .set_signal(
                    channel,
                    SignalSource::Trace {
                        samples: samples.clone(),
                        looped: false,
                    },
                )
                .map_err(|_| RecordError::BadSample {
                    channel,
                    reason: "replay module is not a sensor".into(),
                })?;
        }
    }
    Ok(device)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_line_round_trips() {
        let record = RecordLine {
            t_ms: 0,
            channel: 1,
            value: ChannelValue::Analog(512),
        };
        let line = write_record_line(&record);
        assert_eq!(
            line,
            r#"{"t_ms":0,"channel":1,"kind":"analog","value":512}"#
        );
        assert_eq!(parse_record_line(&line).unwrap(), record);
    }

    #[test]
    fn every_kind_round_trips() {
        for value in [
            ChannelValue::Digital(true),
            ChannelValue::Analog(1023),
            ChannelValue::Scalar(-42_000),
            ChannelValue::Text("HI\nTHERE".into()),
        ] {
            let record = RecordLine {
                t_ms: 7,
                channel: 3,
                value,
            };
            let parsed = parse_record_line(&write_record_line(&record)).unwrap();
            assert_eq!(parsed, record);
        }
    }

    #[test]
    fn negative_time_is_a_parse_error() {
        let err =
            parse_record_line(r#"{"t_ms":-1,"channel":0,"kind":"analog","value":1}"#).unwrap_err();
        assert!(err.contains("u64"), "{err}");
    }

    #[test]
    fn file_rejects_non_increasing_timestamps() {
        let text = "{\"t_ms\":10,\"channel\":0,\"kind\":\"analog\",\"value\":1}\n{\"t_ms\":10,\"channel\":0,\"kind\":\"analog\",\"value\":2}\n";
        assert!(matches!(
            parse_record_file(text),
            Err(RecordError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = "{\"t_ms\":10,\"channel\":0,\"kind\":\"analog\",\"value\":1}\nnot json\n";
        assert!(matches!(
            parse_record_file(text),
            Err(RecordError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn replay_device_reproduces_values() {
        let records: Vec<RecordLine> = (0..5)
            .map(|i| RecordLine {
                t_ms: (i + 1) * 50,
                channel: 2,
                value: ChannelValue::Analog(100 + i as u16 * 10),
            })
            .collect();
        let mut device = build_replay_device(&records, &BTreeMap::new()).unwrap();
        device.check_tables().unwrap();
        // Channels 0 and 1 exist as padding; channel 2 replays the trace.
        assert_eq!(device.channel_module(0), Some(ModuleType::PushButton.id()));
        assert_eq!(
            device.channel_module(2),
            Some(ModuleType::Potentiometer.id())
        );

        use crate::protocol::{
            decode_command, encode_command, encode_frame, Command, DecodeOutcome, Decoder,
        };
        let read_at = |device: &mut Device, t: u64, seq: u8| -> ChannelValue {
            let advance = t - device.clock_ms();
            device.tick(advance as u32);
            let req =
                encode_frame(&encode_command(seq, &Command::Read { channel: 2 }).unwrap()).unwrap();
            let out = device.run_step(&req);
            let mut decoder = Decoder::new();
            let DecodeOutcome::Frame(frame) = decoder.feed(&out).remove(0) else {
                panic!("no reply");
            };
            match decode_command(&frame).unwrap() {
                Command::Value { value, .. } => value,
                other => panic!("{other:?}"),
            }
        };
        assert_eq!(read_at(&mut device, 50, 0), ChannelValue::Analog(100));
        assert_eq!(read_at(&mut device, 149, 1), ChannelValue::Analog(110));
        assert_eq!(read_at(&mut device, 250, 2), ChannelValue::Analog(140));
        assert_eq!(read_at(&mut device, 9999, 3), ChannelValue::Analog(140));
    }

    #[test]
    fn mixed_kinds_on_one_channel_are_rejected() {
        let records = vec![
            RecordLine {
                t_ms: 1,
                channel: 0,
                value: ChannelValue::Analog(1),
            },
            RecordLine {
                t_ms: 2,
                channel: 0,
                value: ChannelValue::Digital(true),
            },
        ];
        assert!(matches!(
            trace_map(&records),
            Err(RecordError::MixedKinds { channel: 0, .. })
        ));
    }

    #[test]
    fn a_thousand_random_records_survive_the_file_round_trip() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(0x05EC_04D5);
        let mut t = 0u64;
        let records: Vec<RecordLine> = (0..1000)
            .map(|_| {
                t += rng.random_range(1..=1000);
                let value = match rng.random_range(0..4) {
                    0 => ChannelValue::Digital(rng.random()),
                    1 => ChannelValue::Analog(rng.random_range(0..=1023)),
                    2 => ChannelValue::Scalar(rng.random()),
                    _ => {
                        let len = rng.random_range(0..=64);
                        ChannelValue::Text(
                            (0..len)
                                .map(|_| char::from(rng.random_range(0x20u8..=0x7E)))
                                .collect(),
                        )
                    }
                };
                RecordLine {
                    t_ms: t,
                    channel: rng.random(),
                    value,
                }
            })
            .collect();
        let text = write_record_file(&records);
        assert_eq!(parse_record_file(&text).unwrap(), records);
    }
}
