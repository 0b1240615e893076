//! Property tests for the wire codec: round-trip identity, chunking
//! invariance, decoder resilience, CRC conformance.

use modlink::protocol::{
    build_handshake_request, crc8, decode_command, encode_command, encode_frame, Command,
    DecodeOutcome, Decoder, DeviceInfo, Frame, Opcode,
};
use modlink::value::ChannelValue;
use proptest::prelude::*;

/// Independent bit-by-bit CRC (shift-and-XOR), the reference the
/// table-driven implementation must agree with.
fn crc8_reference(data: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &byte in data {
        crc ^= byte;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 {
                (crc << 1) ^ 0x07
            } else {
                crc << 1
            };
        }
    }
    crc
}

fn printable_text(max_len: usize) -> impl Strategy<Value = String> {
    let byte = prop_oneof![9 => 0x20u8..=0x7E, 1 => Just(b'\n')];
    prop::collection::vec(byte, 0..=max_len).prop_map(|bytes| String::from_utf8(bytes).unwrap())
}

/// Values small enough to ride inside any command frame (a WRITE leaves 61
/// bytes of room for text).
fn channel_value() -> impl Strategy<Value = ChannelValue> {
    prop_oneof![
        any::<bool>().prop_map(ChannelValue::Digital),
        (0u16..=1023).prop_map(ChannelValue::Analog),
        any::<i32>().prop_map(ChannelValue::Scalar),
        printable_text(61).prop_map(ChannelValue::Text),
    ]
}

fn command() -> impl Strategy<Value = Command> {
    prop_oneof![
        Just(Command::Ping),
        any::<u8>().prop_map(|protocol_version| Command::Hello { protocol_version }),
        (any::<u8>(), prop::collection::vec(any::<u8>(), 0..=8))
            .prop_map(|(module_type, pins)| Command::Attach { module_type, pins }),
        any::<u8>().prop_map(|channel| Command::Detach { channel }),
        any::<u8>().prop_map(|channel| Command::Read { channel }),
        (any::<u8>(), channel_value())
            .prop_map(|(channel, value)| Command::Write { channel, value }),
        (any::<u8>(), any::<u16>())
            .prop_map(|(channel, period_ms)| Command::Subscribe { channel, period_ms }),
        any::<u8>().prop_map(|subscription| Command::Unsubscribe { subscription }),
        Just(Command::AckPing),
        (any::<u8>(), any::<u16>(), any::<u32>()).prop_map(|(v, fw, caps)| {
            Command::AckHello(DeviceInfo {
                protocol_version: v,
                firmware_version: fw,
                capabilities: caps,
            })
        }),
        any::<u8>().prop_map(|channel| Command::AckAttach { channel }),
        Just(Command::AckDetach),
        (any::<u8>(), channel_value())
            .prop_map(|(channel, value)| Command::Value { channel, value }),
        Just(Command::AckWrite),
        any::<u8>().prop_map(|subscription| Command::AckSubscribe { subscription }),
        Just(Command::AckUnsubscribe),
        (any::<u8>(), channel_value()).prop_map(|(subscription, value)| Command::Event {
            subscription,
            value
        }),
        (any::<u8>(), any::<u8>()).prop_map(|(code, offending_opcode)| Command::Error {
            code,
            offending_opcode
        }),
    ]
}

proptest! {
    /// encode -> frame -> bytes -> decoder -> decode is the identity, and
    /// the sequence number survives (EVENT frames carry the subscription
    /// id in the seq field instead).
    #[test]
    fn command_round_trip(seq in any::<u8>(), cmd in command()) {
        let frame = encode_command(seq, &cmd).unwrap();
        match &cmd {
            Command::Event { subscription, .. } => prop_assert_eq!(frame.seq, *subscription),
            _ => prop_assert_eq!(frame.seq, seq),
        }
        let bytes = encode_frame(&frame).unwrap();
        let mut decoder = Decoder::new();
        let outcomes = decoder.feed(&bytes);
        prop_assert_eq!(outcomes.len(), 1);
        let DecodeOutcome::Frame(decoded) = &outcomes[0] else {
            return Err(TestCaseError::fail("expected a frame outcome"));
        };
        prop_assert_eq!(decoded, &frame);
        prop_assert_eq!(decode_command(decoded).unwrap(), cmd);
    }

    /// Splitting the byte stream across feed calls in any way yields the
    /// same outcome sequence.
    #[test]
    fn chunking_invariance(
        cmds in prop::collection::vec((any::<u8>(), command()), 1..8),
        garbage in prop::collection::vec(any::<u8>(), 0..32),
        splits in prop::collection::vec(1usize..16, 0..32),
    ) {
        let mut stream = garbage;
        for (seq, cmd) in &cmds {
            stream.extend(encode_frame(&encode_command(*seq, cmd).unwrap()).unwrap());
        }

        let mut whole = Decoder::new();
        let expected = whole.feed(&stream);

        let mut chunked = Decoder::new();
        let mut actual = Vec::new();
        let mut cursor = 0usize;
        let mut split_iter = splits.into_iter().cycle();
        while cursor < stream.len() {
            let step = split_iter.next().unwrap_or(1).min(stream.len() - cursor);
            actual.extend(chunked.feed(&stream[cursor..cursor + step]));
            cursor += step;
        }
        prop_assert_eq!(actual, expected);
    }

    /// Arbitrary bytes never break the decoder, the buffer bound holds,
    /// and after a 68-byte flush a valid frame always decodes.
    #[test]
    fn decoder_survives_garbage(noise in prop::collection::vec(any::<u8>(), 0..4096)) {
        let mut decoder = Decoder::new();
        for chunk in noise.chunks(17) {
            decoder.feed(chunk);
            prop_assert!(decoder.buffered_len() <= 68);
        }
        // Flush any half-open frame the noise may have started, then a
        // genuine frame must come through.
        decoder.feed(&[0u8; 68]);
        let frame = build_handshake_request();
        let outcomes = decoder.feed(&encode_frame(&frame).unwrap());
        prop_assert_eq!(
            outcomes.last(),
            Some(&DecodeOutcome::Frame(frame))
        );
    }

    /// Table-driven CRC equals the bitwise reference.
    #[test]
    fn crc_matches_reference(data in prop::collection::vec(any::<u8>(), 0..512)) {
        prop_assert_eq!(crc8(&data), crc8_reference(&data));
    }

    /// A single corrupted byte anywhere in a frame is caught: either the
    /// CRC rejects it, the framing collapses, or (when the start byte or
    /// length byte is hit) the decoder waits for more input — it never
    /// yields a *different* valid frame from the same bytes.
    #[test]
    fn corruption_never_yields_a_wrong_frame(
        seq in any::<u8>(),
        cmd in command(),
        flip_at in any::<prop::sample::Index>(),
        flip_bits in 1u8..=255,
    ) {
        let frame = encode_command(seq, &cmd).unwrap();
        let mut bytes = encode_frame(&frame).unwrap();
        let at = flip_at.index(bytes.len());
        bytes[at] ^= flip_bits;
        let mut decoder = Decoder::new();
        for outcome in decoder.feed(&bytes) {
            if let DecodeOutcome::Frame(decoded) = outcome {
                prop_assert_ne!(decoded, frame.clone());
            }
        }
    }
}

#[test]
fn crc_check_vector() {
    assert_eq!(crc8_reference(b"123456789"), 0xF4);
    assert_eq!(crc8(b"123456789"), 0xF4);
}

#[test]
fn resync_is_reported_once_per_gap() {
    let frame = encode_frame(&Frame {
        seq: 0,
        opcode: Opcode::Ping as u8,
        payload: vec![],
    })
    .unwrap();
    let mut stream = vec![0x00, 0x11, 0x22];
    stream.extend(&frame);
    stream.extend([0x33]);
    stream.extend(&frame);
    let mut decoder = Decoder::new();
    let outcomes = decoder.feed(&stream);
    let resyncs: Vec<usize> = outcomes
        .iter()
        .filter_map(|o| match o {
            DecodeOutcome::Resync(n) => Some(*n),
            _ => None,
        })
        .collect();
    assert_eq!(resyncs, vec![3, 1]);
    assert_eq!(
        outcomes
            .iter()
            .filter(|o| matches!(o, DecodeOutcome::Frame(_)))
            .count(),
        2
    );
}
