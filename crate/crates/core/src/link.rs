//! Framed serial protocol between the flight computer and the vision
//! computer.
//!
//! ```text
//! 0xFE 0xA5 | id | len | payload (len bytes, f32 LE) | xor(id, len, payload)
//! ```

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use thiserror::Error;

pub const SYNC: [u8; 2] = [0xFE, 0xA5];
/// Sync, id, length and checksum.
pub const OVERHEAD: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Message {
    /// 0x01, flight → vision: attitude quaternion (w, x, y, z) and inertial velocity.
    AttitudeVelocity { t: f32, q: [f32; 4], v: [f32; 3] },
    /// 0x02, vision → flight: inertial velocity command.
    VelocityCommand { t: f32, v: [f32; 3] },
    /// 0x03, flight → vision: GNSS position sample.
    PositionReport { t: f32, p: [f32; 3] },
    /// 0x04, flight → vision: believed state code and event times (-1 if none).
    FaultStatus {
        t: f32,
        state: i8,
        detection_time: f32,
        identification_time: f32,
    },
}

impl Message {
    pub fn id(&self) -> u8 {
        match self {
            Message::AttitudeVelocity { .. } => 0x01,
            Message::VelocityCommand { .. } => 0x02,
            Message::PositionReport { .. } => 0x03,
            Message::FaultStatus { .. } => 0x04,
        }
    }

    pub fn time(&self) -> f32 {
        match *self {
            Message::AttitudeVelocity { t, .. }
            | Message::VelocityCommand { t, .. }
            | Message::PositionReport { t, .. }
            | Message::FaultStatus { t, .. } => t,
        }
    }

    fn payload(&self) -> Vec<f32> {
        match *self {
            Message::AttitudeVelocity { t, q, v } => [&[t][..], &q, &v].concat(),
            Message::VelocityCommand { t, v } => [&[t][..], &v].concat(),
            Message::PositionReport { t, p } => [&[t][..], &p].concat(),
            Message::FaultStatus {
                t,
                state,
                detection_time,
                identification_time,
            } => alloc::vec![t, f32::from(state), detection_time, identification_time],
        }
    }

    /// Payload size in floats for a message id.
    pub fn payload_floats(id: u8) -> Option<usize> {
        match id {
            0x01 => Some(8),
            0x02..=0x04 => Some(4),
            _ => None,
        }
    }

    fn from_payload(id: u8, f: &[f32]) -> Result<Self, FrameError> {
        if Self::payload_floats(id) != Some(f.len()) {
            return Err(FrameError::BadLength {
                id,
                len: f.len() * 4,
            });
        }
        Ok(match id {
            0x01 => Message::AttitudeVelocity {
                t: f[0],
                q: [f[1], f[2], f[3], f[4]],
                v: [f[5], f[6], f[7]],
            },
            0x02 => Message::VelocityCommand {
                t: f[0],
                v: [f[1], f[2], f[3]],
            },
            0x03 => Message::PositionReport {
                t: f[0],
                p: [f[1], f[2], f[3]],
            },
            _ => {
                let state = f[1];
                if !(libm::truncf(state) == state && (-1.0..=6.0).contains(&state)) {
                    return Err(FrameError::BadPayload);
                }
                Message::FaultStatus {
                    t: f[0],
                    state: state as i8,
                    detection_time: f[2],
                    identification_time: f[3],
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("missing sync bytes")]
    BadSync,
    #[error("frame truncated")]
    Truncated,
    #[error("checksum mismatch")]
    BadChecksum,
    #[error("unknown message id {0:#04x}")]
    UnknownId(u8),
    #[error("payload length {len} invalid for message id {id:#04x}")]
    BadLength { id: u8, len: usize },
    #[error("payload field out of range")]
    BadPayload,
}

fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let payload = msg.payload();
    let mut out = Vec::with_capacity(OVERHEAD + payload.len() * 4);
    out.extend_from_slice(&SYNC);
    out.push(msg.id());
    out.push((payload.len() * 4) as u8);
    for x in payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.push(checksum(&out[2..]));
    out
}

/// Decode exactly one frame occupying the whole slice.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, FrameError> {
    let (msg, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(FrameError::BadLength {
            id: bytes[2],
            len: bytes.len() - OVERHEAD,
        });
    }
    Ok(msg)
}

/// Decode a frame at the start of `bytes`, returning it and its length.
fn decode_prefix(bytes: &[u8]) -> Result<(Message, usize), FrameError> {
    if bytes.len() < 2 {
        return Err(FrameError::Truncated);
    }
    if bytes[..2] != SYNC {
        return Err(FrameError::BadSync);
    }
    if bytes.len() < 4 {
        return Err(FrameError::Truncated);
    }
    let id = bytes[2];
    let len = bytes[3] as usize;
    let floats = Message::payload_floats(id).ok_or(FrameError::UnknownId(id))?;
    if len != floats * 4 {
        return Err(FrameError::BadLength { id, len });
    }
    let total = OVERHEAD + len;
    if bytes.len() < total {
        return Err(FrameError::Truncated);
    }
    if checksum(&bytes[2..total - 1]) != bytes[total - 1] {
        return Err(FrameError::BadChecksum);
    }
    let payload: Vec<f32> = bytes[4..4 + len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((Message::from_payload(id, &payload)?, total))
}

/// Streaming decoder: accepts arbitrary byte chunks, yields complete frames,
/// skips garbage and counts rejected frames.
#[derive(Debug, Default, Clone)]
pub struct FrameDecoder {
    buf: VecDeque<u8>,
    dropped: usize,
    decoded: usize,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend(bytes);
    }

    /// Frames rejected so far (bad checksum, id, length or payload).
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn decoded(&self) -> usize {
        self.decoded
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, or `None` when more bytes are needed.
    pub fn next_message(&mut self) -> Option<Message> {
        loop {
            // discard up to the next sync candidate
            let start = (0..self.buf.len()).find(|&i| {
                self.buf[i] == SYNC[0] && self.buf.get(i + 1).is_none_or(|b| *b == SYNC[1])
            });
            match start {
                Some(i) => drop(self.buf.drain(..i)),
                None => {
                    self.buf.clear();
                    return None;
                }
            }
            let head: Vec<u8> = self.buf.iter().take(4 + 255 + 1).copied().collect();
            match decode_prefix(&head) {
                Ok((msg, used)) => {
                    self.buf.drain(..used);
                    self.decoded += 1;
                    return Some(msg);
                }
                Err(FrameError::Truncated) => return None,
                Err(_) => {
                    self.dropped += 1;
                    self.buf.pop_front();
                }
            }
        }
    }

    pub fn drain_messages(&mut self) -> Vec<Message> {
        core::iter::from_fn(|| self.next_message()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn catalog() -> Vec<Message> {
        vec![
            Message::AttitudeVelocity {
                t: 6.3,
                q: [0.99, 0.01, -0.02, 0.1],
                v: [1.5, -0.25, 0.5],
            },
            Message::VelocityCommand {
                t: 12.0,
                v: [0.1, 0.2, 0.5],
            },
            Message::PositionReport {
                t: 0.1,
                p: [-3.0, 4.5, -6.0],
            },
            Message::FaultStatus {
                t: 6.55,
                state: 3,
                detection_time: 6.4,
                identification_time: 6.5,
            },
            Message::FaultStatus {
                t: 1.0,
                state: -1,
                detection_time: 0.9,
                identification_time: -1.0,
            },
        ]
    }

    #[test]
    fn catalog_round_trips() {
        for m in catalog() {
            let bytes = encode_frame(&m);
            assert_eq!(
                bytes.len(),
                OVERHEAD + Message::payload_floats(m.id()).unwrap() * 4
            );
            assert_eq!(decode_frame(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn frame_layout() {
        let bytes = encode_frame(&Message::VelocityCommand {
            t: 1.0,
            v: [0.0, 0.0, 0.0],
        });
        assert_eq!(&bytes[..4], &[0xFE, 0xA5, 0x02, 16]);
        assert_eq!(&bytes[4..8], &1.0f32.to_le_bytes());
        assert_eq!(bytes[20], 0x02 ^ 16 ^ 0x80 ^ 0x3F);
    }

    #[test]
    fn flipped_payload_bit_dropped() {
        for m in catalog() {
            let mut bytes = encode_frame(&m);
            bytes[6] ^= 0x10;
            assert_eq!(decode_frame(&bytes), Err(FrameError::BadChecksum));
            let mut dec = FrameDecoder::new();
            dec.push(&bytes);
            assert_eq!(dec.next_message(), None);
            assert_eq!(dec.dropped(), 1);
        }
    }

    #[test]
    fn resync_after_garbage() {
        let msgs = &catalog()[..3];
        let mut stream = Vec::new();
        for m in msgs {
            stream.extend(encode_frame(m));
            stream.push(0x5A);
        }
        let mut dec = FrameDecoder::new();
        dec.push(&stream);
        assert_eq!(dec.drain_messages(), msgs);
        assert_eq!(dec.dropped(), 0);
    }

    #[test]
    fn sync_like_garbage_is_skipped() {
        let msgs = catalog();
        let mut stream = vec![0xFE, 0xA5, 0x01];
        for m in &msgs {
            stream.extend(encode_frame(m));
            stream.extend([0xFE, 0xFE]);
        }
        let mut dec = FrameDecoder::new();
        dec.push(&stream);
        assert_eq!(dec.drain_messages(), msgs);
    }

    #[test]
    fn bytewise_feeding() {
        let msgs = catalog();
        let stream: Vec<u8> = msgs.iter().flat_map(encode_frame).collect();
        let mut dec = FrameDecoder::new();
        let mut out = Vec::new();
        for b in stream {
            dec.push(&[b]);
            out.extend(dec.drain_messages());
        }
        assert_eq!(out, msgs);
        assert_eq!(dec.pending(), 0);
    }

    #[test]
    fn malformed_frames_rejected() {
        assert_eq!(decode_frame(&[0xFE]), Err(FrameError::Truncated));
        assert_eq!(decode_frame(&[0x00, 0xA5, 1, 32]), Err(FrameError::BadSync));
        assert_eq!(
            decode_frame(&[0xFE, 0xA5, 9, 4, 0, 0, 0, 0, 13]),
            Err(FrameError::UnknownId(9))
        );
        assert!(matches!(
            decode_frame(&[0xFE, 0xA5, 2, 4, 0, 0, 0, 0, 6]),
            Err(FrameError::BadLength { .. })
        ));
        let mut bad_state = encode_frame(&Message::FaultStatus {
            t: 0.0,
            state: 0,
            detection_time: -1.0,
            identification_time: -1.0,
        });
        bad_state[8..12].copy_from_slice(&7.0f32.to_le_bytes());
        let n = bad_state.len();
        bad_state[n - 1] = checksum(&bad_state[2..n - 1]);
        assert_eq!(decode_frame(&bad_state), Err(FrameError::BadPayload));
    }

    fn finite() -> impl Strategy<Value = f32> {
        -1.0e6f32..1.0e6
    }

    fn any_message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (
                finite(),
                prop::array::uniform4(finite()),
                prop::array::uniform3(finite())
            )
                .prop_map(|(t, q, v)| Message::AttitudeVelocity { t, q, v }),
            (finite(), prop::array::uniform3(finite()))
                .prop_map(|(t, v)| Message::VelocityCommand { t, v }),
            (finite(), prop::array::uniform3(finite()))
                .prop_map(|(t, p)| Message::PositionReport { t, p }),
            (finite(), -1i8..=6, finite(), finite()).prop_map(
                |(t, state, detection_time, identification_time)| {
                    Message::FaultStatus {
                        t,
                        state,
                        detection_time,
                        identification_time,
                    }
                }
            ),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(m in any_message()) {
            prop_assert_eq!(decode_frame(&encode_frame(&m)).unwrap(), m);
        }

        #[test]
        fn stream_survives_single_corruption(
            msgs in prop::collection::vec(any_message(), 1..20),
            which in any::<prop::sample::Index>(),
            bit in 0u8..8,
        ) {
            let frames: Vec<Vec<u8>> = msgs.iter().map(encode_frame).collect();
            let victim = which.index(frames.len());
            let mut stream = Vec::new();
            for (i, f) in frames.iter().enumerate() {
                let mut f = f.clone();
                if i == victim {
                    let pos = 4 + (f.len() - OVERHEAD) / 2;
                    f[pos] ^= 1 << bit;
                }
                stream.extend(f);
            }
            let mut dec = FrameDecoder::new();
            dec.push(&stream);
            let out = dec.drain_messages();
            let mut expected = msgs.clone();
            expected.remove(victim);
            prop_assert_eq!(out, expected);
            prop_assert!(dec.dropped() >= 1);
        }
    }
}
