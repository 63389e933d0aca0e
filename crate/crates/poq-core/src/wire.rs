//! Length-prefixed frames shared by every protocol session.
//!
//! Frame layout on the wire:
//!
//! ```text
//! +------+----------------+---------+
//! | type | payload length | payload |
//! | u8   | u32 big-endian | bytes   |
//! +------+----------------+---------+
//! ```
//!
//! Bit vectors inside payloads use the `f2` wire encoding (4-byte big-endian
//! bit count, then packed bytes). A session opens with a HELLO carrying the
//! protocol id and a hash of the run parameters; peers with different hashes
//! abort before exchanging any protocol frame.

use crate::f2::BitVec;
use crate::qsim::{BranchBit, Theta};
use thiserror::Error;

/// Hard cap on payload size; anything larger is a protocol violation.
pub const MAX_FRAME_PAYLOAD: usize = 1 << 20;

/// Largest number of stream bits carried by one STREAM_CHUNK frame.
pub const MAX_CHUNK_BITS: usize = 1 << 16;

/// Protocol identifiers carried in HELLO frames and reports.
pub mod protocol_id {
    pub const POQ1: u8 = 1;
    pub const CLAWGEN: u8 = 2;
    pub const POQ2: u8 = 3;
    pub const RAZ: u8 = 4;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("unknown frame type byte 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("frame payload of {0} bytes exceeds the cap")]
    FrameTooLarge(usize),
    #[error("bad {what} payload: {why}")]
    BadPayload { what: &'static str, why: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    ARow = 0x10,
    YBit = 0x11,
    RVec = 0x12,
    DVec = 0x13,
    Theta = 0x14,
    BBit = 0x15,
    StreamChunk = 0x20,
    IhRow = 0x21,
    IhResp = 0x22,
    StitchFuns = 0x23,
    StitchBits = 0x24,
    R0R1Vec = 0x25,
    Verdict = 0x30,
}

impl FrameType {
    pub fn from_byte(b: u8) -> Result<FrameType, WireError> {
        use FrameType::*;
        Ok(match b {
            0x01 => Hello,
            0x10 => ARow,
            0x11 => YBit,
            0x12 => RVec,
            0x13 => DVec,
            0x14 => Theta,
            0x15 => BBit,
            0x20 => StreamChunk,
            0x21 => IhRow,
            0x22 => IhResp,
            0x23 => StitchFuns,
            0x24 => StitchBits,
            0x25 => R0R1Vec,
            0x30 => Verdict,
            other => return Err(WireError::UnknownType(other)),
        })
    }

    pub fn to_byte(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub ty: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(ty: FrameType, payload: Vec<u8>) -> Self {
        assert!(payload.len() <= MAX_FRAME_PAYLOAD, "oversized frame built");
        Frame { ty, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.push(self.ty.to_byte());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `buf`, returning bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Frame, usize), WireError> {
        if buf.len() < 5 {
            return Err(WireError::Truncated {
                need: 5,
                have: buf.len(),
            });
        }
        let ty = FrameType::from_byte(buf[0])?;
        let len = u32::from_be_bytes([buf[1], buf[2], buf[3], buf[4]]) as usize;
        if len > MAX_FRAME_PAYLOAD {
            return Err(WireError::FrameTooLarge(len));
        }
        if buf.len() < 5 + len {
            return Err(WireError::Truncated {
                need: 5 + len,
                have: buf.len(),
            });
        }
        Ok((
            Frame {
                ty,
                payload: buf[5..5 + len].to_vec(),
            },
            5 + len,
        ))
    }

    // -- typed constructors --

    pub fn bit(ty: FrameType, b: bool) -> Frame {
        Frame::new(ty, vec![b as u8])
    }

    pub fn bitvec(ty: FrameType, v: &BitVec) -> Frame {
        Frame::new(ty, v.to_wire())
    }

    pub fn theta(theta: Theta) -> Frame {
        Frame::new(FrameType::Theta, vec![theta.to_byte()])
    }

    pub fn vec_pair(ty: FrameType, a: &BitVec, b: &BitVec) -> Frame {
        let mut payload = a.to_wire();
        payload.extend_from_slice(&b.to_wire());
        Frame::new(ty, payload)
    }

    pub fn hello(h: &Hello) -> Frame {
        Frame::new(FrameType::Hello, h.encode())
    }

    pub fn stitch_funs(dicts: &[BranchBit]) -> Frame {
        let mut payload = Vec::with_capacity(2 + 2 * dicts.len());
        payload.extend_from_slice(&(dicts.len() as u16).to_be_bytes());
        for d in dicts {
            assert!(d.index < 256, "dictator bit index does not fit a byte");
            payload.push(d.index as u8);
            payload.push(d.invert as u8);
        }
        Frame::new(FrameType::StitchFuns, payload)
    }

    // -- typed accessors --

    pub fn as_bit(&self) -> Result<bool, WireError> {
        match self.payload.as_slice() {
            [0] => Ok(false),
            [1] => Ok(true),
            _ => Err(WireError::BadPayload {
                what: "bit",
                why: format!("{} bytes", self.payload.len()),
            }),
        }
    }

    pub fn as_bitvec(&self) -> Result<BitVec, WireError> {
        BitVec::from_wire(&self.payload).map_err(|e| WireError::BadPayload {
            what: "bit vector",
            why: e.to_string(),
        })
    }

    pub fn as_theta(&self) -> Result<Theta, WireError> {
        match self.payload.as_slice() {
            [b] => Theta::from_byte(*b).ok_or(WireError::BadPayload {
                what: "theta",
                why: format!("byte {b}"),
            }),
            _ => Err(WireError::BadPayload {
                what: "theta",
                why: format!("{} bytes", self.payload.len()),
            }),
        }
    }

    pub fn as_vec_pair(&self) -> Result<(BitVec, BitVec), WireError> {
        let fail = |e: crate::f2::F2Error| WireError::BadPayload {
            what: "vector pair",
            why: e.to_string(),
        };
        let (a, rest) = BitVec::read_wire(&self.payload).map_err(fail)?;
        let (b, rest) = BitVec::read_wire(rest).map_err(fail)?;
        if !rest.is_empty() {
            return Err(WireError::BadPayload {
                what: "vector pair",
                why: format!("{} trailing bytes", rest.len()),
            });
        }
        Ok((a, b))
    }

    pub fn as_hello(&self) -> Result<Hello, WireError> {
        Hello::decode(&self.payload)
    }

    pub fn as_stitch_funs(&self) -> Result<Vec<BranchBit>, WireError> {
        if self.payload.len() < 2 {
            return Err(WireError::BadPayload {
                what: "stitch functions",
                why: "missing count".into(),
            });
        }
        let count = u16::from_be_bytes([self.payload[0], self.payload[1]]) as usize;
        if self.payload.len() != 2 + 2 * count {
            return Err(WireError::BadPayload {
                what: "stitch functions",
                why: format!("{} bytes for {count} entries", self.payload.len()),
            });
        }
        Ok(self.payload[2..]
            .chunks_exact(2)
            .map(|pair| BranchBit {
                index: pair[0] as usize,
                invert: pair[1] != 0,
            })
            .collect())
    }
}

/// Session opener: both sides must agree on protocol and parameter hash
/// before any protocol frame flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub protocol: u8,
    pub params_hash: u64,
    pub trials: u32,
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13);
        out.push(self.protocol);
        out.extend_from_slice(&self.params_hash.to_be_bytes());
        out.extend_from_slice(&self.trials.to_be_bytes());
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Hello, WireError> {
        if buf.len() != 13 {
            return Err(WireError::BadPayload {
                what: "hello",
                why: format!("{} bytes", buf.len()),
            });
        }
        Ok(Hello {
            protocol: buf[0],
            params_hash: u64::from_be_bytes(buf[1..9].try_into().unwrap()),
            trials: u32::from_be_bytes(buf[9..13].try_into().unwrap()),
        })
    }
}

/// FNV-1a over a canonical parameter encoding; collision resistance is not
/// needed, only mismatch detection.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_frame_bytes() {
        let f = Frame::bit(FrameType::YBit, true);
        assert_eq!(f.encode(), vec![0x11, 0, 0, 0, 1, 1]);
        let v = BitVec::from_u64(0b101, 3);
        let f = Frame::bitvec(FrameType::ARow, &v);
        assert_eq!(f.encode(), vec![0x10, 0, 0, 0, 5, 0, 0, 0, 3, 0b101]);
    }

    #[test]
    fn decode_rejects_unknown_type_and_truncation() {
        assert_eq!(Frame::decode(&[0x7f, 0, 0, 0, 0]), Err(WireError::UnknownType(0x7f)));
        assert!(matches!(
            Frame::decode(&[0x10, 0, 0]),
            Err(WireError::Truncated { .. })
        ));
        assert!(matches!(
            Frame::decode(&[0x10, 0, 0, 0, 9, 1, 2]),
            Err(WireError::Truncated { .. })
        ));
    }

    #[test]
    fn decode_rejects_oversized_declared_length() {
        let mut buf = vec![0x10];
        buf.extend_from_slice(&((MAX_FRAME_PAYLOAD as u32 + 1).to_be_bytes()));
        buf.extend_from_slice(&[0; 16]);
        assert_eq!(
            Frame::decode(&buf),
            Err(WireError::FrameTooLarge(MAX_FRAME_PAYLOAD + 1))
        );
    }

    #[test]
    fn bit_accessor_rejects_junk() {
        let f = Frame::new(FrameType::YBit, vec![2]);
        assert!(f.as_bit().is_err());
        let f = Frame::new(FrameType::YBit, vec![]);
        assert!(f.as_bit().is_err());
    }

    #[test]
    fn vec_pair_roundtrip_and_trailing_garbage() {
        let a = BitVec::from_u64(0b1100, 4);
        let b = BitVec::from_u64(0b0110_1, 5);
        let f = Frame::vec_pair(FrameType::R0R1Vec, &a, &b);
        assert_eq!(f.as_vec_pair().unwrap(), (a.clone(), b.clone()));
        let mut bad = f.clone();
        bad.payload.push(0);
        assert!(bad.as_vec_pair().is_err());
    }

    #[test]
    fn stitch_funs_roundtrip() {
        let dicts = vec![
            BranchBit {
                index: 3,
                invert: true,
            },
            BranchBit {
                index: 0,
                invert: false,
            },
        ];
        let f = Frame::stitch_funs(&dicts);
        assert_eq!(f.as_stitch_funs().unwrap(), dicts);
    }

    #[test]
    fn hello_roundtrip_and_hash_sensitivity() {
        let h = Hello {
            protocol: protocol_id::POQ2,
            params_hash: fnv1a64(b"lambda=8,k=64,seed=7"),
            trials: 100,
        };
        let f = Frame::hello(&h);
        assert_eq!(f.as_hello().unwrap(), h);
        assert_ne!(
            fnv1a64(b"lambda=8,k=64,seed=7"),
            fnv1a64(b"lambda=8,k=64,seed=8")
        );
    }

    #[test]
    fn fuzzed_frames_roundtrip() {
        // High-volume corpus; proptest covers structure, this covers bulk.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let types = [
            FrameType::Hello,
            FrameType::ARow,
            FrameType::YBit,
            FrameType::RVec,
            FrameType::DVec,
            FrameType::Theta,
            FrameType::BBit,
            FrameType::StreamChunk,
            FrameType::IhRow,
            FrameType::IhResp,
            FrameType::StitchFuns,
            FrameType::StitchBits,
            FrameType::R0R1Vec,
            FrameType::Verdict,
        ];
        for _ in 0..100_000 {
            let ty = types[rng.random_range(0..types.len())];
            let len = rng.random_range(0..64usize);
            let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            let f = Frame::new(ty, payload);
            let bytes = f.encode();
            let (back, used) = Frame::decode(&bytes).unwrap();
            assert_eq!(used, bytes.len());
            assert_eq!(back, f);
        }
    }
}
