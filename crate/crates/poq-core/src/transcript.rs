//! Ordered frame logs with a stable JSONL serialization.
//!
//! A transcript records every frame a session exchanged, in transmission
//! order, tagged with direction. The JSONL form is one header line followed
//! by one line per frame with the payload in base64; two runs of the same
//! trial over different transports must serialize to identical bytes.

use crate::wire::{Frame, FrameType, WireError};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {seq}: bad base64 payload")]
    BadBase64 { seq: u64 },
    #[error("record {seq}: {source}")]
    BadFrame { seq: u64, source: WireError },
    #[error("missing header line")]
    MissingHeader,
    #[error("record sequence broken at line {line}: expected {expected}, got {got}")]
    BadSequence { line: usize, expected: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "v2p")]
    VerifierToProver,
    #[serde(rename = "p2v")]
    ProverToVerifier,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::VerifierToProver => Direction::ProverToVerifier,
            Direction::ProverToVerifier => Direction::VerifierToProver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub protocol: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub trial: u64,
    /// Harness annotations computed from transcript content alone, so they
    /// agree across transports (e.g. "degenerate-rank").
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    seq: u64,
    dir: Direction,
    #[serde(rename = "type")]
    ty: u8,
    payload: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub records: Vec<(Direction, Frame)>,
}

impl Transcript {
    pub fn new(header: TranscriptHeader) -> Self {
        Transcript {
            header,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, dir: Direction, frame: Frame) {
        self.records.push((dir, frame));
    }

    /// Frames sent by one side, in order.
    pub fn sent_by(&self, dir: Direction) -> Vec<&Frame> {
        self.records
            .iter()
            .filter(|(d, _)| *d == dir)
            .map(|(_, f)| f)
            .collect()
    }

    /// First frame of the given type, if any.
    pub fn find(&self, ty: FrameType) -> Option<&Frame> {
        self.records.iter().find(|(_, f)| f.ty == ty).map(|(_, f)| f)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for (seq, (dir, frame)) in self.records.iter().enumerate() {
            let line = RecordLine {
                seq: seq as u64,
                dir: *dir,
                ty: frame.ty.to_byte(),
                payload: B64.encode(&frame.payload),
            };
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Transcript, TranscriptError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header_line = lines.next().ok_or(TranscriptError::MissingHeader)?;
        let header: TranscriptHeader = serde_json::from_str(header_line)?;
        let mut records = Vec::new();
        for (idx, line) in lines.enumerate() {
            let rec: RecordLine = serde_json::from_str(line)?;
            if rec.seq != idx as u64 {
                return Err(TranscriptError::BadSequence {
                    line: idx + 2,
                    expected: idx as u64,
                    got: rec.seq,
                });
            }
            let payload = B64
                .decode(&rec.payload)
                .map_err(|_| TranscriptError::BadBase64 { seq: rec.seq })?;
            let ty = FrameType::from_byte(rec.ty)
                .map_err(|source| TranscriptError::BadFrame { seq: rec.seq, source })?;
            records.push((rec.dir, Frame::new(ty, payload)));
        }
        Ok(Transcript { header, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::f2::BitVec;

    fn sample() -> Transcript {
        let mut t = Transcript::new(TranscriptHeader {
            protocol: "poq1".into(),
            params: serde_json::json!({"n": 4}),
            seed: 7,
            trial: 3,
            flags: vec!["degenerate-rank".into()],
        });
        t.push(
            Direction::VerifierToProver,
            Frame::bitvec(FrameType::ARow, &BitVec::from_u64(0b01101, 5)),
        );
        t.push(Direction::ProverToVerifier, Frame::bit(FrameType::YBit, true));
        t.push(Direction::VerifierToProver, Frame::bit(FrameType::Verdict, false));
        t
    }

    #[test]
    fn jsonl_roundtrip_is_exact() {
        let t = sample();
        let text = t.to_jsonl();
        let back = Transcript::from_jsonl(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn serialization_is_deterministic() {
        assert_eq!(sample().to_jsonl(), sample().to_jsonl());
    }

    #[test]
    fn sequence_gaps_are_rejected() {
        let t = sample();
        let text = t.to_jsonl();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(2);
        let text = lines.join("\n");
        assert!(matches!(
            Transcript::from_jsonl(&text),
            Err(TranscriptError::BadSequence { .. })
        ));
    }

    #[test]
    fn bad_base64_is_rejected() {
        let t = sample();
        let text = t.to_jsonl().replace(
            &B64.encode(BitVec::from_u64(0b01101, 5).to_wire()),
            "!!notb64!!",
        );
        assert!(matches!(
            Transcript::from_jsonl(&text),
            Err(TranscriptError::BadBase64 { .. })
        ));
    }

    #[test]
    fn unknown_frame_type_is_rejected() {
        let t = sample();
        let text = t.to_jsonl().replace("\"type\":48", "\"type\":127");
        assert!(matches!(
            Transcript::from_jsonl(&text),
            Err(TranscriptError::BadFrame { .. })
        ));
    }

    #[test]
    fn sent_by_filters_direction() {
        let t = sample();
        assert_eq!(t.sent_by(Direction::VerifierToProver).len(), 2);
        assert_eq!(t.sent_by(Direction::ProverToVerifier).len(), 1);
    }
}
