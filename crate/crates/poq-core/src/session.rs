//! Session plumbing: the message-passing interface both parties implement,
//! an in-process driver that pumps frames between them, replay against a
//! recorded transcript, and a memory-audit wrapper for bounded adversaries.

use crate::f2::F2Error;
use crate::transcript::Direction;
use crate::wire::{Frame, FrameType, WireError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("expected {expected}, got {got:?}")]
    UnexpectedFrame { expected: &'static str, got: FrameType },
    #[error("malformed {what}: {why}")]
    Malformed { what: &'static str, why: String },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    F2(#[from] F2Error),
    #[error("hello mismatch: ours {ours:#018x}, theirs {theirs:#018x}")]
    HelloMismatch { ours: u64, theirs: u64 },
    #[error("memory bound exceeded after frame {frame}: {bits} bits held, {capacity} allowed")]
    MemoryViolation {
        frame: u64,
        bits: usize,
        capacity: usize,
    },
    #[error("claw generation gave up after {attempts} attempts")]
    AttemptBudgetExhausted { attempts: u64 },
    #[error("session stalled: {0} frames exchanged, neither side finished")]
    Stalled(usize),
    #[error("replay diverged at outbound frame {index}")]
    ReplayDivergence { index: usize },
}

/// One side of a protocol session. Implementations are synchronous state
/// machines: each inbound frame yields zero or more outbound frames.
pub trait Party {
    /// Frames to send before anything is received. Only the session opener
    /// returns a non-empty batch.
    fn start(&mut self) -> Result<Vec<Frame>, ProtocolError> {
        Ok(Vec::new())
    }

    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError>;

    fn finished(&self) -> bool;
}

/// Persisted-state accounting for space-bounded parties. `persisted_bits`
/// reports the semantic size of everything the party carries between frames;
/// per-frame scratch is exempt.
pub trait Metered {
    fn persisted_bits(&self) -> usize;
}

/// Enforces a bit budget on a metered party after every frame it handles.
pub struct MemoryAudited<P> {
    inner: P,
    capacity: Option<usize>,
    peak_bits: usize,
    frames_seen: u64,
}

impl<P: Party + Metered> MemoryAudited<P> {
    pub fn new(inner: P, capacity: Option<usize>) -> Self {
        let peak_bits = inner.persisted_bits();
        MemoryAudited {
            inner,
            capacity,
            peak_bits,
            frames_seen: 0,
        }
    }

    pub fn peak_bits(&self) -> usize {
        self.peak_bits
    }

    pub fn into_inner(self) -> P {
        self.inner
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn check(&mut self) -> Result<(), ProtocolError> {
        let bits = self.inner.persisted_bits();
        self.peak_bits = self.peak_bits.max(bits);
        match self.capacity {
            Some(capacity) if bits > capacity => Err(ProtocolError::MemoryViolation {
                frame: self.frames_seen,
                bits,
                capacity,
            }),
            _ => Ok(()),
        }
    }
}

impl<P: Party + Metered> Party for MemoryAudited<P> {
    fn start(&mut self) -> Result<Vec<Frame>, ProtocolError> {
        let out = self.inner.start()?;
        self.check()?;
        Ok(out)
    }

    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        self.frames_seen += 1;
        let out = self.inner.on_frame(frame)?;
        self.check()?;
        Ok(out)
    }

    fn finished(&self) -> bool {
        self.inner.finished()
    }
}

/// Upper bound on frames per session; trips on livelocked state machines.
const FRAME_BUDGET: usize = 50_000_000;

/// Pumps frames between verifier and prover until both finish. Returns the
/// exchanged frames in transmission order, which doubles as the transcript
/// record list. Delivery is strictly FIFO, so the order matches what a
/// byte-stream transport produces with synchronous parties.
pub fn drive(
    verifier: &mut dyn Party,
    prover: &mut dyn Party,
) -> Result<Vec<(Direction, Frame)>, ProtocolError> {
    let mut log: Vec<(Direction, Frame)> = verifier
        .start()?
        .into_iter()
        .map(|f| (Direction::VerifierToProver, f))
        .collect();
    let opener = prover.start()?;
    log.extend(opener.into_iter().map(|f| (Direction::ProverToVerifier, f)));

    let mut cursor = 0;
    while cursor < log.len() {
        if log.len() > FRAME_BUDGET {
            return Err(ProtocolError::Stalled(log.len()));
        }
        let (dir, frame) = log[cursor].clone();
        let replies = match dir {
            Direction::VerifierToProver => prover.on_frame(&frame)?,
            Direction::ProverToVerifier => verifier.on_frame(&frame)?,
        };
        let reply_dir = dir.flip();
        log.extend(replies.into_iter().map(|f| (reply_dir, f)));
        cursor += 1;
    }

    if !(verifier.finished() && prover.finished()) {
        return Err(ProtocolError::Stalled(log.len()));
    }
    Ok(log)
}

/// Like [`drive`], but also samples the verifier's persisted state after
/// every step it takes, returning the peak. Used by run harnesses to audit
/// streaming-space claims without wrapping the verifier in [`MemoryAudited`].
pub fn drive_tracked<V: Party + Metered>(
    verifier: &mut V,
    prover: &mut dyn Party,
) -> Result<(Vec<(Direction, Frame)>, usize), ProtocolError> {
    let mut peak = verifier.persisted_bits();
    let mut log: Vec<(Direction, Frame)> = verifier
        .start()?
        .into_iter()
        .map(|f| (Direction::VerifierToProver, f))
        .collect();
    peak = peak.max(verifier.persisted_bits());
    let opener = prover.start()?;
    log.extend(opener.into_iter().map(|f| (Direction::ProverToVerifier, f)));

    let mut cursor = 0;
    while cursor < log.len() {
        if log.len() > FRAME_BUDGET {
            return Err(ProtocolError::Stalled(log.len()));
        }
        let (dir, frame) = log[cursor].clone();
        let replies = match dir {
            Direction::VerifierToProver => prover.on_frame(&frame)?,
            Direction::ProverToVerifier => {
                let out = verifier.on_frame(&frame)?;
                peak = peak.max(verifier.persisted_bits());
                out
            }
        };
        let reply_dir = dir.flip();
        log.extend(replies.into_iter().map(|f| (reply_dir, f)));
        cursor += 1;
    }

    if !(verifier.finished() && prover.finished()) {
        return Err(ProtocolError::Stalled(log.len()));
    }
    Ok((log, peak))
}

/// Re-runs one side against a recorded transcript: inbound frames are fed
/// from the log, outbound frames must match it exactly. Only meaningful for
/// deterministic parties (same seed and substream as the recording).
pub fn replay(
    party: &mut dyn Party,
    party_sends: Direction,
    records: &[(Direction, Frame)],
) -> Result<(), ProtocolError> {
    let mut expected_out: Vec<Frame> = party.start()?;
    let mut out_cursor = 0;
    for (dir, frame) in records {
        if *dir == party_sends {
            if out_cursor >= expected_out.len() || expected_out[out_cursor] != *frame {
                return Err(ProtocolError::ReplayDivergence { index: out_cursor });
            }
            out_cursor += 1;
        } else {
            expected_out.extend(party.on_frame(frame)?);
        }
    }
    if out_cursor != expected_out.len() || !party.finished() {
        return Err(ProtocolError::ReplayDivergence { index: out_cursor });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::FrameType;

    /// Sends `count` pings, expects an echo for each.
    struct Pinger {
        count: usize,
        got: usize,
    }

    impl Party for Pinger {
        fn start(&mut self) -> Result<Vec<Frame>, ProtocolError> {
            Ok((0..self.count)
                .map(|i| Frame::bit(FrameType::YBit, i % 2 == 0))
                .collect())
        }

        fn on_frame(&mut self, _frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
            self.got += 1;
            Ok(Vec::new())
        }

        fn finished(&self) -> bool {
            self.got == self.count
        }
    }

    /// Echoes every inbound bit back, persisting one byte per frame seen.
    struct Echoer {
        seen: Vec<u8>,
        expect: usize,
    }

    impl Party for Echoer {
        fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
            self.seen.push(frame.payload[0]);
            Ok(vec![frame.clone()])
        }

        fn finished(&self) -> bool {
            self.seen.len() == self.expect
        }
    }

    impl Metered for Echoer {
        fn persisted_bits(&self) -> usize {
            8 * self.seen.len()
        }
    }

    #[test]
    fn drive_logs_frames_in_transmission_order() {
        let mut v = Pinger { count: 3, got: 0 };
        let mut p = Echoer {
            seen: Vec::new(),
            expect: 3,
        };
        let log = drive(&mut v, &mut p).unwrap();
        assert_eq!(log.len(), 6);
        assert_eq!(log[0].0, Direction::VerifierToProver);
        // All three pings precede the first echo the driver processes, so
        // the log groups each batch the way a socket write would.
        let dirs: Vec<Direction> = log.iter().map(|(d, _)| *d).collect();
        assert_eq!(
            dirs,
            vec![
                Direction::VerifierToProver,
                Direction::VerifierToProver,
                Direction::VerifierToProver,
                Direction::ProverToVerifier,
                Direction::ProverToVerifier,
                Direction::ProverToVerifier,
            ]
        );
    }

    #[test]
    fn unfinished_session_is_reported() {
        let mut v = Pinger { count: 2, got: 0 };
        let mut p = Echoer {
            seen: Vec::new(),
            expect: 5,
        };
        assert!(matches!(
            drive(&mut v, &mut p),
            Err(ProtocolError::Stalled(_))
        ));
    }

    #[test]
    fn memory_audit_trips_at_capacity() {
        let mut v = Pinger { count: 4, got: 0 };
        let p = Echoer {
            seen: Vec::new(),
            expect: 4,
        };
        let mut audited = MemoryAudited::new(p, Some(16));
        let err = drive(&mut v, &mut audited).unwrap_err();
        match err {
            ProtocolError::MemoryViolation {
                frame,
                bits,
                capacity,
            } => {
                assert_eq!(frame, 3);
                assert_eq!(bits, 24);
                assert_eq!(capacity, 16);
            }
            other => panic!("expected memory violation, got {other:?}"),
        }
    }

    #[test]
    fn memory_audit_tracks_peak_without_capacity() {
        let mut v = Pinger { count: 4, got: 0 };
        let p = Echoer {
            seen: Vec::new(),
            expect: 4,
        };
        let mut audited = MemoryAudited::new(p, None);
        drive(&mut v, &mut audited).unwrap();
        assert_eq!(audited.peak_bits(), 32);
    }

    #[test]
    fn replay_accepts_own_log_and_rejects_tampering() {
        let mut v = Pinger { count: 3, got: 0 };
        let mut p = Echoer {
            seen: Vec::new(),
            expect: 3,
        };
        let log = drive(&mut v, &mut p).unwrap();

        let mut fresh = Echoer {
            seen: Vec::new(),
            expect: 3,
        };
        replay(&mut fresh, Direction::ProverToVerifier, &log).unwrap();

        let mut tampered = log.clone();
        tampered[3].1 = Frame::bit(FrameType::YBit, !tampered[3].1.as_bit().unwrap());
        let mut fresh = Echoer {
            seen: Vec::new(),
            expect: 3,
        };
        assert!(matches!(
            replay(&mut fresh, Direction::ProverToVerifier, &tampered),
            Err(ProtocolError::ReplayDivergence { .. })
        ));
    }
}
