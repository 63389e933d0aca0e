//! The claw-template protocol: claw generation feeds a commitment against
//! a pair (r0, r1), then the same rotated-measurement test as poq1.
//!
//! After the claw phase both sides hold the pair (x0, x1) labeled by the
//! round-0 dictator g. The verifier draws r0, r1 and the challenge parity
//! alpha = r0^T x0 XOR r1^T x1; the prover folds r_{g(x)}^T x into an
//! ancilla per branch, Hadamard-measures its register down to d plus one
//! qubit, and answers the rotated measurement. The verdict compares signs:
//!
//! ```text
//! theta = +pi/8:  (-1)^b == (1-alpha)(-1)^{r0.x0} + alpha(-1)^{d.(x0+x1)}
//! theta = -pi/8:  (-1)^b == (1-alpha)(-1)^{r0.x0} - alpha(-1)^{d.(x0+x1)}
//! ```
//!
//! Exactly one term survives for each alpha, and the honest prover passes
//! with probability cos^2(pi/8) in all four (alpha, theta) combinations.

use crate::clawgen::{CgProver, CgVerifier, Mode, StitchedClaw, StreamParams};
use crate::f2::{sample_uniform, BitVec};
use crate::qsim::{chsh_measure, chsh_prob, hadamard_commit_measure, ClawPair, QubitDesc, Theta};
use crate::rng::{substream, Role};
use crate::session::{drive_tracked, Metered, Party, ProtocolError};
use crate::transcript::Direction;
use crate::wire::{protocol_id, Frame, FrameType};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct P2Params {
    pub stream: StreamParams,
    pub mode: Mode,
}

impl P2Params {
    pub fn new(stream: StreamParams, mode: Mode) -> Self {
        P2Params { stream, mode }
    }

    pub fn ell(&self) -> usize {
        self.stream.ell()
    }
}

/// Sign test exactly as printed, with (-1)^x in {+1, -1} as an integer.
pub fn verdict(alpha: bool, r0x0: bool, d_delta: bool, theta: Theta, b: bool) -> bool {
    let sign = |bit: bool| if bit { -1i32 } else { 1 };
    let a = alpha as i32;
    let rhs = match theta {
        Theta::Plus => (1 - a) * sign(r0x0) + a * sign(d_delta),
        Theta::Minus => (1 - a) * sign(r0x0) - a * sign(d_delta),
    };
    sign(b) == rhs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum V2Phase {
    Claw,
    AwaitD,
    AwaitB,
    Done,
}

pub struct P2Verifier {
    params: P2Params,
    inner: CgVerifier,
    r0: Option<BitVec>,
    r1: Option<BitVec>,
    alpha: Option<bool>,
    d: Option<BitVec>,
    theta: Option<Theta>,
    verdict: Option<bool>,
    phase: V2Phase,
}

impl P2Verifier {
    pub fn new(params: P2Params, rng: rand_chacha::ChaCha8Rng) -> Self {
        P2Verifier {
            params,
            inner: CgVerifier::new(params.stream, params.mode, rng),
            r0: None,
            r1: None,
            alpha: None,
            d: None,
            theta: None,
            verdict: None,
            phase: V2Phase::Claw,
        }
    }

    pub fn claw(&self) -> Option<&StitchedClaw> {
        self.inner.result()
    }

    pub fn alpha(&self) -> Option<bool> {
        self.alpha
    }

    pub fn theta(&self) -> Option<Theta> {
        self.theta
    }

    pub fn verdict(&self) -> Option<bool> {
        self.verdict
    }

    pub fn attempts(&self) -> u64 {
        self.inner.attempts()
    }

    pub fn streamed_bits(&self) -> u64 {
        self.inner.streamed_bits()
    }

    pub fn commitment(&self) -> Option<(&BitVec, &BitVec)> {
        Some((self.r0.as_ref()?, self.r1.as_ref()?))
    }

    /// The answer that will be accepted, defined once theta is out.
    pub fn expected_b(&self) -> Option<bool> {
        let theta = self.theta?;
        let claw = &self.inner.result()?.claw;
        if self.alpha? {
            let d_delta = self.d.as_ref()?.dot(&claw.delta());
            Some(match theta {
                Theta::Plus => d_delta,
                Theta::Minus => !d_delta,
            })
        } else {
            Some(self.r0.as_ref()?.dot(&claw.x0))
        }
    }

    fn open_challenge(&mut self) -> Vec<Frame> {
        let claw = self.inner.result().expect("claw phase finished").claw.clone();
        let ell = self.params.ell();
        let rng = self.inner.rng_mut();
        let r0 = sample_uniform(ell, rng);
        let r1 = sample_uniform(ell, rng);
        self.alpha = Some(r0.dot(&claw.x0) ^ r1.dot(&claw.x1));
        let frame = Frame::vec_pair(FrameType::R0R1Vec, &r0, &r1);
        self.r0 = Some(r0);
        self.r1 = Some(r1);
        self.phase = V2Phase::AwaitD;
        vec![frame]
    }
}

impl Party for P2Verifier {
    fn start(&mut self) -> Result<Vec<Frame>, ProtocolError> {
        self.inner.start()
    }

    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        match (self.phase, frame.ty) {
            (V2Phase::Claw, _) => {
                let mut out = self.inner.on_frame(frame)?;
                if self.inner.finished() {
                    out.extend(self.open_challenge());
                }
                Ok(out)
            }
            (V2Phase::AwaitD, FrameType::DVec) => {
                let d = frame.as_bitvec()?;
                if d.len() != self.params.ell() {
                    return Err(ProtocolError::Malformed {
                        what: "d vector",
                        why: format!("{} bits, want {}", d.len(), self.params.ell()),
                    });
                }
                self.d = Some(d);
                let theta = Theta::sample(self.inner.rng_mut());
                self.theta = Some(theta);
                self.phase = V2Phase::AwaitB;
                Ok(vec![Frame::theta(theta)])
            }
            (V2Phase::AwaitB, FrameType::BBit) => {
                let b = frame.as_bit()?;
                let claw = &self.inner.result().expect("claw is set").claw;
                let accept = verdict(
                    self.alpha.expect("alpha is set"),
                    self.r0.as_ref().expect("r0 is set").dot(&claw.x0),
                    self.d.as_ref().expect("d is set").dot(&claw.delta()),
                    self.theta.expect("theta is set"),
                    b,
                );
                self.verdict = Some(accept);
                self.phase = V2Phase::Done;
                Ok(vec![Frame::bit(FrameType::Verdict, accept)])
            }
            (_, got) => Err(ProtocolError::UnexpectedFrame {
                expected: "poq2 verifier frame",
                got,
            }),
        }
    }

    fn finished(&self) -> bool {
        self.phase == V2Phase::Done
    }
}

impl Metered for P2Verifier {
    fn persisted_bits(&self) -> usize {
        self.inner.persisted_bits()
            + self.r0.as_ref().map_or(0, BitVec::len)
            + self.r1.as_ref().map_or(0, BitVec::len)
            + self.d.as_ref().map_or(0, BitVec::len)
            + self.alpha.map_or(0, |_| 1)
            + self.theta.map_or(0, |_| 1)
            + self.verdict.map_or(0, |_| 1)
            + 2 // phase tag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum P2PPhase {
    Claw,
    Committed,
    Answered,
    Done,
}

pub struct P2Prover {
    params: P2Params,
    inner: CgProver,
    qubit: Option<QubitDesc>,
    theta: Option<Theta>,
    verdict: Option<bool>,
    phase: P2PPhase,
}

impl P2Prover {
    pub fn new(params: P2Params, rng: rand_chacha::ChaCha8Rng) -> Self {
        P2Prover {
            params,
            inner: CgProver::new(params.stream, rng),
            qubit: None,
            theta: None,
            verdict: None,
            phase: P2PPhase::Claw,
        }
    }

    pub fn qubit(&self) -> Option<QubitDesc> {
        self.qubit
    }

    pub fn peak_qubits(&self) -> usize {
        self.inner.peak_qubits()
    }

    pub fn verdict(&self) -> Option<bool> {
        self.verdict
    }

    /// The claw support as the prover sees it, branch labels from the
    /// round-0 dictator it received.
    pub fn claw_view(&self) -> Option<ClawPair> {
        let (x0, x1) = self.inner.result_support()?;
        let g = *self.inner.dictators().first()?;
        Some(ClawPair { x0, x1, g })
    }
}

impl Party for P2Prover {
    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        match (self.phase, frame.ty) {
            (P2PPhase::Claw, _) => {
                let out = self.inner.on_frame(frame)?;
                if self.inner.finished() {
                    self.phase = P2PPhase::Committed;
                }
                Ok(out)
            }
            (P2PPhase::Committed, FrameType::R0R1Vec) => {
                let (r0, r1) = frame.as_vec_pair()?;
                let ell = self.params.ell();
                if r0.len() != ell || r1.len() != ell {
                    return Err(ProtocolError::Malformed {
                        what: "commitment pair",
                        why: format!("{} and {} bits, want {ell}", r0.len(), r1.len()),
                    });
                }
                let claw = self.claw_view().expect("claw phase finished");
                let ledger = self.inner.ledger_mut();
                ledger.alloc(1);
                ledger.release(ell);
                let (d, qubit) =
                    hadamard_commit_measure(&claw, &r0, &r1, self.inner.rng_mut());
                self.qubit = Some(qubit);
                Ok(vec![Frame::bitvec(FrameType::DVec, &d)])
            }
            (P2PPhase::Committed, FrameType::Theta) => {
                if self.qubit.is_none() {
                    return Err(ProtocolError::UnexpectedFrame {
                        expected: "commitment pair before theta",
                        got: FrameType::Theta,
                    });
                }
                let theta = frame.as_theta()?;
                self.theta = Some(theta);
                let b = chsh_measure(self.qubit.expect("qubit is live"), theta, self.inner.rng_mut());
                self.inner.ledger_mut().release(1);
                self.phase = P2PPhase::Answered;
                Ok(vec![Frame::bit(FrameType::BBit, b)])
            }
            (P2PPhase::Answered, FrameType::Verdict) => {
                self.verdict = Some(frame.as_bit()?);
                self.phase = P2PPhase::Done;
                Ok(Vec::new())
            }
            (_, got) => Err(ProtocolError::UnexpectedFrame {
                expected: "poq2 prover frame",
                got,
            }),
        }
    }

    fn finished(&self) -> bool {
        self.phase == P2PPhase::Done
    }
}

#[derive(Debug, Clone)]
pub struct P2Run {
    pub records: Vec<(Direction, Frame)>,
    pub accept: bool,
    /// Probability the prover's final answer passes given the whole
    /// transcript prefix; cos^2(pi/8) on every honest trial.
    pub conditional_accept: f64,
    pub alpha: bool,
    /// Prover's claw view equals the verifier's claw, labels included.
    pub support_match: bool,
    pub attempts: u64,
    pub streamed_bits: u64,
    pub peak_qubits: usize,
    pub verifier_peak_bits: usize,
}

pub fn run_honest(params: P2Params, seed: u64, trial: u64) -> Result<P2Run, ProtocolError> {
    let (mut verifier, mut prover) = p2_parties(params, seed, trial);
    let (records, verifier_peak_bits) = drive_tracked(&mut verifier, &mut prover)?;
    let accept = verifier.verdict().expect("session ran to verdict");
    let conditional_accept = chsh_prob(
        prover.qubit().expect("prover committed"),
        verifier.theta().expect("verifier challenged"),
        verifier.expected_b().expect("verifier challenged"),
    );
    let vclaw = &verifier.claw().expect("claw is set").claw;
    let pclaw = prover.claw_view().expect("prover stitched");
    Ok(P2Run {
        accept,
        conditional_accept,
        alpha: verifier.alpha().expect("alpha is set"),
        support_match: pclaw.x0 == vclaw.x0 && pclaw.x1 == vclaw.x1 && pclaw.g == vclaw.g,
        attempts: verifier.attempts(),
        streamed_bits: verifier.streamed_bits(),
        peak_qubits: prover.peak_qubits(),
        verifier_peak_bits,
        records,
    })
}

pub fn p2_parties(params: P2Params, seed: u64, trial: u64) -> (P2Verifier, P2Prover) {
    (
        P2Verifier::new(
            params,
            substream(seed, protocol_id::POQ2, trial, Role::Verifier),
        ),
        P2Prover::new(
            params,
            substream(seed, protocol_id::POQ2, trial, Role::Prover),
        ),
    )
}
