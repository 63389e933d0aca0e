//! Claw generation: per-bit streaming plus interactive hashing with retry,
//! then stitching the accepted rounds into one claw of width lambda.
//!
//! Each round the verifier picks two target indices, streams k fresh bits
//! past the prover, and runs interactive hashing against the prover's
//! coherent index register. An attempt counts only if the hash preimages are
//! exactly the targets, which happens with probability 1/k^2; failures
//! restart the round with fresh randomness. Accepted rounds pin a pair
//! (v0, z0), (v1, z1) on both sides. Stitching then chains the rounds with
//! one dictator bit per round so the prover's residual support is exactly
//! the verifier's two assembled strings.
//!
//! Rejection mode plays the retry loop as specified. Accelerated mode is an
//! honest-run shortcut: the targets are independent of everything else, so
//! the run may draw the stream and hash first and set the targets to the
//! preimages afterwards. The two modes give identically distributed outputs;
//! adversarial runs must use rejection mode, since an adversary's state
//! evolves across failed attempts.

use crate::f2::{sample_uniform, BitVec};
use crate::ih::{encode_index, AliceState, IhParams, IhTranscript};
use crate::qsim::{BranchBit, ClawPair, QubitLedger};
use crate::rng::{substream, Role};
use crate::session::{drive_tracked, Metered, Party, ProtocolError};
use crate::transcript::Direction;
use crate::wire::{protocol_id, Frame, FrameType, MAX_CHUNK_BITS};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamParams {
    pub lambda: usize,
    pub k: usize,
    /// Adversary memory bound the deployment targets; only consulted by the
    /// strict-mode parameter check and reports.
    pub m_bits: usize,
}

impl StreamParams {
    pub fn new(lambda: usize, k: usize, m_bits: usize) -> Result<Self, ProtocolError> {
        if lambda == 0 {
            return Err(ProtocolError::Malformed {
                what: "params",
                why: "lambda must be at least 1".into(),
            });
        }
        IhParams::new(k).map_err(|e| ProtocolError::Malformed {
            what: "params",
            why: e.to_string(),
        })?;
        Ok(StreamParams { lambda, k, m_bits })
    }

    pub fn ih(&self) -> IhParams {
        IhParams::new(self.k).expect("validated at construction")
    }

    /// Width of each assembled claw string.
    pub fn ell(&self) -> usize {
        self.lambda * (self.ih().bits() + 1)
    }

    /// Soundness-regime check `k/log2(k) > lambda * (m + c*lambda)`; strict
    /// runs refuse parameters that fail it, desk runs carry on with a
    /// warning.
    pub fn satisfies_strict(&self, c: f64) -> bool {
        let kbits = self.ih().bits().max(1);
        (self.k as f64 / kbits as f64)
            > self.lambda as f64 * (self.m_bits as f64 + c * self.lambda as f64)
    }

    pub fn default_attempt_budget(&self) -> u64 {
        100 * (self.k as u64) * (self.k as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Rejection,
    Accelerated,
}

/// One accepted round: target indices and their stream bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneBitClaw {
    pub v0: usize,
    pub v1: usize,
    pub z0: bool,
    pub z1: bool,
}

impl OneBitClaw {
    fn pair(&self) -> ((usize, bool), (usize, bool)) {
        ((self.v0, self.z0), (self.v1, self.z1))
    }
}

/// Output of a full run: the claw, the stitch bits that chained the rounds,
/// and the per-round dictator descriptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StitchedClaw {
    pub claw: ClawPair,
    pub stitch_bits: BitVec,
    pub dictators: Vec<BranchBit>,
}

/// Dictator on the round's index bits: the minimal position where the two
/// target encodings differ, with polarity making g(v0) = 0 and g(v1) = 1.
pub fn pick_dictator(ih: IhParams, v0: usize, v1: usize) -> BranchBit {
    assert_ne!(v0, v1, "a dictator needs distinct indices");
    let e0 = encode_index(ih, v0);
    let e1 = encode_index(ih, v1);
    let p = (0..ih.bits())
        .find(|&i| e0.get(i) != e1.get(i))
        .expect("distinct indices differ somewhere");
    BranchBit {
        index: p,
        invert: e0.get(p),
    }
}

/// Builds one branch of the stitched claw from the accepted pairs. Round
/// j >= 1 contributes the element whose dictator value is `branch XOR b_j`;
/// round 0 uses b = 0. Errors if some dictator fails to separate its pair.
pub fn assemble_branch(
    ih: IhParams,
    pairs: &[((usize, bool), (usize, bool))],
    dicts: &[BranchBit],
    bits: &BitVec,
    branch: bool,
) -> Result<BitVec, ProtocolError> {
    assert_eq!(pairs.len(), dicts.len());
    assert_eq!(bits.len() + 1, pairs.len());
    let mut x = BitVec::zeros(0);
    for (j, ((va, za), (vb, zb))) in pairs.iter().map(|p| *p).enumerate() {
        let b_j = j > 0 && bits.get(j - 1);
        let want = branch ^ b_j;
        let ea = encode_index(ih, va);
        let ga = dicts[j].eval(&ea);
        let gb = dicts[j].eval(&encode_index(ih, vb));
        if ga == gb {
            return Err(ProtocolError::Malformed {
                what: "dictator",
                why: format!("round {j}: g({va}) = g({vb})"),
            });
        }
        let (v, z) = if ga == want { (va, za) } else { (vb, zb) };
        x = x.concat(&encode_index(ih, v));
        x.push(z);
    }
    Ok(x)
}

/// Verifier-side assembly of the full claw from its accepted rounds.
pub fn assemble_claw(
    ih: IhParams,
    claws: &[OneBitClaw],
    dicts: &[BranchBit],
    bits: &BitVec,
) -> Result<ClawPair, ProtocolError> {
    let pairs: Vec<_> = claws.iter().map(OneBitClaw::pair).collect();
    let x0 = assemble_branch(ih, &pairs, dicts, bits, false)?;
    let x1 = assemble_branch(ih, &pairs, dicts, bits, true)?;
    let claw = ClawPair {
        x0,
        x1,
        // Round 0 occupies the leading index bits, so its dictator applies
        // to the assembled strings unchanged.
        g: dicts[0],
    };
    assert!(claw.is_well_formed(), "assembled claw must separate under g");
    Ok(claw)
}

/// One round without the wire machinery: draws targets, streams, hashes,
/// retries. Returns the claw, the prover-side support pairs, and how many
/// attempts it took.
pub fn gen_one_bit_claw<R: Rng + ?Sized>(
    ih: IhParams,
    mode: Mode,
    budget: u64,
    rng: &mut R,
) -> Result<(OneBitClaw, [(usize, bool); 2], u64), ProtocolError> {
    let k = ih.k();
    let mut attempts = 0u64;
    loop {
        attempts += 1;
        if attempts > budget {
            return Err(ProtocolError::AttemptBudgetExhausted {
                attempts: attempts - 1,
            });
        }
        let (tv0, tv1) = match mode {
            Mode::Rejection => (rng.random_range(1..=k), rng.random_range(1..=k)),
            Mode::Accelerated => (0, 0),
        };
        let u = sample_uniform(k, rng);
        let mut support: Vec<usize> = (1..=k).collect();
        let mut trans = IhTranscript::new(ih);
        let mut alice = AliceState::new(ih);
        while !trans.is_complete() {
            let row = alice.next_row(rng).expect("rounds remain");
            let resp = crate::ih::coherent_respond(ih, &mut support, &row, rng);
            trans.push(row, resp);
        }
        let (p0, p1) = trans.preimages();
        debug_assert_eq!(support, vec![p0, p1]);
        let (v0, v1) = match mode {
            Mode::Rejection => {
                if (tv0, tv1) != (p0, p1) {
                    continue;
                }
                (tv0, tv1)
            }
            Mode::Accelerated => (p0, p1),
        };
        let claw = OneBitClaw {
            v0,
            v1,
            z0: u.get(v0 - 1),
            z1: u.get(v1 - 1),
        };
        return Ok((claw, [(p0, u.get(p0 - 1)), (p1, u.get(p1 - 1))], attempts));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CgVPhase {
    AwaitResp,
    AwaitStitchBits,
    Done,
}

pub struct CgVerifier {
    params: StreamParams,
    mode: Mode,
    rng: ChaCha8Rng,
    budget: u64,
    attempts: u64,
    streamed_bits: u64,
    round: usize,
    v0: usize,
    v1: usize,
    z0: Option<bool>,
    z1: Option<bool>,
    /// Whole stream of the attempt in flight; accelerated mode only, where
    /// the harness trades the streaming-space property for speed.
    u_full: Option<BitVec>,
    alice: Option<AliceState>,
    trans: Option<IhTranscript>,
    pending_row: Option<BitVec>,
    banked: Vec<OneBitClaw>,
    dicts: Vec<BranchBit>,
    result: Option<StitchedClaw>,
    phase: CgVPhase,
}

impl CgVerifier {
    pub fn new(params: StreamParams, mode: Mode, rng: ChaCha8Rng) -> Self {
        let budget = params.default_attempt_budget();
        CgVerifier::with_budget(params, mode, budget, rng)
    }

    pub fn with_budget(params: StreamParams, mode: Mode, budget: u64, rng: ChaCha8Rng) -> Self {
        CgVerifier {
            params,
            mode,
            rng,
            budget,
            attempts: 0,
            streamed_bits: 0,
            round: 0,
            v0: 0,
            v1: 0,
            z0: None,
            z1: None,
            u_full: None,
            alice: None,
            trans: None,
            pending_row: None,
            banked: Vec::new(),
            dicts: Vec::new(),
            result: None,
            phase: CgVPhase::AwaitResp,
        }
    }

    pub fn result(&self) -> Option<&StitchedClaw> {
        self.result.as_ref()
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn streamed_bits(&self) -> u64 {
        self.streamed_bits
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Starts attempts until one is waiting on a hash response or the whole
    /// protocol has moved to stitching. Emitted frames accumulate in order.
    fn advance(&mut self, frames: &mut Vec<Frame>) -> Result<(), ProtocolError> {
        loop {
            self.attempts += 1;
            if self.attempts > self.budget {
                return Err(ProtocolError::AttemptBudgetExhausted {
                    attempts: self.attempts - 1,
                });
            }
            let k = self.params.k;
            if self.mode == Mode::Rejection {
                self.v0 = self.rng.random_range(1..=k);
                self.v1 = self.rng.random_range(1..=k);
            }
            self.z0 = None;
            self.z1 = None;
            let mut stored = match self.mode {
                Mode::Accelerated => Some(BitVec::zeros(0)),
                Mode::Rejection => None,
            };
            let mut pos = 0;
            while pos < k {
                let take = (k - pos).min(MAX_CHUNK_BITS);
                let mut chunk = BitVec::zeros(0);
                for _ in 0..take {
                    let bit = self.rng.random::<bool>();
                    if self.mode == Mode::Rejection {
                        if pos + 1 == self.v0 {
                            self.z0 = Some(bit);
                        }
                        if pos + 1 == self.v1 {
                            self.z1 = Some(bit);
                        }
                    }
                    if let Some(u) = stored.as_mut() {
                        u.push(bit);
                    }
                    chunk.push(bit);
                    pos += 1;
                }
                frames.push(Frame::bitvec(FrameType::StreamChunk, &chunk));
            }
            self.streamed_bits += k as u64;
            self.u_full = stored;
            let ih = self.params.ih();
            self.trans = Some(IhTranscript::new(ih));
            if ih.rounds() > 0 {
                let mut alice = AliceState::new(ih);
                let row = alice.next_row(&mut self.rng).expect("rounds remain");
                self.alice = Some(alice);
                self.pending_row = Some(row.clone());
                self.phase = CgVPhase::AwaitResp;
                frames.push(Frame::bitvec(FrameType::IhRow, &row));
                return Ok(());
            }
            // k = 2 has no hash rounds; the attempt settles immediately.
            if self.settle_attempt(frames)? {
                return Ok(());
            }
        }
    }

    /// Judges the completed attempt, emits its verdict frame, and banks the
    /// round on success. Returns true when the caller should stop advancing,
    /// i.e. the protocol is now waiting for stitch bits.
    fn settle_attempt(&mut self, frames: &mut Vec<Frame>) -> Result<bool, ProtocolError> {
        let trans = self.trans.take().expect("attempt in flight");
        let (p0, p1) = trans.preimages();
        self.alice = None;
        let success = match self.mode {
            Mode::Rejection => self.v0 == p0 && self.v1 == p1,
            Mode::Accelerated => {
                let u = self.u_full.take().expect("accelerated mode keeps the stream");
                self.v0 = p0;
                self.v1 = p1;
                self.z0 = Some(u.get(p0 - 1));
                self.z1 = Some(u.get(p1 - 1));
                true
            }
        };
        self.u_full = None;
        frames.push(Frame::bit(FrameType::Verdict, success));
        if !success {
            return Ok(false);
        }
        self.banked.push(OneBitClaw {
            v0: self.v0,
            v1: self.v1,
            z0: self.z0.expect("z0 captured during streaming"),
            z1: self.z1.expect("z1 captured during streaming"),
        });
        self.round += 1;
        if self.round == self.params.lambda {
            let ih = self.params.ih();
            self.dicts = self
                .banked
                .iter()
                .map(|c| pick_dictator(ih, c.v0, c.v1))
                .collect();
            frames.push(Frame::stitch_funs(&self.dicts));
            self.phase = CgVPhase::AwaitStitchBits;
            return Ok(true);
        }
        Ok(false)
    }
}

impl Party for CgVerifier {
    fn start(&mut self) -> Result<Vec<Frame>, ProtocolError> {
        let mut frames = Vec::new();
        self.advance(&mut frames)?;
        Ok(frames)
    }

    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        match (self.phase, frame.ty) {
            (CgVPhase::AwaitResp, FrameType::IhResp) => {
                let bit = frame.as_bit()?;
                let row = self.pending_row.take().expect("a row is outstanding");
                let trans = self.trans.as_mut().expect("attempt in flight");
                trans.push(row, bit);
                if !trans.is_complete() {
                    let row = self
                        .alice
                        .as_mut()
                        .expect("alice lives while rounds remain")
                        .next_row(&mut self.rng)
                        .expect("rounds remain");
                    self.pending_row = Some(row.clone());
                    return Ok(vec![Frame::bitvec(FrameType::IhRow, &row)]);
                }
                let mut frames = Vec::new();
                if !self.settle_attempt(&mut frames)? {
                    self.advance(&mut frames)?;
                }
                Ok(frames)
            }
            (CgVPhase::AwaitStitchBits, FrameType::StitchBits) => {
                let bits = frame.as_bitvec()?;
                if bits.len() + 1 != self.params.lambda {
                    return Err(ProtocolError::Malformed {
                        what: "stitch bits",
                        why: format!("{} bits for lambda {}", bits.len(), self.params.lambda),
                    });
                }
                let claw = assemble_claw(self.params.ih(), &self.banked, &self.dicts, &bits)?;
                self.result = Some(StitchedClaw {
                    claw,
                    stitch_bits: bits,
                    dictators: self.dicts.clone(),
                });
                self.phase = CgVPhase::Done;
                Ok(Vec::new())
            }
            (_, got) => Err(ProtocolError::UnexpectedFrame {
                expected: "clawgen verifier frame",
                got,
            }),
        }
    }

    fn finished(&self) -> bool {
        self.phase == CgVPhase::Done
    }
}

impl Metered for CgVerifier {
    /// Counts each protocol variable once at its semantic width. The
    /// accelerated-mode stream buffer is included, which is exactly why that
    /// mode fails the streaming-space audit and rejection mode passes it.
    fn persisted_bits(&self) -> usize {
        let kbits = self.params.ih().bits();
        let dict_bits = bits_for(kbits) + 1;
        let mut bits = 2 * kbits + 4; // v0, v1 and the two optional z bits
        bits += self.u_full.as_ref().map_or(0, BitVec::len);
        if let Some(t) = &self.trans {
            bits += t.rows().len() * (kbits + 1);
        }
        bits += self.pending_row.as_ref().map_or(0, BitVec::len);
        bits += self.banked.len() * (2 * kbits + 2);
        bits += self.dicts.len() * dict_bits;
        if let Some(r) = &self.result {
            bits += r.claw.x0.len() + r.claw.x1.len() + r.stitch_bits.len() + dict_bits;
        }
        bits += bits_for(self.budget as usize); // attempt counter
        bits += bits_for(self.params.lambda); // round counter
        bits + 2 // phase tag
    }
}

fn bits_for(n: usize) -> usize {
    usize::BITS as usize - n.leading_zeros() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CgPPhase {
    Attempt,
    Stitched,
}

pub struct CgProver {
    params: StreamParams,
    rng: ChaCha8Rng,
    u_seen: BitVec,
    support: Vec<usize>,
    banked: Vec<((usize, bool), (usize, bool))>,
    dicts: Vec<BranchBit>,
    bits: Option<BitVec>,
    x0: Option<BitVec>,
    x1: Option<BitVec>,
    ledger: QubitLedger,
    phase: CgPPhase,
}

impl CgProver {
    pub fn new(params: StreamParams, rng: ChaCha8Rng) -> Self {
        CgProver {
            params,
            rng,
            u_seen: BitVec::zeros(0),
            support: Vec::new(),
            banked: Vec::new(),
            dicts: Vec::new(),
            bits: None,
            x0: None,
            x1: None,
            ledger: QubitLedger::default(),
            phase: CgPPhase::Attempt,
        }
    }

    /// The two strings the prover's residual register supports after
    /// stitching, labeled by the round-0 dictator.
    pub fn result_support(&self) -> Option<(BitVec, BitVec)> {
        Some((self.x0.clone()?, self.x1.clone()?))
    }

    /// Dictators received at stitching; empty before then.
    pub fn dictators(&self) -> &[BranchBit] {
        &self.dicts
    }

    pub fn peak_qubits(&self) -> usize {
        self.ledger.peak()
    }

    fn register_width(&self) -> usize {
        self.params.ih().bits() + 1
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub(crate) fn ledger_mut(&mut self) -> &mut QubitLedger {
        &mut self.ledger
    }
}

impl Party for CgProver {
    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        let ih = self.params.ih();
        match (self.phase, frame.ty) {
            (CgPPhase::Attempt, FrameType::StreamChunk) => {
                let chunk = frame.as_bitvec()?;
                if self.u_seen.is_empty() && self.support.is_empty() {
                    self.ledger.alloc(self.register_width());
                }
                if self.u_seen.len() + chunk.len() > self.params.k {
                    return Err(ProtocolError::Malformed {
                        what: "stream chunk",
                        why: format!(
                            "{} bits past the {}-bit stream",
                            self.u_seen.len() + chunk.len(),
                            self.params.k
                        ),
                    });
                }
                self.u_seen = self.u_seen.concat(&chunk);
                if self.u_seen.len() == self.params.k {
                    self.support = (1..=self.params.k).collect();
                }
                Ok(Vec::new())
            }
            (CgPPhase::Attempt, FrameType::IhRow) => {
                if self.support.is_empty() {
                    return Err(ProtocolError::Malformed {
                        what: "hash row",
                        why: "arrived before the stream completed".into(),
                    });
                }
                let row = frame.as_bitvec()?;
                if row.len() != ih.bits() {
                    return Err(ProtocolError::Malformed {
                        what: "hash row",
                        why: format!("{} bits, want {}", row.len(), ih.bits()),
                    });
                }
                self.ledger.alloc(1);
                let resp = crate::ih::coherent_respond(ih, &mut self.support, &row, &mut self.rng);
                self.ledger.release(1);
                Ok(vec![Frame::bit(FrameType::IhResp, resp)])
            }
            (CgPPhase::Attempt, FrameType::Verdict) => {
                let accepted = frame.as_bit()?;
                if accepted {
                    if self.support.len() != 2 {
                        return Err(ProtocolError::Malformed {
                            what: "verdict",
                            why: format!("accept with support of {}", self.support.len()),
                        });
                    }
                    let (s0, s1) = (self.support[0], self.support[1]);
                    self.banked
                        .push(((s0, self.u_seen.get(s0 - 1)), (s1, self.u_seen.get(s1 - 1))));
                } else {
                    self.ledger.release(self.register_width());
                }
                self.u_seen = BitVec::zeros(0);
                self.support.clear();
                Ok(Vec::new())
            }
            (CgPPhase::Attempt, FrameType::StitchFuns) => {
                let dicts = frame.as_stitch_funs()?;
                if dicts.len() != self.params.lambda || self.banked.len() != self.params.lambda {
                    return Err(ProtocolError::Malformed {
                        what: "stitch functions",
                        why: format!(
                            "{} dictators over {} banked rounds, want {}",
                            dicts.len(),
                            self.banked.len(),
                            self.params.lambda
                        ),
                    });
                }
                // Each chaining measurement consumes one ancilla and yields
                // one uniform bit linking round j's branch to round 0's.
                let mut bits = BitVec::zeros(0);
                for _ in 1..self.params.lambda {
                    self.ledger.alloc(1);
                    bits.push(self.rng.random::<bool>());
                    self.ledger.release(1);
                }
                self.x0 = Some(assemble_branch(ih, &self.banked, &dicts, &bits, false)?);
                self.x1 = Some(assemble_branch(ih, &self.banked, &dicts, &bits, true)?);
                self.dicts = dicts;
                self.bits = Some(bits.clone());
                self.phase = CgPPhase::Stitched;
                Ok(vec![Frame::bitvec(FrameType::StitchBits, &bits)])
            }
            (_, got) => Err(ProtocolError::UnexpectedFrame {
                expected: "clawgen prover frame",
                got,
            }),
        }
    }

    fn finished(&self) -> bool {
        self.phase == CgPPhase::Stitched
    }
}

/// One full run, driven in process.
#[derive(Debug, Clone)]
pub struct ClawRun {
    pub records: Vec<(Direction, Frame)>,
    pub stitched: StitchedClaw,
    pub prover_support: (BitVec, BitVec),
    /// Prover support equals the verifier's claw, branch labels included.
    pub support_match: bool,
    pub attempts: u64,
    pub streamed_bits: u64,
    pub peak_qubits: usize,
    pub verifier_peak_bits: usize,
}

pub fn run_clawgen(
    params: StreamParams,
    mode: Mode,
    seed: u64,
    trial: u64,
) -> Result<ClawRun, ProtocolError> {
    let (mut verifier, mut prover) = clawgen_parties(params, mode, seed, trial);
    let (records, verifier_peak_bits) = drive_tracked(&mut verifier, &mut prover)?;
    let stitched = verifier.result().expect("run completed").clone();
    let prover_support = prover.result_support().expect("prover stitched");
    let support_match =
        prover_support.0 == stitched.claw.x0 && prover_support.1 == stitched.claw.x1;
    Ok(ClawRun {
        records,
        support_match,
        prover_support,
        attempts: verifier.attempts(),
        streamed_bits: verifier.streamed_bits(),
        peak_qubits: prover.peak_qubits(),
        verifier_peak_bits,
        stitched,
    })
}

pub fn clawgen_parties(
    params: StreamParams,
    mode: Mode,
    seed: u64,
    trial: u64,
) -> (CgVerifier, CgProver) {
    (
        CgVerifier::new(
            params,
            mode,
            substream(seed, protocol_id::CLAWGEN, trial, Role::Verifier),
        ),
        CgProver::new(
            params,
            substream(seed, protocol_id::CLAWGEN, trial, Role::Prover),
        ),
    )
}
