//! Concrete classical cheaters wired into the real protocol engines. Each
//! one is an ordinary [`Party`], so it runs over any transport and under the
//! same memory audit as the honest provers.

use crate::clawgen::{assemble_branch, CgVerifier, Mode, StreamParams};
use crate::f2::{sample_uniform, BitMat, BitVec};
use crate::ih::{bob_respond, IhTranscript};
use crate::poq1::{row_rank, P1Params, P1Verifier};
use crate::qsim::Theta;
use crate::rng::{substream, Role};
use crate::session::{drive, MemoryAudited, Metered, Party, ProtocolError};
use crate::transcript::Direction;
use crate::wire::{protocol_id, Frame, FrameType};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Unbounded attack on the parity protocol: store every row, read the
/// residual direction off the kernel, and detect the coin from the
/// commitment itself.
///
/// Answering every round with y = 0 keeps the stored system homogeneous, so
/// the tails check reduces to b = 0 regardless of which rows were folded
/// into the accumulator. For heads the kernel of the full row matrix pins
/// t = (s, 1) whenever the rows reach full rank, the coin reads off as
/// r^T t, and the final answer d^T t (with the angle's polarity) is then
/// exactly what the verifier demands.
pub struct UnboundedP1Attack {
    params: P1Params,
    rng: ChaCha8Rng,
    rows: Vec<BitVec>,
    t_hat: Option<BitVec>,
    coin_hat: Option<bool>,
    d: Option<BitVec>,
    verdict: Option<bool>,
    done: bool,
}

impl UnboundedP1Attack {
    pub fn new(params: P1Params, rng: ChaCha8Rng) -> Self {
        UnboundedP1Attack {
            params,
            rng,
            rows: Vec::new(),
            t_hat: None,
            coin_hat: None,
            d: None,
            verdict: None,
            done: false,
        }
    }

    pub fn verdict(&self) -> Option<bool> {
        self.verdict
    }

    /// Coin read off the commitment; exact whenever the rows had full rank.
    pub fn coin_hat(&self) -> Option<bool> {
        self.coin_hat
    }

    fn recover_t(&self) -> Option<BitVec> {
        // t lies in the kernel of every honest row and ends in 1. On
        // full-rank transcripts the kernel is {0, t}, so the choice is
        // forced; otherwise any kernel element ending in 1 is a guess.
        BitMat::from_rows(&self.rows)
            .kernel()
            .into_iter()
            .find(|v| v.get(self.params.n))
    }
}

impl Party for UnboundedP1Attack {
    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        match frame.ty {
            FrameType::ARow => {
                self.rows.push(frame.as_bitvec()?);
                Ok(vec![Frame::bit(FrameType::YBit, false)])
            }
            FrameType::RVec => {
                let r = frame.as_bitvec()?;
                self.t_hat = self.recover_t();
                self.coin_hat = Some(match &self.t_hat {
                    Some(t) => r.dot(t),
                    None => false,
                });
                let d = sample_uniform(self.params.ell(), &mut self.rng);
                self.d = Some(d.clone());
                Ok(vec![Frame::bitvec(FrameType::DVec, &d)])
            }
            FrameType::Theta => {
                let theta = frame.as_theta()?;
                let b = match (self.coin_hat, &self.t_hat) {
                    (Some(true), Some(t)) => {
                        let dt = self.d.as_ref().expect("d was sent").dot(t);
                        match theta {
                            Theta::Plus => dt,
                            Theta::Minus => !dt,
                        }
                    }
                    // Tails: our answers were all zero, so the accumulated
                    // parity the verifier checks is zero too.
                    _ => false,
                };
                Ok(vec![Frame::bit(FrameType::BBit, b)])
            }
            FrameType::Verdict => {
                self.verdict = Some(frame.as_bit()?);
                self.done = true;
                Ok(Vec::new())
            }
            got => Err(ProtocolError::UnexpectedFrame {
                expected: "poq1 prover frame",
                got,
            }),
        }
    }

    fn finished(&self) -> bool {
        self.done
    }
}

impl Metered for UnboundedP1Attack {
    fn persisted_bits(&self) -> usize {
        let ell = self.params.ell();
        self.rows.len() * ell
            + self.t_hat.as_ref().map_or(0, BitVec::len)
            + self.d.as_ref().map_or(0, BitVec::len)
            + self.coin_hat.map_or(0, |_| 1)
            + self.verdict.map_or(0, |_| 1)
            + 1
    }
}

/// Linear-memory attack: commit to one fixed candidate x up front and play
/// it straight. Every round answer is a^T x, so the tails check passes
/// identically; heads comes down to a coin flip against a random d.
pub struct LinearMemoryP1Attack {
    params: P1Params,
    rng: ChaCha8Rng,
    x: BitVec,
    rb: Option<bool>,
    verdict: Option<bool>,
    done: bool,
}

impl LinearMemoryP1Attack {
    pub fn new(params: P1Params, mut rng: ChaCha8Rng) -> Self {
        let x = sample_uniform(params.ell(), &mut rng);
        LinearMemoryP1Attack {
            params,
            rng,
            x,
            rb: None,
            verdict: None,
            done: false,
        }
    }

    pub fn verdict(&self) -> Option<bool> {
        self.verdict
    }
}

impl Party for LinearMemoryP1Attack {
    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        match frame.ty {
            FrameType::ARow => {
                let a = frame.as_bitvec()?;
                Ok(vec![Frame::bit(FrameType::YBit, a.dot(&self.x))])
            }
            FrameType::RVec => {
                let r = frame.as_bitvec()?;
                self.rb = Some(r.dot(&self.x));
                let d = sample_uniform(self.params.ell(), &mut self.rng);
                Ok(vec![Frame::bitvec(FrameType::DVec, &d)])
            }
            FrameType::Theta => {
                frame.as_theta()?;
                let b = self.rb.expect("commitment arrived before the angle");
                Ok(vec![Frame::bit(FrameType::BBit, b)])
            }
            FrameType::Verdict => {
                self.verdict = Some(frame.as_bit()?);
                self.done = true;
                Ok(Vec::new())
            }
            got => Err(ProtocolError::UnexpectedFrame {
                expected: "poq1 prover frame",
                got,
            }),
        }
    }

    fn finished(&self) -> bool {
        self.done
    }
}

impl Metered for LinearMemoryP1Attack {
    fn persisted_bits(&self) -> usize {
        self.x.len() + self.rb.map_or(0, |_| 1) + self.verdict.map_or(0, |_| 1) + 1
    }
}

/// One adversarial parity-protocol trial against the honest verifier.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub accept: bool,
    pub degenerate: bool,
    pub peak_bits: usize,
    pub records: Vec<(Direction, Frame)>,
}

fn drive_p1_attack<A: Party + Metered>(
    params: P1Params,
    seed: u64,
    trial: u64,
    attack: A,
    capacity: Option<usize>,
) -> Result<AttackRun, ProtocolError> {
    let mut verifier = P1Verifier::new(
        params,
        substream(seed, protocol_id::POQ1, trial, Role::Verifier),
    );
    let mut audited = MemoryAudited::new(attack, capacity);
    let records = drive(&mut verifier, &mut audited)?;
    Ok(AttackRun {
        accept: verifier.verdict().expect("session ran to verdict"),
        degenerate: row_rank(params, &records) < params.n,
        peak_bits: audited.peak_bits(),
        records,
    })
}

pub fn run_unbounded_p1_attack(
    params: P1Params,
    seed: u64,
    trial: u64,
) -> Result<AttackRun, ProtocolError> {
    let attack = UnboundedP1Attack::new(
        params,
        substream(seed, protocol_id::POQ1, trial, Role::Prover),
    );
    drive_p1_attack(params, seed, trial, attack, None)
}

pub fn run_linear_p1_attack(
    params: P1Params,
    seed: u64,
    trial: u64,
    capacity: Option<usize>,
) -> Result<AttackRun, ProtocolError> {
    let attack = LinearMemoryP1Attack::new(
        params,
        substream(seed, protocol_id::POQ1, trial, Role::Prover),
    );
    drive_p1_attack(params, seed, trial, attack, capacity)
}

/// One accepted claw-generation round as the subset attack remembers it:
/// the second hash preimage plus whichever stream bits fell inside the
/// stored window.
#[derive(Debug, Clone)]
struct SubsetRound {
    w: usize,
    z_one: Option<bool>,
    z_w: Option<bool>,
}

/// Bounded-memory attack on claw generation. It plays Bob committed to
/// index 1 (so all hash responses are zero) and stores only the first p
/// stream bits of the attempt in flight plus per-round bookkeeping. After
/// stitching it must name both assembled strings; every stream bit that
/// fell outside the stored window is a fair coin.
///
/// Both hash preimages are always known exactly: index 1 by construction
/// and its partner from the transcript. With p = 0 the two stream bits of
/// each round are blind guesses and the success rate is exactly 2^-2lambda;
/// growing k at fixed p shrinks the chance the partner lands inside the
/// window, so the rate decays toward that floor.
pub struct SubsetClawgenAttack {
    params: StreamParams,
    p: usize,
    rng: ChaCha8Rng,
    pos: usize,
    window: Vec<bool>,
    trans: Option<IhTranscript>,
    banked: Vec<SubsetRound>,
    guess: Option<(BitVec, BitVec)>,
    done: bool,
}

impl SubsetClawgenAttack {
    pub fn new(params: StreamParams, p: usize, rng: ChaCha8Rng) -> Self {
        assert!(p <= params.k, "window cannot exceed the stream");
        SubsetClawgenAttack {
            params,
            p,
            rng,
            pos: 0,
            window: Vec::new(),
            trans: None,
            banked: Vec::new(),
            guess: None,
            done: false,
        }
    }

    /// The attack's claim for (x0, x1), available after stitching.
    pub fn guess(&self) -> Option<&(BitVec, BitVec)> {
        self.guess.as_ref()
    }

    fn reset_attempt(&mut self) {
        self.pos = 0;
        self.window.clear();
        self.trans = None;
    }
}

impl Party for SubsetClawgenAttack {
    fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        let ih = self.params.ih();
        match frame.ty {
            FrameType::StreamChunk => {
                let chunk = frame.as_bitvec()?;
                for bit in chunk.iter() {
                    if self.pos < self.p {
                        self.window.push(bit);
                    }
                    self.pos += 1;
                }
                if self.pos > self.params.k {
                    return Err(ProtocolError::Malformed {
                        what: "stream chunk",
                        why: format!("{} bits past the {}-bit stream", self.pos, self.params.k),
                    });
                }
                if self.pos == self.params.k {
                    self.trans = Some(IhTranscript::new(ih));
                }
                Ok(Vec::new())
            }
            FrameType::IhRow => {
                let row = frame.as_bitvec()?;
                let trans = self.trans.as_mut().ok_or(ProtocolError::Malformed {
                    what: "hash row",
                    why: "arrived before the stream completed".into(),
                })?;
                let resp = bob_respond(ih, 1, &row);
                trans.push(row, resp);
                Ok(vec![Frame::bit(FrameType::IhResp, resp)])
            }
            FrameType::Verdict => {
                if frame.as_bit()? {
                    let trans = self.trans.as_ref().ok_or(ProtocolError::Malformed {
                        what: "verdict",
                        why: "arrived before the stream completed".into(),
                    })?;
                    let (p0, p1) = trans.preimages();
                    debug_assert_eq!(p0, 1, "zero responses always keep index 1");
                    self.banked.push(SubsetRound {
                        w: p1,
                        z_one: self.window.first().copied(),
                        z_w: (p1 <= self.p).then(|| self.window[p1 - 1]),
                    });
                }
                self.reset_attempt();
                Ok(Vec::new())
            }
            FrameType::StitchFuns => {
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
                let mut bits = BitVec::zeros(0);
                for _ in 1..self.params.lambda {
                    bits.push(self.rng.random::<bool>());
                }
                // Fill the unseen stream bits with coin flips, then assemble
                // with the same chaining rule the verifier uses.
                let pairs: Vec<_> = self
                    .banked
                    .iter()
                    .map(|round| {
                        let z1 = round.z_one.unwrap_or_else(|| self.rng.random::<bool>());
                        let zw = round.z_w.unwrap_or_else(|| self.rng.random::<bool>());
                        ((1, z1), (round.w, zw))
                    })
                    .collect();
                let x0 = assemble_branch(ih, &pairs, &dicts, &bits, false)?;
                let x1 = assemble_branch(ih, &pairs, &dicts, &bits, true)?;
                self.guess = Some((x0, x1));
                self.done = true;
                Ok(vec![Frame::bitvec(FrameType::StitchBits, &bits)])
            }
            got => Err(ProtocolError::UnexpectedFrame {
                expected: "clawgen prover frame",
                got,
            }),
        }
    }

    fn finished(&self) -> bool {
        self.done
    }
}

impl Metered for SubsetClawgenAttack {
    fn persisted_bits(&self) -> usize {
        let kbits = self.params.ih().bits();
        let mut bits = self.window.len() + bits_for(self.params.k);
        if let Some(t) = &self.trans {
            bits += t.rows().len() * (kbits + 1);
        }
        // Each banked round keeps the partner index and two optional bits.
        bits += self.banked.len() * (kbits + 4);
        if let Some((x0, x1)) = &self.guess {
            bits += x0.len() + x1.len();
        }
        bits + 1
    }
}

fn bits_for(n: usize) -> usize {
    usize::BITS as usize - n.leading_zeros() as usize
}

#[derive(Debug, Clone)]
pub struct SubsetRun {
    pub success: bool,
    pub attempts: u64,
    pub peak_bits: usize,
}

pub fn run_subset_attack(
    params: StreamParams,
    p: usize,
    capacity: Option<usize>,
    seed: u64,
    trial: u64,
) -> Result<SubsetRun, ProtocolError> {
    let mut verifier = CgVerifier::new(
        params,
        Mode::Rejection,
        substream(seed, protocol_id::CLAWGEN, trial, Role::Verifier),
    );
    let attack = SubsetClawgenAttack::new(
        params,
        p,
        substream(seed, protocol_id::CLAWGEN, trial, Role::Prover),
    );
    let mut audited = MemoryAudited::new(attack, capacity);
    drive(&mut verifier, &mut audited)?;
    let stitched = verifier.result().expect("run completed");
    let guess = audited.inner().guess().expect("attack stitched");
    Ok(SubsetRun {
        success: guess.0 == stitched.claw.x0 && guess.1 == stitched.claw.x1,
        attempts: verifier.attempts(),
        peak_bits: audited.peak_bits(),
    })
}
