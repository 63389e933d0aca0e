//! Low-memory linear decoding from a noisy parity oracle, plus the rewinding
//! predictor that turns a prover's measurement box into such an oracle.
//!
//! The extractor recovers an n-bit secret from an oracle that agrees with
//! r -> r.x on noticeably more than half of all queries. It derandomizes the
//! query set through t shared seeds, so its working memory stays near
//! t*n + O(n) bits instead of the naive 2^t table, and each coordinate is
//! decided by a streaming majority counter.

use crate::f2::{sample_uniform, BitVec};
use crate::qsim::{chsh_measure, AffineState, QubitDesc, Theta};
use rand::{Rng, RngCore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlParams {
    pub n: usize,
    pub eps: f64,
    pub t: usize,
}

impl GlParams {
    /// Seed count t = ceil(log2(n) / (4 eps^2)), floored at one seed.
    pub fn new(n: usize, eps: f64) -> Self {
        assert!(n >= 1 && eps > 0.0, "need a positive dimension and bias");
        let t = (0.25 * (n as f64).log2() / (eps * eps)).ceil() as usize;
        GlParams {
            n,
            eps,
            t: t.max(1),
        }
    }

    /// Same dimensions with an explicit seed count, for calibration sweeps.
    pub fn with_t(n: usize, eps: f64, t: usize) -> Self {
        assert!(t >= 1, "need at least one seed");
        GlParams { n, eps, t }
    }

    pub fn queries(&self) -> u64 {
        (self.n as u64) << self.t
    }

    /// Worst-case working set: the seed table, the shared labels, the guess
    /// under construction, one query vector, and the loop counters.
    pub fn peak_bits(&self) -> usize {
        let counters = (self.t + 1) + self.t + (usize::BITS - self.n.leading_zeros()) as usize;
        self.t * self.n + self.t + 2 * self.n + counters + 1
    }
}

/// Whether each query carries the coordinate offset e_i. Dropping it
/// collapses every coordinate onto the same counter and the extractor
/// degenerates to a constant guess; the mode exists to demonstrate that.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    Standard,
    SketchNoOffset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlOutcome {
    pub guess: BitVec,
    pub queries: u64,
    pub peak_bits: usize,
}

pub fn gl_extract(
    params: &GlParams,
    mode: QueryMode,
    oracle: impl FnMut(&BitVec) -> bool,
    rng: &mut impl Rng,
) -> GlOutcome {
    let seeds: Vec<BitVec> = (0..params.t).map(|_| sample_uniform(params.n, rng)).collect();
    let labels = sample_uniform(params.t, rng);
    gl_extract_seeded(params, mode, &seeds, &labels, oracle)
}

/// Extraction with pinned seeds and labels. When every label matches the
/// true parity of its seed, all 2^t queries per coordinate vote unanimously
/// and the guess is exact.
pub fn gl_extract_seeded(
    params: &GlParams,
    mode: QueryMode,
    seeds: &[BitVec],
    labels: &BitVec,
    mut oracle: impl FnMut(&BitVec) -> bool,
) -> GlOutcome {
    assert_eq!(seeds.len(), params.t, "seed count mismatch");
    assert_eq!(labels.len(), params.t, "label count mismatch");
    let half = 1u64 << (params.t - 1);
    let mut guess = BitVec::zeros(params.n);
    let mut queries = 0u64;
    for i in 0..params.n {
        let mut ones = 0u64;
        for subset in 0..1u64 << params.t {
            let mut q = BitVec::zeros(params.n);
            if mode == QueryMode::Standard {
                q.set(i, true);
            }
            let mut vote = false;
            for (j, seed) in seeds.iter().enumerate() {
                if subset >> j & 1 == 1 {
                    q.xor_assign(seed);
                    vote ^= labels.get(j);
                }
            }
            queries += 1;
            if oracle(&q) ^ vote {
                ones += 1;
            }
        }
        // Strict majority; a tie votes zero.
        guess.set(i, ones > half);
    }
    GlOutcome {
        guess,
        queries,
        peak_bits: params.peak_bits(),
    }
}

/// One verifier challenge, shaped for whichever protocol the prover speaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommitMsg {
    Single(BitVec),
    Pair(BitVec, BitVec),
}

/// A prover snapshot that can be committed once and then asked for its final
/// answer repeatedly, with fresh measurement randomness each time.
pub trait RewindableProver {
    /// Consume the challenge and return the commitment string d.
    fn commit(&mut self, msg: &CommitMsg, rng: &mut dyn RngCore) -> BitVec;

    /// Answer the challenge basis from the committed snapshot.
    fn answer(&self, theta: Theta, rng: &mut dyn RngCore) -> bool;
}

/// Rewinding distinguisher: commit once, extract the answer under both
/// bases, and output whether the two answers differ. Basis-sensitive
/// commitments make the answers disagree far more often than not.
pub fn predictor_b(
    prover: &mut dyn RewindableProver,
    msg: &CommitMsg,
    rng: &mut dyn RngCore,
) -> bool {
    prover.commit(msg, rng);
    let plus = prover.answer(Theta::Plus, rng);
    let minus = prover.answer(Theta::Minus, rng);
    plus != minus
}

/// Honest single-register prover frozen right after the streaming rounds.
#[derive(Debug, Clone)]
pub struct HonestSnapshot {
    state: AffineState,
    qubit: Option<QubitDesc>,
}

impl HonestSnapshot {
    pub fn new(state: AffineState) -> Self {
        HonestSnapshot { state, qubit: None }
    }

    /// Replays the streaming phase against a fresh register: 2n rows of the
    /// form (v, v.s) measured in sequence.
    pub fn after_rounds(n: usize, s: &BitVec, rng: &mut impl Rng) -> Self {
        assert_eq!(s.len(), n, "secret length mismatch");
        let mut state = AffineState::full(n + 1);
        for _ in 0..2 * n {
            let v = sample_uniform(n, rng);
            let mut a = v.clone();
            a.push(v.dot(s));
            state.measure_parity(&a, rng);
        }
        HonestSnapshot { state, qubit: None }
    }

    pub fn state(&self) -> &AffineState {
        &self.state
    }
}

impl RewindableProver for HonestSnapshot {
    fn commit(&mut self, msg: &CommitMsg, rng: &mut dyn RngCore) -> BitVec {
        let CommitMsg::Single(r) = msg else {
            panic!("single-register snapshot expects a single challenge");
        };
        let (d, qubit) = self.state.clone().hadamard_measure(r, rng);
        self.qubit = Some(qubit);
        d
    }

    fn answer(&self, theta: Theta, rng: &mut dyn RngCore) -> bool {
        let qubit = self.qubit.expect("answer before commit");
        chsh_measure(qubit, theta, rng)
    }
}

/// Classical prover that answers the same bit under both bases.
#[derive(Debug, Clone)]
pub struct ConstantAnswerProver {
    pub b: bool,
}

impl RewindableProver for ConstantAnswerProver {
    fn commit(&mut self, msg: &CommitMsg, rng: &mut dyn RngCore) -> BitVec {
        let len = match msg {
            CommitMsg::Single(r) => r.len(),
            CommitMsg::Pair(r0, _) => r0.len(),
        };
        sample_uniform(len, rng)
    }

    fn answer(&self, _theta: Theta, _rng: &mut dyn RngCore) -> bool {
        self.b
    }
}

/// Classical prover whose answer is a function of the basis alone.
#[derive(Debug, Clone)]
pub struct BasisSensitiveProver;

impl RewindableProver for BasisSensitiveProver {
    fn commit(&mut self, msg: &CommitMsg, rng: &mut dyn RngCore) -> BitVec {
        let len = match msg {
            CommitMsg::Single(r) => r.len(),
            CommitMsg::Pair(r0, _) => r0.len(),
        };
        sample_uniform(len, rng)
    }

    fn answer(&self, theta: Theta, _rng: &mut dyn RngCore) -> bool {
        theta == Theta::Plus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Role};
    use rand_chacha::ChaCha8Rng;

    fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
        substream(seed, crate::wire::protocol_id::RAZ, trial, Role::Harness)
    }

    #[test]
    fn seed_count_follows_the_bias() {
        assert_eq!(GlParams::new(16, 0.5).t, 4);
        assert_eq!(GlParams::new(8, 0.5).t, 3);
        assert_eq!(GlParams::new(2, 1.0).t, 1);
        assert_eq!(GlParams::new(2, 10.0).t, 1);
        assert_eq!(GlParams::new(16, 0.25).t, 16);
    }

    #[test]
    fn perfect_oracle_success_tracks_label_mass() {
        // Random labels match the seed parities with probability 2^-t, and
        // that event alone produces a correct guess (plus the measure-zero
        // all-zeros secret), so the rate sits within a factor two of 2^-t.
        let params = GlParams::new(16, 0.5);
        let trials = 10_000u32;
        let mut wins = 0;
        for trial in 0..trials {
            let mut rng = trial_rng(21, trial as u64);
            let x = sample_uniform(params.n, &mut rng);
            let out = gl_extract(&params, QueryMode::Standard, |q| q.dot(&x), &mut rng);
            assert_eq!(out.queries, params.queries());
            wins += (out.guess == x) as u32;
        }
        let rate = wins as f64 / trials as f64;
        let target = f64::powi(2.0, -(params.t as i32));
        assert!(
            rate >= target / 2.0 && rate <= target * 2.0,
            "extraction rate {rate}, target {target}"
        );
    }

    #[test]
    fn matched_labels_recover_exactly() {
        let params = GlParams::new(12, 0.5);
        for trial in 0..100 {
            let mut rng = trial_rng(22, trial);
            let x = sample_uniform(params.n, &mut rng);
            let seeds: Vec<BitVec> = (0..params.t)
                .map(|_| sample_uniform(params.n, &mut rng))
                .collect();
            let labels = BitVec::from_bools(
                &seeds.iter().map(|s| s.dot(&x)).collect::<Vec<_>>(),
            );
            let out =
                gl_extract_seeded(&params, QueryMode::Standard, &seeds, &labels, |q| q.dot(&x));
            assert_eq!(out.guess, x);
        }
    }

    #[test]
    fn sketch_mode_collapses_to_a_constant_guess() {
        // Without the coordinate offset every counter sees the same stream,
        // so the guess cannot depend on the secret at all.
        let params = GlParams::new(16, 0.5);
        for trial in 0..300 {
            let mut rng = trial_rng(23, trial);
            let x = sample_uniform(params.n, &mut rng);
            let out = gl_extract(&params, QueryMode::SketchNoOffset, |q| q.dot(&x), &mut rng);
            assert!(out.guess.is_zero(), "sketch mode produced a varying guess");
        }
    }

    #[test]
    fn noisy_oracle_still_extracts_at_reduced_rate() {
        let params = GlParams::with_t(16, 0.25, 4);
        let trials = 4000u32;
        let mut wins = 0;
        for trial in 0..trials {
            let mut rng = trial_rng(24, trial as u64);
            let x = sample_uniform(params.n, &mut rng);
            let mut noise = trial_rng(25, trial as u64);
            let out = gl_extract(
                &params,
                QueryMode::Standard,
                |q| q.dot(&x) ^ (noise.random::<f64>() < 0.25),
                &mut rng,
            );
            wins += (out.guess == x) as u32;
        }
        let rate = wins as f64 / trials as f64;
        assert!(rate >= 0.004, "noisy extraction rate {rate} too low");
    }

    #[test]
    fn working_set_stays_quasilinear() {
        for n in [8usize, 16, 32] {
            let params = GlParams::new(n, 0.5);
            let budget = 3 * n * (n as f64).log2().ceil() as usize;
            assert!(
                params.peak_bits() <= budget,
                "n={n}: {} bits exceeds {budget}",
                params.peak_bits()
            );
        }
    }

    #[test]
    fn predictor_flags_basis_sensitivity() {
        let mut rng = trial_rng(26, 0);
        let msg = CommitMsg::Single(sample_uniform(9, &mut rng));
        let mut constant = ConstantAnswerProver { b: true };
        let mut sensitive = BasisSensitiveProver;
        for _ in 0..200 {
            assert!(!predictor_b(&mut constant, &msg, &mut rng));
            assert!(predictor_b(&mut sensitive, &msg, &mut rng));
        }
    }

    #[test]
    fn honest_snapshot_answers_leak_the_kernel_parity() {
        // On a full-rank snapshot the residual register is {x0, x0 + t}.
        // Challenges with r.t = 1 split it and the basis flips the answer
        // with probability 2 cos^2 sin^2 doubled; challenges with r.t = 0
        // leave both bases answering from identical distributions. Either
        // way the predictor output matches r.t three quarters of the time.
        let n = 8;
        let mut rng = trial_rng(27, 0);
        let (snapshot, t) = loop {
            let s = sample_uniform(n, &mut rng);
            let snap = HonestSnapshot::after_rounds(n, &s, &mut rng);
            if snap.state().log2_solutions() == 1 {
                let mut t = s.clone();
                t.push(true);
                break (snap, t);
            }
        };
        let queries = 2000u32;
        let mut agree = 0;
        for _ in 0..queries {
            let r = sample_uniform(n + 1, &mut rng);
            let mut snap = snapshot.clone();
            let f = predictor_b(&mut snap, &CommitMsg::Single(r.clone()), &mut rng);
            agree += (f == r.dot(&t)) as u32;
        }
        let rate = agree as f64 / queries as f64;
        assert!((rate - 0.75).abs() < 0.03, "predictor agreement {rate}");
    }

    #[test]
    fn predictor_composed_with_extraction_recovers_the_secret() {
        // The predictor is a noisy parity oracle with bias 1/4 for the
        // residual direction t, so extraction succeeds at a rate governed
        // by the label mass and per-coordinate majority quality.
        let n = 8;
        let params = GlParams::with_t(n + 1, 0.25, 4);
        let trials = 3000u32;
        let mut wins = 0;
        for trial in 0..trials {
            let mut rng = trial_rng(28, trial as u64);
            let s = sample_uniform(n, &mut rng);
            let snapshot = HonestSnapshot::after_rounds(n, &s, &mut rng);
            if snapshot.state().log2_solutions() != 1 {
                continue;
            }
            let mut t = s.clone();
            t.push(true);
            let out = gl_extract(
                &params,
                QueryMode::Standard,
                |r| {
                    let mut snap = snapshot.clone();
                    predictor_b(&mut snap, &CommitMsg::Single(r.clone()), &mut rng)
                },
                &mut trial_rng(29, trial as u64),
            );
            wins += (out.guess == t) as u32;
        }
        let rate = wins as f64 / trials as f64;
        assert!(rate >= 0.01, "composed extraction rate {rate} too low");
    }
}
