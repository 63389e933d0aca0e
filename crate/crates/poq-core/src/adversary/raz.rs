//! Streaming parity learning under a hard memory cap.
//!
//! A secret s is fixed, then (v, v.s) samples stream past one at a time. A
//! strategy may compute freely within a round but must checkpoint into a
//! [`StateBlob`] before the next sample arrives; the experiment aborts with
//! a memory violation (distinct from an ordinary wrong guess) if any
//! checkpoint exceeds the cap.

use super::{AdversaryError, BoundedMemory, StateBlob};
use crate::f2::{sample_uniform, BitMat, BitVec};
use rand::{Rng, RngCore};

pub trait RazStrategy {
    fn name(&self) -> &'static str;

    fn init(&self, n: usize) -> StateBlob;

    /// Absorb one labeled sample into the checkpoint.
    fn absorb(&self, n: usize, state: &StateBlob, v: &BitVec, bit: bool) -> StateBlob;

    /// Final guess for the secret, after the stream ends.
    fn finish(&self, n: usize, state: &StateBlob, rng: &mut dyn RngCore) -> BitVec;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RazReport {
    pub success: bool,
    pub rounds: u64,
    pub peak_bits: usize,
}

pub fn raz_experiment(
    n: usize,
    rounds: u64,
    capacity: Option<usize>,
    strategy: &dyn RazStrategy,
    rng: &mut impl Rng,
) -> Result<RazReport, AdversaryError> {
    let secret = sample_uniform(n, rng);
    let mut mem = BoundedMemory::new(capacity);
    let mut state = strategy.init(n);
    mem.check(0, &state)?;
    for round in 1..=rounds {
        let v = sample_uniform(n, rng);
        let bit = v.dot(&secret);
        state = strategy.absorb(n, &state, &v, bit);
        mem.check(round, &state)?;
    }
    let guess = strategy.finish(n, &state, rng);
    Ok(RazReport {
        success: guess == secret,
        rounds,
        peak_bits: mem.peak(),
    })
}

/// Equation store shared by the concrete strategies: a checkpoint holds some
/// number of n+1-bit rows (v followed by its label), packed back to back.
fn decode_equations(n: usize, state: &StateBlob) -> Vec<(BitVec, bool)> {
    let all = state.to_bits();
    let width = n + 1;
    assert_eq!(all.len() % width, 0, "corrupt equation checkpoint");
    (0..all.len() / width)
        .map(|i| {
            let row = all.slice(i * width, i * width + n);
            let label = all.get(i * width + n);
            (row, label)
        })
        .collect()
}

fn encode_equations(eqs: &[(BitVec, bool)]) -> StateBlob {
    let mut all = BitVec::zeros(0);
    for (row, label) in eqs {
        all = all.concat(row);
        all.push(*label);
    }
    StateBlob::from_bits(&all)
}

/// Solves the stored system and fills any remaining degrees of freedom with
/// coin flips, so the guess is uniform over the consistent set.
fn solve_with_random_completion(
    n: usize,
    eqs: &[(BitVec, bool)],
    rng: &mut dyn RngCore,
) -> BitVec {
    if eqs.is_empty() {
        return sample_uniform(n, rng);
    }
    let rows: Vec<BitVec> = eqs.iter().map(|(row, _)| row.clone()).collect();
    let mat = BitMat::from_rows(&rows);
    let target = BitVec::from_bools(&eqs.iter().map(|(_, b)| *b).collect::<Vec<_>>());
    let Some(particular) = mat.solve(&target) else {
        // Inconsistent stores cannot happen with honestly labeled samples.
        return sample_uniform(n, rng);
    };
    let mut guess = particular;
    for basis in mat.kernel() {
        if rng.random::<bool>() {
            guess.xor_assign(&basis);
        }
    }
    guess
}

/// Keeps every linearly independent equation seen; unbounded memory makes
/// this the natural ceiling for comparison.
pub struct GaussianElim;

impl RazStrategy for GaussianElim {
    fn name(&self) -> &'static str {
        "gaussian_elim"
    }

    fn init(&self, _n: usize) -> StateBlob {
        StateBlob::empty()
    }

    fn absorb(&self, n: usize, state: &StateBlob, v: &BitVec, bit: bool) -> StateBlob {
        let mut eqs = decode_equations(n, state);
        let mut rows: Vec<BitVec> = eqs.iter().map(|(r, _)| r.clone()).collect();
        let before = if rows.is_empty() {
            0
        } else {
            BitMat::from_rows(&rows).rank()
        };
        rows.push(v.clone());
        if BitMat::from_rows(&rows).rank() > before {
            eqs.push((v.clone(), bit));
        }
        encode_equations(&eqs)
    }

    fn finish(&self, n: usize, state: &StateBlob, rng: &mut dyn RngCore) -> BitVec {
        solve_with_random_completion(n, &decode_equations(n, state), rng)
    }
}

/// Stores the first j = m / (n+1) equations verbatim, then ignores the rest
/// of the stream.
pub struct StoreFirstJ {
    pub m: usize,
}

impl StoreFirstJ {
    pub fn slots(&self, n: usize) -> usize {
        self.m / (n + 1)
    }
}

impl RazStrategy for StoreFirstJ {
    fn name(&self) -> &'static str {
        "store_first_j"
    }

    fn init(&self, _n: usize) -> StateBlob {
        StateBlob::empty()
    }

    fn absorb(&self, n: usize, state: &StateBlob, v: &BitVec, bit: bool) -> StateBlob {
        let mut eqs = decode_equations(n, state);
        if eqs.len() < self.slots(n) {
            eqs.push((v.clone(), bit));
        }
        encode_equations(&eqs)
    }

    fn finish(&self, n: usize, state: &StateBlob, rng: &mut dyn RngCore) -> BitVec {
        solve_with_random_completion(n, &decode_equations(n, state), rng)
    }
}

/// Remembers nothing and guesses uniformly.
pub struct ZeroMemory;

impl RazStrategy for ZeroMemory {
    fn name(&self) -> &'static str {
        "zero_memory"
    }

    fn init(&self, _n: usize) -> StateBlob {
        StateBlob::empty()
    }

    fn absorb(&self, _n: usize, _state: &StateBlob, _v: &BitVec, _bit: bool) -> StateBlob {
        StateBlob::empty()
    }

    fn finish(&self, n: usize, _state: &StateBlob, rng: &mut dyn RngCore) -> BitVec {
        sample_uniform(n, rng)
    }
}

/// Self-test strategy that deliberately checkpoints one bit over whatever
/// cap it is given; every run must abort with a violation.
pub struct OverBudget {
    pub claim_bits: usize,
}

impl RazStrategy for OverBudget {
    fn name(&self) -> &'static str {
        "over_budget"
    }

    fn init(&self, _n: usize) -> StateBlob {
        StateBlob::empty()
    }

    fn absorb(&self, _n: usize, _state: &StateBlob, _v: &BitVec, _bit: bool) -> StateBlob {
        StateBlob::from_bits(&BitVec::zeros(self.claim_bits))
    }

    fn finish(&self, n: usize, _state: &StateBlob, rng: &mut dyn RngCore) -> BitVec {
        sample_uniform(n, rng)
    }
}
