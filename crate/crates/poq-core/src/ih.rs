//! Interactive hashing over a power-of-two index domain.
//!
//! Alice sends log2(k) - 1 random rows, each linearly independent of its
//! predecessors; Bob answers every row applied to the encoding of his index.
//! The finished transcript names a linear 2-to-1 function, and Bob's index
//! is one of its exactly two preimages. Alice keeps no secrets, so her side
//! is fully determined by the transcript; this is the property the claw
//! streaming protocol leans on.
//!
//! Indices are 1-based; index `v` is encoded as the log2(k)-bit string of
//! `v - 1`, least significant bit first.

use crate::f2::{BitMat, BitVec};
use rand::Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IhError {
    #[error("domain size {0} is not a power of two of at least 2")]
    BadDomain(usize),
    #[error("session already has all {0} rows")]
    SessionComplete(usize),
}

/// Domain parameters: `k` indices, `bits = log2 k`, `bits - 1` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IhParams {
    k: usize,
}

impl IhParams {
    pub fn new(k: usize) -> Result<Self, IhError> {
        if k < 2 || !k.is_power_of_two() {
            return Err(IhError::BadDomain(k));
        }
        Ok(IhParams { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bits(&self) -> usize {
        self.k.trailing_zeros() as usize
    }

    pub fn rounds(&self) -> usize {
        self.bits() - 1
    }
}

/// Encoding of a 1-based index as a fixed-width bit string.
pub fn encode_index(params: IhParams, v: usize) -> BitVec {
    assert!((1..=params.k()).contains(&v), "index {v} outside domain");
    BitVec::from_u64((v - 1) as u64, params.bits())
}

pub fn decode_index(bits: &BitVec) -> usize {
    bits.as_u64() as usize + 1
}

/// Alice's side: sends uniformly random rows, rejection-sampled to stay
/// linearly independent of everything already sent.
#[derive(Debug, Clone)]
pub struct AliceState {
    params: IhParams,
    sent: Vec<BitVec>,
}

impl AliceState {
    pub fn new(params: IhParams) -> Self {
        AliceState {
            params,
            sent: Vec::new(),
        }
    }

    pub fn rounds_done(&self) -> usize {
        self.sent.len()
    }

    pub fn is_complete(&self) -> bool {
        self.sent.len() == self.params.rounds()
    }

    pub fn next_row<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<BitVec, IhError> {
        if self.is_complete() {
            return Err(IhError::SessionComplete(self.params.rounds()));
        }
        let bits = self.params.bits();
        let row = loop {
            let candidate = crate::f2::sample_uniform(bits, rng);
            let mut stacked = self.sent.clone();
            stacked.push(candidate.clone());
            if BitMat::from_rows(&stacked).rank() == self.sent.len() + 1 {
                break candidate;
            }
        };
        self.sent.push(row.clone());
        Ok(row)
    }
}

/// Honest classical Bob: one fixed index.
pub fn bob_respond(params: IhParams, v: usize, row: &BitVec) -> bool {
    row.dot(&encode_index(params, v))
}

/// Coherent Bob holding a uniform superposition over `support`. Responding
/// to a row measures that row's parity of the index register: the outcome
/// probability is the fraction of support on each side, and the support
/// collapses to the matching part.
pub fn coherent_respond<R: Rng + ?Sized>(
    params: IhParams,
    support: &mut Vec<usize>,
    row: &BitVec,
    rng: &mut R,
) -> bool {
    assert!(!support.is_empty(), "empty support has no state to measure");
    let ones = support
        .iter()
        .filter(|&&v| bob_respond(params, v, row))
        .count();
    let outcome = if ones == 0 {
        false
    } else if ones == support.len() {
        true
    } else {
        rng.random::<f64>() < ones as f64 / support.len() as f64
    };
    support.retain(|&v| bob_respond(params, v, row) == outcome);
    outcome
}

/// Completed rows and responses; defines the 2-to-1 hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IhTranscript {
    params: IhParams,
    rows: Vec<BitVec>,
    responses: Vec<bool>,
}

impl IhTranscript {
    pub fn new(params: IhParams) -> Self {
        IhTranscript {
            params,
            rows: Vec::new(),
            responses: Vec::new(),
        }
    }

    pub fn push(&mut self, row: BitVec, response: bool) {
        assert!(!self.is_complete(), "transcript already complete");
        assert_eq!(row.len(), self.params.bits(), "row width mismatch");
        self.rows.push(row);
        self.responses.push(response);
    }

    pub fn params(&self) -> IhParams {
        self.params
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    pub fn responses(&self) -> &[bool] {
        &self.responses
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.params.rounds()
    }

    /// Applies the transcript's hash to an index: the response vector the
    /// honest Bob with input `v` would have produced.
    pub fn hash(&self, v: usize) -> Vec<bool> {
        self.rows
            .iter()
            .map(|row| bob_respond(self.params, v, row))
            .collect()
    }

    /// The exactly two indices consistent with the transcript, ascending.
    pub fn preimages(&self) -> (usize, usize) {
        assert!(self.is_complete(), "preimages need a complete transcript");
        let system = BitMat::from_rows(&self.rows);
        let rhs = BitVec::from_bools(&self.responses);
        let solutions = if self.rows.is_empty() {
            // k = 2: no rows were needed, the whole domain is the preimage.
            vec![BitVec::from_u64(0, 1), BitVec::from_u64(1, 1)]
        } else {
            system.solve_all(&rhs)
        };
        assert_eq!(solutions.len(), 2, "independent rows must leave a pair");
        let mut pair: Vec<usize> = solutions.iter().map(decode_index).collect();
        pair.sort_unstable();
        (pair[0], pair[1])
    }
}

/// Runs one honest classical session; used by tests and diagnostics.
pub fn run_session<R: Rng + ?Sized>(params: IhParams, v: usize, rng: &mut R) -> IhTranscript {
    let mut alice = AliceState::new(params);
    let mut t = IhTranscript::new(params);
    while !alice.is_complete() {
        let row = alice.next_row(rng).expect("session not complete");
        let resp = bob_respond(params, v, &row);
        t.push(row, resp);
    }
    t
}

/// Exact value of the best adaptive Bob trying to land both preimages
/// inside `b_set`, by game-tree recursion: Alice averages over every row
/// that is independent of what she has sent (equivalently, every row that
/// splits the candidate set in half), Bob picks the better response.
///
/// Candidate sets reachable from the full domain are affine subspaces, so
/// for `k <= 32` they are memoizable as bitmasks over the domain.
pub fn optimal_adversary_value(params: IhParams, b_set: &[usize]) -> f64 {
    let k = params.k();
    assert!(k <= 32, "game-tree solver caps the domain at 32");
    let mut bmask = 0u32;
    for &v in b_set {
        assert!((1..=k).contains(&v), "target index {v} outside domain");
        bmask |= 1 << (v - 1);
    }
    let full: u32 = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
    let mut memo = HashMap::new();
    candidate_value(full, params, bmask, &mut memo)
}

fn candidate_value(
    set: u32,
    params: IhParams,
    bmask: u32,
    memo: &mut HashMap<u32, f64>,
) -> f64 {
    if set.count_ones() == 2 {
        return if set & !bmask == 0 { 1.0 } else { 0.0 };
    }
    if let Some(&v) = memo.get(&set) {
        return v;
    }
    let bits = params.bits();
    let mut total = 0.0;
    let mut rows = 0u32;
    for h in 1u32..(1 << bits) {
        let mut s0 = 0u32;
        let mut s1 = 0u32;
        let mut members = set;
        while members != 0 {
            let idx = members.trailing_zeros();
            members &= members - 1;
            if (h & idx).count_ones() % 2 == 1 {
                s1 |= 1 << idx;
            } else {
                s0 |= 1 << idx;
            }
        }
        if s0 == 0 || s1 == 0 {
            continue; // constant on the set: dependent on rows already sent
        }
        debug_assert_eq!(s0.count_ones(), s1.count_ones());
        rows += 1;
        let v0 = candidate_value(s0, params, bmask, memo);
        let v1 = candidate_value(s1, params, bmask, memo);
        total += v0.max(v1);
    }
    let value = total / rows as f64;
    memo.insert(set, value);
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn params_reject_bad_domains() {
        for k in [0usize, 1, 3, 6, 12, 100] {
            assert_eq!(IhParams::new(k), Err(IhError::BadDomain(k)));
        }
        assert_eq!(IhParams::new(64).unwrap().rounds(), 5);
    }

    #[test]
    fn index_encoding_is_lsb_first_of_v_minus_one() {
        let p = IhParams::new(8).unwrap();
        let e = encode_index(p, 5); // 4 = 100
        assert_eq!((e.get(0), e.get(1), e.get(2)), (false, false, true));
        for v in 1..=8 {
            assert_eq!(decode_index(&encode_index(p, v)), v);
        }
    }

    #[test]
    fn k_equals_two_needs_no_rounds() {
        let p = IhParams::new(2).unwrap();
        let mut alice = AliceState::new(p);
        assert!(alice.is_complete());
        assert_eq!(alice.next_row(&mut rng(1)), Err(IhError::SessionComplete(0)));
        let t = IhTranscript::new(p);
        assert!(t.is_complete());
        assert_eq!(t.preimages(), (1, 2));
    }

    #[test]
    fn completed_rows_are_always_independent() {
        let mut r = rng(3);
        let p = IhParams::new(16).unwrap();
        for _ in 0..10_000 {
            let v = 1 + (r.random::<u32>() as usize) % 16;
            let t = run_session(p, v, &mut r);
            assert_eq!(BitMat::from_rows(t.rows()).rank(), 3);
        }
    }

    #[test]
    fn every_transcript_is_exactly_two_to_one() {
        // Dual route: the solver's pair against brute-force enumeration of
        // the whole domain.
        let mut r = rng(5);
        for k in [2usize, 4, 8, 16, 32, 64] {
            let p = IhParams::new(k).unwrap();
            for _ in 0..100 {
                let v = 1 + (r.random::<u32>() as usize) % k;
                let t = run_session(p, v, &mut r);
                let consistent: Vec<usize> = (1..=k)
                    .filter(|&w| t.hash(w) == t.responses())
                    .collect();
                assert_eq!(consistent.len(), 2, "hash is not 2-to-1 at k={k}");
                let (p0, p1) = t.preimages();
                assert_eq!(vec![p0, p1], consistent);
                assert!(v == p0 || v == p1, "honest input lost from preimages");
            }
        }
    }

    #[test]
    fn coherent_support_halves_each_round() {
        let mut r = rng(7);
        let p = IhParams::new(8).unwrap();
        for _ in 0..200 {
            let mut alice = AliceState::new(p);
            let mut support: Vec<usize> = (1..=8).collect();
            let mut sizes = vec![support.len()];
            while !alice.is_complete() {
                let row = alice.next_row(&mut r).unwrap();
                coherent_respond(p, &mut support, &row, &mut r);
                sizes.push(support.len());
            }
            assert_eq!(sizes, vec![8, 4, 2]);
        }
    }

    #[test]
    fn coherent_matches_classical_on_singleton_support() {
        let mut r = rng(9);
        let p = IhParams::new(16).unwrap();
        for _ in 0..200 {
            let v = 1 + (r.random::<u32>() as usize) % 16;
            let row = crate::f2::sample_uniform(4, &mut r);
            let mut support = vec![v];
            let resp = coherent_respond(p, &mut support, &row, &mut r);
            assert_eq!(resp, bob_respond(p, v, &row));
            assert_eq!(support, vec![v]);
        }
    }

    #[test]
    fn coherent_final_support_is_the_preimage_pair() {
        let mut r = rng(11);
        let p = IhParams::new(32).unwrap();
        for _ in 0..500 {
            let mut alice = AliceState::new(p);
            let mut support: Vec<usize> = (1..=32).collect();
            let mut t = IhTranscript::new(p);
            while !alice.is_complete() {
                let row = alice.next_row(&mut r).unwrap();
                let resp = coherent_respond(p, &mut support, &row, &mut r);
                t.push(row, resp);
            }
            let (p0, p1) = t.preimages();
            assert_eq!(support, vec![p0, p1]);
        }
    }

    #[test]
    fn adversary_value_extremes() {
        for k in [2usize, 4, 16] {
            let p = IhParams::new(k).unwrap();
            let all: Vec<usize> = (1..=k).collect();
            assert_eq!(optimal_adversary_value(p, &all), 1.0);
            assert_eq!(optimal_adversary_value(p, &[1]), 0.0);
        }
    }

    #[test]
    fn adversary_value_monotone_in_target_set() {
        let p = IhParams::new(16).unwrap();
        let v2 = optimal_adversary_value(p, &[1, 2]);
        let v4 = optimal_adversary_value(p, &(1..=4).collect::<Vec<_>>());
        let v8 = optimal_adversary_value(p, &(1..=8).collect::<Vec<_>>());
        assert!(v2 <= v4 && v4 <= v8, "{v2} {v4} {v8}");
        assert!(v2 > 0.0 && v8 < 1.0, "{v2} {v8}");
    }

    #[test]
    fn adversary_value_at_k2_is_the_base_case() {
        let p = IhParams::new(2).unwrap();
        assert_eq!(optimal_adversary_value(p, &[1, 2]), 1.0);
        assert_eq!(optimal_adversary_value(p, &[2]), 0.0);
    }
}
