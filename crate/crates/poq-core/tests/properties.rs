//! Randomized invariants for the algebra, wire, hashing, and state layers.

use poq_core::clawgen::pick_dictator;
use poq_core::f2::{sample_matrix, sample_uniform, BitMat, BitVec};
use poq_core::ih::{
    decode_index, encode_index, optimal_adversary_value, run_session, IhParams,
};
use poq_core::qsim::AffineState;
use poq_core::rng::{substream, Role};
use poq_core::wire::{Frame, FrameType, Hello, WireError};
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits(len: impl Into<proptest::collection::SizeRange>) -> impl Strategy<Value = BitVec> {
    prop::collection::vec(any::<bool>(), len).prop_map(|bs| BitVec::from_bools(&bs))
}

fn same_len_pair(max: usize) -> impl Strategy<Value = (BitVec, BitVec)> {
    (1..=max).prop_flat_map(|n| (bits(n..=n), bits(n..=n)))
}

proptest! {
    #[test]
    fn xor_is_an_involution((a, b) in same_len_pair(200)) {
        let mut c = a.clone();
        c.xor_assign(&b);
        c.xor_assign(&b);
        prop_assert_eq!(c, a);
    }

    #[test]
    fn dot_is_bilinear(
        (a, b, c) in (1usize..=200).prop_flat_map(|n| (bits(n..=n), bits(n..=n), bits(n..=n)))
    ) {
        prop_assert_eq!(a.dot(&b.xored(&c)), a.dot(&b) ^ a.dot(&c));
    }

    #[test]
    fn parity_folds_the_bits(a in bits(0..=200)) {
        let folded = a.iter().fold(false, |acc, b| acc ^ b);
        prop_assert_eq!(a.parity(), folded);
    }

    #[test]
    fn wire_roundtrip_preserves_value_and_length(a in bits(0..=300)) {
        let buf = a.to_wire();
        let (back, rest) = BitVec::read_wire(&buf).unwrap();
        prop_assert_eq!(back, a);
        prop_assert!(rest.is_empty());
    }

    #[test]
    fn slices_reassemble(a in bits(1..=200), cut in 0usize..=200) {
        prop_assume!(cut <= a.len());
        let left = a.slice(0, cut);
        let right = a.slice(cut, a.len());
        prop_assert_eq!(left.concat(&right), a);
    }

    #[test]
    fn kernel_vectors_annihilate_rows(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = sample_matrix(rows, cols, &mut rng);
        prop_assert!(m.rank() <= rows.min(cols));
        for v in m.kernel() {
            let image = m.mul_vec(&v);
            prop_assert!(image.is_zero());
        }
    }

    #[test]
    fn solve_finds_consistent_preimages(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = sample_matrix(rows, cols, &mut rng);
        let x = sample_uniform(cols, &mut rng);
        let y = m.mul_vec(&x);
        let found = m.solve(&y).expect("constructed to be consistent");
        prop_assert_eq!(m.mul_vec(&found), y);
    }

    #[test]
    fn frames_roundtrip(payload in prop::collection::vec(any::<u8>(), 0..200)) {
        let frame = Frame::new(FrameType::StreamChunk, payload);
        let buf = frame.encode();
        let (back, used) = Frame::decode(&buf).unwrap();
        prop_assert_eq!(&back, &frame);
        prop_assert_eq!(used, buf.len());
        if !buf.is_empty() {
            let cut = &buf[..buf.len() - 1];
            let truncated = matches!(Frame::decode(cut), Err(WireError::Truncated { .. }));
            prop_assert!(truncated);
        }
    }

    #[test]
    fn hello_roundtrips(protocol in any::<u8>(), hash in any::<u64>(), trials in any::<u32>()) {
        let hello = Hello { protocol, params_hash: hash, trials };
        let frame = Frame::hello(&hello);
        let buf = frame.encode();
        let (back, _) = Frame::decode(&buf).unwrap();
        prop_assert_eq!(back.as_hello().unwrap(), hello);
    }

    #[test]
    fn index_encoding_roundtrips(log_k in 1u32..7, seed in any::<u64>()) {
        let k = 1usize << log_k;
        let params = IhParams::new(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = rng.random_range(1..=k);
        let e = encode_index(params, v);
        prop_assert_eq!(e.len(), params.bits());
        prop_assert_eq!(decode_index(&e), v);
    }

    #[test]
    fn hashing_sessions_pin_two_preimages(log_k in 1u32..7, seed in any::<u64>()) {
        let k = 1usize << log_k;
        let params = IhParams::new(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = rng.random_range(1..=k);
        let transcript = run_session(params, v, &mut rng);
        prop_assert!(transcript.is_complete());
        let rows = BitMat::from_rows(transcript.rows());
        prop_assert_eq!(rows.rank(), params.rounds());
        let (p0, p1) = transcript.preimages();
        prop_assert!(p0 < p1);
        prop_assert!(p0 == v || p1 == v);
    }

    #[test]
    fn adversary_value_grows_with_the_target_set(seed in any::<u64>()) {
        let k = 8;
        let params = IhParams::new(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set: Vec<usize> = (1..=k).filter(|_| rng.random::<bool>()).collect();
        if set.is_empty() {
            set.push(rng.random_range(1..=k));
        }
        let value = optimal_adversary_value(params, &set);
        prop_assert!((0.0..=1.0).contains(&value));
        let mut bigger = set.clone();
        for v in 1..=k {
            if !bigger.contains(&v) {
                bigger.push(v);
                break;
            }
        }
        bigger.sort_unstable();
        prop_assert!(optimal_adversary_value(params, &bigger) >= value - 1e-12);
    }

    #[test]
    fn fresh_constraints_halve_the_state(dim in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = AffineState::full(dim);
        let mut spent = 0;
        for _ in 0..dim {
            let a = sample_uniform(dim, &mut rng);
            let before = state.log2_solutions();
            let bit = state.measure_parity(&a, &mut rng);
            prop_assert!(state.conditioned(&a, !bit).is_none() || before > state.log2_solutions());
            if state.log2_solutions() < before {
                spent += 1;
                prop_assert_eq!(before - state.log2_solutions(), 1);
            }
        }
        prop_assert_eq!(state.log2_solutions(), dim - spent);
        if state.log2_solutions() <= 6 {
            prop_assert_eq!(state.enumerate().len(), 1usize << state.log2_solutions());
        }
    }

    #[test]
    fn dictators_separate_their_indices(log_k in 1u32..7, seed in any::<u64>()) {
        let k = 1usize << log_k;
        let params = IhParams::new(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v0 = rng.random_range(1..=k);
        let mut v1 = rng.random_range(1..=k);
        if v0 == v1 {
            v1 = v0 % k + 1;
        }
        let g = pick_dictator(params, v0, v1);
        prop_assert!(!g.eval(&encode_index(params, v0)));
        prop_assert!(g.eval(&encode_index(params, v1)));
    }

    #[test]
    fn substreams_separate_roles_and_trials(seed in any::<u64>(), trial in 0u64..1000) {
        let mut draws = Vec::new();
        for role in [Role::Verifier, Role::Prover, Role::Harness] {
            for t in [trial, trial + 1] {
                draws.push(substream(seed, 1, t, role).next_u64());
            }
        }
        draws.push(substream(seed, 2, trial, Role::Verifier).next_u64());
        let mut unique = draws.clone();
        unique.sort_unstable();
        unique.dedup();
        prop_assert_eq!(unique.len(), draws.len());
    }
}

#[test]
fn frame_codec_survives_heavy_fuzzing() {
    use FrameType::*;
    let types = [
        Hello, ARow, YBit, RVec, DVec, Theta, BBit, StreamChunk, IhRow, IhResp, StitchFuns,
        StitchBits, R0R1Vec, Verdict,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100_000 {
        let ty = types[rng.random_range(0..types.len())];
        let len = rng.random_range(0..64);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let frame = Frame::new(ty, payload);
        let buf = frame.encode();
        let (back, used) = Frame::decode(&buf).unwrap();
        assert_eq!(back, frame);
        assert_eq!(used, buf.len());
    }
}
