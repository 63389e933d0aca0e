//! Deterministic randomness for reproducible runs.
//!
//! A run is seeded by one u64. Each (protocol, trial, role) triple gets its
//! own counter-based ChaCha stream derived from that seed, so trials can be
//! replayed individually, executed in parallel, or split across processes
//! without changing a single byte of any transcript.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which party's randomness a substream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Verifier = 0,
    Prover = 1,
    /// Harness-level sampling that belongs to neither party.
    Harness = 2,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream for one party of one trial.
pub fn substream(seed: u64, protocol: u8, trial: u64, role: Role) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    let stream = ((protocol as u64) << 56) | ((role as u64) << 48) | (trial & 0xffff_ffff_ffff);
    rng.set_stream(stream);
    rng
}
