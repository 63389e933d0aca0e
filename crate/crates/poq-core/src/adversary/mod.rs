//! Memory-bounded adversaries: the enforcement harness, streaming-learning
//! baselines, the low-memory list-decoding extractor, and concrete attacks
//! on both protocols.
//!
//! The model charges an adversary only for what it carries *between* rounds:
//! after each round its state must serialize into at most m bits, while
//! scratch space within a round is free. [`BoundedMemory`] enforces exactly
//! that, rejecting any checkpoint over budget.

pub mod attacks;
pub mod gl;
pub mod raz;

use crate::f2::BitVec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("memory bound exceeded at round {round}: {bits} bits serialized, {capacity} allowed")]
    MemoryViolation {
        round: u64,
        bits: usize,
        capacity: usize,
    },
}

/// A serialized inter-round checkpoint. `bits` is the semantic size the
/// strategy claims; the byte buffer must be exactly that wide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateBlob {
    bytes: Vec<u8>,
    bits: usize,
}

impl StateBlob {
    pub fn empty() -> Self {
        StateBlob {
            bytes: Vec::new(),
            bits: 0,
        }
    }

    pub fn new(bytes: Vec<u8>, bits: usize) -> Self {
        assert_eq!(
            bytes.len(),
            bits.div_ceil(8),
            "blob bytes must match the declared bit count"
        );
        StateBlob { bytes, bits }
    }

    pub fn from_bits(v: &BitVec) -> Self {
        StateBlob {
            bytes: v.to_bytes(),
            bits: v.len(),
        }
    }

    pub fn to_bits(&self) -> BitVec {
        let mut v = BitVec::zeros(self.bits);
        for i in 0..self.bits {
            if self.bytes[i / 8] >> (i % 8) & 1 == 1 {
                v.set(i, true);
            }
        }
        v
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// Checkpoint gate: every inter-round state must fit the capacity.
/// `None` is the unbounded sentinel; the peak is tracked either way.
#[derive(Debug, Clone)]
pub struct BoundedMemory {
    capacity: Option<usize>,
    peak: usize,
}

impl BoundedMemory {
    pub fn new(capacity: Option<usize>) -> Self {
        BoundedMemory { capacity, peak: 0 }
    }

    pub fn check(&mut self, round: u64, blob: &StateBlob) -> Result<(), AdversaryError> {
        self.peak = self.peak.max(blob.bits());
        match self.capacity {
            Some(capacity) if blob.bits() > capacity => Err(AdversaryError::MemoryViolation {
                round,
                bits: blob.bits(),
                capacity,
            }),
            _ => Ok(()),
        }
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }
}
