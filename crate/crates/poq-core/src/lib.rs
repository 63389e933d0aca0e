//! Exact desk-scale simulator and adversary workbench for two proofs of
//! quantumness against space-bounded provers.
//!
//! Everything here is exact: honest quantum provers are simulated through
//! closed-form measurement laws over affine subspaces of F2^n (with a dense
//! state-vector oracle for cross-checking), verifiers are streaming state
//! machines with audited memory footprints, and adversaries are classical
//! strategies run under explicit bit budgets.

pub mod adversary;
pub mod clawgen;
pub mod f2;
pub mod ih;
pub mod poq1;
pub mod poq2;
pub mod qsim;
pub mod rng;
pub mod session;
pub mod transcript;
pub mod wire;

pub use f2::{BitMat, BitVec, F2Error};
pub use session::{drive, replay, MemoryAudited, Metered, Party, ProtocolError};
pub use transcript::{Direction, Transcript, TranscriptHeader};
pub use wire::{Frame, FrameType, Hello, WireError};
