//! Dense state-vector oracle for small instances.
//!
//! Everything here works on raw complex amplitudes: gates are applied entry
//! by entry and measurement distributions are enumerated branch by branch,
//! with no shortcuts shared with the closed-form laws in the parent module.
//! Tests compare the two routes; the oracle is the ground truth.

use super::Theta;
use crate::f2::BitVec;
use num_complex::Complex64;
use std::collections::BTreeMap;

const MAX_QUBITS: usize = 22;
const PRUNE: f64 = 1e-12;

/// Dense register of up to [`MAX_QUBITS`] qubits; basis index bit `q` is
/// qubit `q`.
#[derive(Clone)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero_state(qubits: usize) -> Self {
        assert!(qubits <= MAX_QUBITS, "{qubits} qubits exceeds the dense cap");
        let mut amps = vec![Complex64::ZERO; 1 << qubits];
        amps[0] = Complex64::ONE;
        StateVector { qubits, amps }
    }

    /// Arbitrary initial amplitudes (normalized by the caller).
    pub fn from_amplitudes(qubits: usize, amps: Vec<Complex64>) -> Self {
        assert!(qubits <= MAX_QUBITS, "{qubits} qubits exceeds the dense cap");
        assert_eq!(amps.len(), 1 << qubits, "amplitude count mismatch");
        StateVector { qubits, amps }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amp(&self, basis: usize) -> Complex64 {
        self.amps[basis]
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn h(&mut self, q: usize) {
        assert!(q < self.qubits);
        let bit = 1usize << q;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for idx in 0..self.amps.len() {
            if idx & bit == 0 {
                let a = self.amps[idx];
                let b = self.amps[idx | bit];
                self.amps[idx] = (a + b) * s;
                self.amps[idx | bit] = (a - b) * s;
            }
        }
    }

    pub fn x(&mut self, q: usize) {
        assert!(q < self.qubits);
        let bit = 1usize << q;
        for idx in 0..self.amps.len() {
            if idx & bit == 0 {
                self.amps.swap(idx, idx | bit);
            }
        }
    }

    pub fn cnot(&mut self, control: usize, target: usize) {
        assert!(control < self.qubits && target < self.qubits && control != target);
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for idx in 0..self.amps.len() {
            if idx & cbit != 0 && idx & tbit == 0 {
                self.amps.swap(idx, idx | tbit);
            }
        }
    }

    pub fn prob_one(&self, q: usize) -> f64 {
        assert!(q < self.qubits);
        let bit = 1usize << q;
        self.amps
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Projects onto `qubit q = outcome` and renormalizes.
    pub fn collapse(&mut self, q: usize, outcome: bool) {
        let bit = 1usize << q;
        let keep = if outcome { bit } else { 0 };
        let mut weight = 0.0;
        for (idx, a) in self.amps.iter_mut().enumerate() {
            if idx & bit == keep {
                weight += a.norm_sqr();
            } else {
                *a = Complex64::ZERO;
            }
        }
        assert!(weight > PRUNE, "collapsing onto a zero-probability branch");
        let scale = weight.sqrt().recip();
        for a in self.amps.iter_mut() {
            *a *= scale;
        }
    }
}

/// P(outcome 0) for a rotated-basis measurement of the unnormalized pair
/// `(a0, a1)`.
fn rotated_prob_zero_pair(a0: Complex64, a1: Complex64, theta: Theta) -> f64 {
    let t = theta.angle();
    let overlap = a0 * t.cos() + a1 * t.sin();
    let total = a0.norm_sqr() + a1.norm_sqr();
    overlap.norm_sqr() / total
}

/// Joint distribution over `(y, d, b)` for a full protocol run, computed by
/// simulating the circuit: Hadamards on the register, one reused ancilla
/// collecting each round's parity and the commitment bit, a Hadamard
/// measurement of the register, and a rotated-basis measurement of the
/// ancilla. Keys pack `y` bit `i` as round `i`'s outcome and `d` bit `j` as
/// register qubit `j`.
pub fn run_joint_dense(
    dim: usize,
    rows: &[BitVec],
    r: &BitVec,
    theta: Theta,
) -> BTreeMap<(u64, u64, bool), f64> {
    assert!(dim + 1 <= MAX_QUBITS && rows.len() < 64);
    assert_eq!(r.len(), dim);
    let mut sv = StateVector::zero_state(dim + 1);
    for q in 0..dim {
        sv.h(q);
    }
    let mut out = BTreeMap::new();
    descend(sv, rows, r, theta, 0, 0, 1.0, &mut out);
    out
}

fn descend(
    sv: StateVector,
    rows: &[BitVec],
    r: &BitVec,
    theta: Theta,
    round: usize,
    y: u64,
    p: f64,
    out: &mut BTreeMap<(u64, u64, bool), f64>,
) {
    let dim = sv.qubits() - 1;
    let anc = dim;
    if round == rows.len() {
        let mut sv = sv;
        for j in 0..dim {
            if r.get(j) {
                sv.cnot(j, anc);
            }
        }
        for q in 0..dim {
            sv.h(q);
        }
        for d in 0..(1usize << dim) {
            let a0 = sv.amp(d);
            let a1 = sv.amp(d | (1 << anc));
            let pd = a0.norm_sqr() + a1.norm_sqr();
            if pd < PRUNE {
                continue;
            }
            let p0 = rotated_prob_zero_pair(a0, a1, theta);
            add(out, (y, d as u64, false), p * pd * p0);
            add(out, (y, d as u64, true), p * pd * (1.0 - p0));
        }
        return;
    }
    let mut sv = sv;
    assert_eq!(rows[round].len(), dim);
    for j in 0..dim {
        if rows[round].get(j) {
            sv.cnot(j, anc);
        }
    }
    let p1 = sv.prob_one(anc);
    for outcome in [false, true] {
        let pb = if outcome { p1 } else { 1.0 - p1 };
        if pb < PRUNE {
            continue;
        }
        let mut branch = sv.clone();
        branch.collapse(anc, outcome);
        if outcome {
            branch.x(anc); // reset the ancilla for reuse
        }
        let ybits = y | ((outcome as u64) << round);
        descend(branch, rows, r, theta, round + 1, ybits, p * pb, out);
    }
}

/// Joint distribution over `(d, b)` for the two-branch commitment, dense
/// route: prepare `(|x0>|b0> + |x1>|b1>)/sqrt(2)` explicitly and Hadamard-
/// measure the register.
pub fn commit_joint_dense(
    x0: &BitVec,
    x1: &BitVec,
    b0: bool,
    b1: bool,
    theta: Theta,
) -> BTreeMap<(u64, bool), f64> {
    let dim = x0.len();
    assert_eq!(x1.len(), dim);
    assert!(dim + 1 <= MAX_QUBITS);
    let mut amps = vec![Complex64::ZERO; 1 << (dim + 1)];
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[(x0.as_u64() as usize) | ((b0 as usize) << dim)] += s;
    amps[(x1.as_u64() as usize) | ((b1 as usize) << dim)] += s;
    let mut sv = StateVector::from_amplitudes(dim + 1, amps);
    for q in 0..dim {
        sv.h(q);
    }
    let mut out = BTreeMap::new();
    for d in 0..(1usize << dim) {
        let a0 = sv.amp(d);
        let a1 = sv.amp(d | (1 << dim));
        let pd = a0.norm_sqr() + a1.norm_sqr();
        if pd < PRUNE {
            continue;
        }
        let p0 = rotated_prob_zero_pair(a0, a1, theta);
        add(&mut out, (d as u64, false), pd * p0);
        add(&mut out, (d as u64, true), pd * (1.0 - p0));
    }
    out
}

/// Total variation distance between two discrete distributions.
pub fn total_variation<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<K> = a.keys().chain(b.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let sum: f64 = keys
        .iter()
        .map(|k| {
            let pa = a.get(k).copied().unwrap_or(0.0);
            let pb = b.get(k).copied().unwrap_or(0.0);
            (pa - pb).abs()
        })
        .sum();
    sum / 2.0
}

fn add<K: Ord>(map: &mut BTreeMap<K, f64>, key: K, p: f64) {
    *map.entry(key).or_insert(0.0) += p;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::f2::{sample_uniform, BitVec};
    use crate::qsim::{chsh_prob_zero, commit_law, BranchBit, ClawPair, QubitDesc};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn hadamard_is_an_involution() {
        let mut sv = StateVector::zero_state(3);
        sv.h(0);
        sv.h(2);
        sv.h(0);
        sv.h(2);
        assert!((sv.amp(0).re - 1.0).abs() < 1e-12);
        assert!((sv.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cnot_truth_table() {
        for (c, t) in [(false, false), (false, true), (true, false), (true, true)] {
            let mut sv = StateVector::zero_state(2);
            if c {
                sv.x(0);
            }
            if t {
                sv.x(1);
            }
            sv.cnot(0, 1);
            let expect = (c as usize) | (((t ^ c) as usize) << 1);
            assert!((sv.amp(expect).re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn circuits_preserve_norm_to_tolerance() {
        let mut r = rng(5);
        let mut sv = StateVector::zero_state(8);
        for q in 0..8 {
            sv.h(q);
        }
        for _ in 0..200 {
            let a = r.random_range(0..8usize);
            let b = r.random_range(0..8usize);
            if a != b {
                sv.cnot(a, b);
            }
            sv.h(a);
        }
        assert!((sv.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rotated_measurement_matches_closed_form_on_all_descriptors() {
        // Prepare each QubitDesc as an explicit amplitude pair and compare
        // the dense measurement to the closed form.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let cases = [
            (QubitDesc::Z(false), (Complex64::ONE, Complex64::ZERO)),
            (QubitDesc::Z(true), (Complex64::ZERO, Complex64::ONE)),
            (
                QubitDesc::X(false),
                (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            ),
            (
                QubitDesc::X(true),
                (Complex64::new(s, 0.0), Complex64::new(-s, 0.0)),
            ),
        ];
        for (desc, (a0, a1)) in cases {
            for theta in [Theta::Plus, Theta::Minus] {
                let dense = rotated_prob_zero_pair(a0, a1, theta);
                let law = chsh_prob_zero(desc, theta);
                assert!(
                    (dense - law).abs() < 1e-14,
                    "{desc:?} {theta:?}: dense {dense} law {law}"
                );
            }
        }
    }

    #[test]
    fn commit_joint_dense_matches_commit_law_exhaustively() {
        let mut r = rng(7);
        for dim in [2usize, 3, 4] {
            for _ in 0..50 {
                let x0 = sample_uniform(dim, &mut r);
                let mut x1 = sample_uniform(dim, &mut r);
                if x1 == x0 {
                    x1.flip(r.random_range(0..dim));
                }
                let split = x0.xored(&x1).first_set().unwrap();
                let (x0, x1) = if x0.get(split) { (x1, x0) } else { (x0, x1) };
                let claw = ClawPair {
                    g: BranchBit {
                        index: split,
                        invert: false,
                    },
                    x0: x0.clone(),
                    x1: x1.clone(),
                };
                let r0 = sample_uniform(dim, &mut r);
                let r1 = sample_uniform(dim, &mut r);
                let theta = if r.random() { Theta::Plus } else { Theta::Minus };
                let dense = commit_joint_dense(&x0, &x1, r0.dot(&x0), r1.dot(&x1), theta);
                // Law route: enumerate admissible d and the qubit-law of b.
                let law = commit_law(&claw, &r0, &r1);
                let mut analytic = BTreeMap::new();
                let pd = 0.5f64.powi(law.log2_support() as i32);
                for dv in 0..(1u64 << dim) {
                    let d = BitVec::from_u64(dv, dim);
                    if !law.admits(&d) {
                        continue;
                    }
                    let p0 = chsh_prob_zero(law.qubit_for(&d), theta);
                    analytic.insert((dv, false), pd * p0);
                    analytic.insert((dv, true), pd * (1.0 - p0));
                }
                let tvd = total_variation(&dense, &analytic);
                assert!(tvd < 1e-12, "tvd {tvd} at dim {dim}");
            }
        }
    }

    #[test]
    fn joint_distributions_are_normalized() {
        let mut r = rng(11);
        let dim = 4;
        let rows: Vec<BitVec> = (0..6).map(|_| sample_uniform(dim, &mut r)).collect();
        let rv = sample_uniform(dim, &mut r);
        for route in [
            run_joint_dense(dim, &rows, &rv, Theta::Plus),
            crate::qsim::run_joint_law(dim, &rows, &rv, Theta::Plus),
        ] {
            let total: f64 = route.values().sum();
            assert!((total - 1.0).abs() < 1e-10, "total {total}");
        }
    }

    #[test]
    fn dense_and_law_joints_agree_on_random_runs() {
        let mut r = rng(13);
        for dim in [3usize, 4, 5] {
            for _ in 0..20 {
                let rows: Vec<BitVec> =
                    (0..2 * (dim - 1)).map(|_| sample_uniform(dim, &mut r)).collect();
                let rv = sample_uniform(dim, &mut r);
                let theta = if r.random() { Theta::Plus } else { Theta::Minus };
                let dense = run_joint_dense(dim, &rows, &rv, theta);
                let law = crate::qsim::run_joint_law(dim, &rows, &rv, theta);
                let tvd = total_variation(&dense, &law);
                assert!(tvd < 1e-10, "tvd {tvd} at dim {dim}");
            }
        }
    }

    #[test]
    fn total_variation_of_disjoint_points_is_one() {
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        a.insert(0u8, 1.0);
        b.insert(1u8, 1.0);
        assert!((total_variation(&a, &b) - 1.0).abs() < 1e-15);
    }
}
