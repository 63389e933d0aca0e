//! Exact simulator for the prover's quantum side.
//!
//! The honest prover only ever holds states of two shapes: a uniform
//! superposition over an affine solution set `{x : Mx = y}` of GF(2)
//! constraints, and a single residual qubit left over after the Hadamard
//! measurement of the commitment round. Both admit exact closed-form
//! measurement laws, so every outcome is sampled from its law rather than
//! from amplitudes. The dense oracle in [`statevector`] rechecks those laws
//! gate by gate at small sizes.

pub mod statevector;

use crate::f2::{self, BitVec};
use rand::Rng;

/// CHSH measurement angle; the verifier draws it uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theta {
    /// +pi/8
    Plus,
    /// -pi/8
    Minus,
}

impl Theta {
    pub fn angle(self) -> f64 {
        match self {
            Theta::Plus => std::f64::consts::FRAC_PI_8,
            Theta::Minus => -std::f64::consts::FRAC_PI_8,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Theta::Plus => 0,
            Theta::Minus => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Theta> {
        match b {
            0 => Some(Theta::Plus),
            1 => Some(Theta::Minus),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Theta {
        if rng.random() {
            Theta::Minus
        } else {
            Theta::Plus
        }
    }
}

/// Residual single-qubit state after the commitment measurement, up to
/// global phase: `Z(b)` is the computational state `|b>`, `X(s)` is
/// `(|0> + (-1)^s |1>)/sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitDesc {
    Z(bool),
    X(bool),
}

/// Probability that measuring `q` in the rotated basis
/// `{cos t|0> + sin t|1>, cos t|0> - sin t|1>}` yields outcome 0.
pub fn chsh_prob_zero(q: QubitDesc, theta: Theta) -> f64 {
    let t = theta.angle();
    match q {
        QubitDesc::Z(false) => t.cos().powi(2),
        QubitDesc::Z(true) => t.sin().powi(2),
        QubitDesc::X(s) => {
            let sign = if s { -1.0 } else { 1.0 };
            (1.0 + sign * (2.0 * t).sin()) / 2.0
        }
    }
}

/// Probability that the rotated-basis measurement yields `bit`.
pub fn chsh_prob(q: QubitDesc, theta: Theta, bit: bool) -> f64 {
    let p0 = chsh_prob_zero(q, theta);
    if bit {
        1.0 - p0
    } else {
        p0
    }
}

/// Samples the rotated-basis measurement outcome.
pub fn chsh_measure<R: Rng + ?Sized>(q: QubitDesc, theta: Theta, rng: &mut R) -> bool {
    rng.random::<f64>() >= chsh_prob_zero(q, theta)
}

/// Single-bit branch predicate: reads one position of a bit string, with
/// optional inversion. Evaluates to 0 on the 0-branch of a claw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchBit {
    pub index: usize,
    pub invert: bool,
}

impl BranchBit {
    pub fn eval(&self, x: &BitVec) -> bool {
        x.get(self.index) ^ self.invert
    }
}

/// A claw `{x0, x1}` together with the predicate separating its branches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClawPair {
    pub x0: BitVec,
    pub x1: BitVec,
    pub g: BranchBit,
}

impl ClawPair {
    pub fn delta(&self) -> BitVec {
        self.x0.xored(&self.x1)
    }

    /// Branch predicate must split the claw the right way round.
    pub fn is_well_formed(&self) -> bool {
        self.x0 != self.x1 && !self.g.eval(&self.x0) && self.g.eval(&self.x1)
    }
}

/// Uniform superposition over the affine set `{x : Mx = y}`, kept as a
/// mutually reduced row echelon system so each new constraint costs one
/// reduction pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineState {
    dim: usize,
    rows: Vec<BitVec>,
    targets: Vec<bool>,
    pivots: Vec<usize>,
}

impl AffineState {
    /// Unconstrained register: uniform over all of GF(2)^dim.
    pub fn full(dim: usize) -> Self {
        AffineState {
            dim,
            rows: Vec::new(),
            targets: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> usize {
        self.rows.len()
    }

    /// log2 of the number of superposed basis states.
    pub fn log2_solutions(&self) -> usize {
        self.dim - self.rows.len()
    }

    /// Reduces `a` against the stored rows; returns the residual and the
    /// accumulated target parity, so `a^T x = residual^T x + acc` on the set.
    fn reduce_vec(&self, a: &BitVec) -> (BitVec, bool) {
        assert_eq!(a.len(), self.dim, "functional length mismatch");
        let mut res = a.clone();
        let mut acc = false;
        for (row, (&pivot, &target)) in self.rows.iter().zip(self.pivots.iter().zip(&self.targets))
        {
            if res.get(pivot) {
                res.xor_assign(row);
                acc ^= target;
            }
        }
        (res, acc)
    }

    /// `Some(bit)` when `a^T x` is constant on the solution set.
    pub fn constant_parity(&self, a: &BitVec) -> Option<bool> {
        let (res, acc) = self.reduce_vec(a);
        res.is_zero().then_some(acc)
    }

    fn insert_reduced(&mut self, res: BitVec, bit: bool) {
        let pivot = res.first_set().expect("cannot insert the zero constraint");
        for (row, target) in self.rows.iter_mut().zip(&mut self.targets) {
            if row.get(pivot) {
                row.xor_assign(&res);
                *target ^= bit;
            }
        }
        self.rows.push(res);
        self.targets.push(bit);
        self.pivots.push(pivot);
    }

    /// Measures the observable `a^T x` on the superposition. A functional
    /// that is constant on the set returns its value and leaves the state
    /// untouched; otherwise the outcome is a fair coin and the solution set
    /// halves.
    pub fn measure_parity<R: Rng + ?Sized>(&mut self, a: &BitVec, rng: &mut R) -> bool {
        let (res, acc) = self.reduce_vec(a);
        if res.is_zero() {
            return acc;
        }
        let outcome: bool = rng.random();
        self.insert_reduced(res, outcome ^ acc);
        outcome
    }

    /// Copy of the state conditioned on `a^T x = bit`; `None` when the
    /// constraint contradicts the existing system.
    pub fn conditioned(&self, a: &BitVec, bit: bool) -> Option<AffineState> {
        let (res, acc) = self.reduce_vec(a);
        if res.is_zero() {
            return (acc == bit).then(|| self.clone());
        }
        let mut st = self.clone();
        st.insert_reduced(res, bit ^ acc);
        Some(st)
    }

    /// Basis of the direction space `{k : Mk = 0}`.
    pub fn kernel_basis(&self) -> Vec<BitVec> {
        let mut is_pivot = vec![false; self.dim];
        for &p in &self.pivots {
            is_pivot[p] = true;
        }
        let mut basis = Vec::with_capacity(self.log2_solutions());
        for free in (0..self.dim).filter(|&c| !is_pivot[c]) {
            let mut v = BitVec::zeros(self.dim);
            v.set(free, true);
            for (row, &p) in self.rows.iter().zip(&self.pivots) {
                if row.get(free) {
                    v.set(p, true);
                }
            }
            basis.push(v);
        }
        basis
    }

    /// One member of the solution set (free coordinates zero).
    pub fn particular_solution(&self) -> BitVec {
        let mut x = BitVec::zeros(self.dim);
        for (&p, &t) in self.pivots.iter().zip(&self.targets) {
            x.set(p, t);
        }
        x
    }

    pub fn contains(&self, x: &BitVec) -> bool {
        self.rows
            .iter()
            .zip(&self.targets)
            .all(|(row, &t)| row.dot(x) == t)
    }

    /// Every superposed basis state. Guarded against blowups; meant for
    /// small sets (claws, test fixtures).
    pub fn enumerate(&self) -> Vec<BitVec> {
        let free = self.log2_solutions();
        assert!(free <= 20, "refusing to enumerate 2^{free} solutions");
        let base = self.particular_solution();
        let kernel = self.kernel_basis();
        let mut out = Vec::with_capacity(1 << free);
        for mask in 0u64..(1 << free) {
            let mut x = base.clone();
            for (j, k) in kernel.iter().enumerate() {
                if (mask >> j) & 1 == 1 {
                    x.xor_assign(k);
                }
            }
            out.push(x);
        }
        out
    }

    /// Exact law of the commitment measurement: copy `r^T x` into a fresh
    /// qubit, Hadamard the register, measure it as `d`.
    ///
    /// Writing the set as `x* + K`: when `r^T x` is constant the register
    /// factors out, interference cancels every `d` not orthogonal to `K`,
    /// and the fresh qubit is left in `|r^T x*>`. When `r^T x` splits the
    /// set, the two halves `x*_b + K0` (with `K0 = K` intersected with the
    /// hyperplane `r^T k = 0`) are entangled with orthogonal qubit values,
    /// so no cross terms cancel: `d` ranges over the complement of `K0` and
    /// the qubit ends in the X-basis state with sign `d^T (x*_0 + x*_1)`.
    pub fn hadamard_law(&self, r: &BitVec) -> HadamardLaw {
        let (res, acc) = self.reduce_vec(r);
        let kernel = self.kernel_basis();
        if res.is_zero() {
            return HadamardLaw {
                dim: self.dim,
                perp: kernel,
                kind: LawKind::Constant { delta: acc },
            };
        }
        // r is non-constant, so some kernel vector has odd inner product.
        let mut k1: Option<BitVec> = None;
        let mut perp = Vec::with_capacity(kernel.len() - 1);
        for k in kernel {
            if r.dot(&k) {
                match &k1 {
                    None => k1 = Some(k),
                    Some(pivot) => perp.push(k.xored(pivot)),
                }
            } else {
                perp.push(k);
            }
        }
        let k1 = k1.expect("non-constant functional must meet the kernel oddly");
        HadamardLaw {
            dim: self.dim,
            perp,
            kind: LawKind::Split { branch_diff: k1 },
        }
    }

    /// Samples the commitment measurement, consuming the register.
    pub fn hadamard_measure<R: Rng + ?Sized>(self, r: &BitVec, rng: &mut R) -> (BitVec, QubitDesc) {
        self.hadamard_law(r).sample(rng)
    }
}

/// Support of the commitment outcome `d` (a uniform coset of the complement
/// of `perp`) and the residual qubit it leaves behind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardLaw {
    dim: usize,
    /// Independent vectors `d` must be orthogonal to.
    perp: Vec<BitVec>,
    kind: LawKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum LawKind {
    /// Committed bit is `delta` on the whole set; qubit collapses to Z.
    Constant { delta: bool },
    /// Committed bit splits the set; branches differ by `branch_diff`.
    Split { branch_diff: BitVec },
}

impl HadamardLaw {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// log2 of the number of admissible outcomes `d`.
    pub fn log2_support(&self) -> usize {
        self.dim - self.perp.len()
    }

    pub fn admits(&self, d: &BitVec) -> bool {
        self.perp.iter().all(|k| !d.dot(k))
    }

    /// Residual qubit once `d` is fixed.
    pub fn qubit_for(&self, d: &BitVec) -> QubitDesc {
        match &self.kind {
            LawKind::Constant { delta } => QubitDesc::Z(*delta),
            LawKind::Split { branch_diff } => QubitDesc::X(d.dot(branch_diff)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (BitVec, QubitDesc) {
        let d = sample_orthogonal(self.dim, &self.perp, rng);
        let q = self.qubit_for(&d);
        (d, q)
    }
}

/// Uniform vector orthogonal to every element of `basis`.
pub fn sample_orthogonal<R: Rng + ?Sized>(
    dim: usize,
    basis: &[BitVec],
    rng: &mut R,
) -> BitVec {
    if basis.is_empty() {
        return f2::sample_uniform(dim, rng);
    }
    let complement = f2::BitMat::from_rows(basis).kernel();
    let mut d = BitVec::zeros(dim);
    for v in &complement {
        if rng.random() {
            d.xor_assign(v);
        }
    }
    d
}

/// Law of the two-branch commitment used by the claw-based protocol: the
/// claw state picks up `r_{g(x)}^T x` on a fresh qubit before the register
/// is Hadamard-measured. The branch bits are `r0^T x0` and `r1^T x1`; equal
/// bits put the qubit in a Z state and confine `d` to the hyperplane
/// orthogonal to `x0 + x1`, unequal bits leave `d` unconstrained and the
/// qubit in an X state.
pub fn commit_law(claw: &ClawPair, r0: &BitVec, r1: &BitVec) -> HadamardLaw {
    assert!(claw.is_well_formed(), "malformed claw");
    let delta = claw.delta();
    let b0 = r0.dot(&claw.x0);
    let b1 = r1.dot(&claw.x1);
    if b0 == b1 {
        HadamardLaw {
            dim: delta.len(),
            perp: vec![delta],
            kind: LawKind::Constant { delta: b0 },
        }
    } else {
        HadamardLaw {
            dim: delta.len(),
            perp: Vec::new(),
            kind: LawKind::Split { branch_diff: delta },
        }
    }
}

/// Parity of the two branch bits; the verifier recomputes this to pick the
/// accept equation.
pub fn commit_alpha(claw: &ClawPair, r0: &BitVec, r1: &BitVec) -> bool {
    r0.dot(&claw.x0) ^ r1.dot(&claw.x1)
}

/// Samples the two-branch commitment measurement.
pub fn hadamard_commit_measure<R: Rng + ?Sized>(
    claw: &ClawPair,
    r0: &BitVec,
    r1: &BitVec,
    rng: &mut R,
) -> (BitVec, QubitDesc) {
    commit_law(claw, r0, r1).sample(rng)
}

/// Exact joint distribution over `(y, d, b)` for a run that measures the
/// parities in `rows` round by round, commits `r^T x`, Hadamard-measures the
/// register as `d` and measures the residual qubit at `theta`. This is the
/// closed-form route; `statevector::run_joint_dense` computes the same
/// object from amplitudes. Keys pack `y` bit `i` as round `i`'s outcome.
pub fn run_joint_law(
    dim: usize,
    rows: &[BitVec],
    r: &BitVec,
    theta: Theta,
) -> std::collections::BTreeMap<(u64, u64, bool), f64> {
    assert!(dim <= 16 && rows.len() < 64, "law enumeration too large");
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![(AffineState::full(dim), 0usize, 0u64, 1.0f64)];
    while let Some((st, round, y, p)) = stack.pop() {
        if round == rows.len() {
            let law = st.hadamard_law(r);
            let pd = 0.5f64.powi(law.log2_support() as i32);
            for dv in 0..(1u64 << dim) {
                let d = BitVec::from_u64(dv, dim);
                if !law.admits(&d) {
                    continue;
                }
                let p0 = chsh_prob_zero(law.qubit_for(&d), theta);
                *out.entry((y, dv, false)).or_insert(0.0) += p * pd * p0;
                *out.entry((y, dv, true)).or_insert(0.0) += p * pd * (1.0 - p0);
            }
            continue;
        }
        match st.constant_parity(&rows[round]) {
            Some(bit) => {
                stack.push((st, round + 1, y | ((bit as u64) << round), p));
            }
            None => {
                let s0 = st.conditioned(&rows[round], false).unwrap();
                let s1 = st.conditioned(&rows[round], true).unwrap();
                stack.push((s0, round + 1, y, p / 2.0));
                stack.push((s1, round + 1, y | (1u64 << round), p / 2.0));
            }
        }
    }
    out
}

/// Running count of logical qubits a prover holds; the protocols assert
/// their stated peak widths against this.
#[derive(Debug, Clone, Default)]
pub struct QubitLedger {
    live: usize,
    peak: usize,
}

impl QubitLedger {
    pub fn alloc(&mut self, n: usize) {
        self.live += n;
        self.peak = self.peak.max(self.live);
    }

    pub fn release(&mut self, n: usize) {
        assert!(n <= self.live, "releasing more qubits than held");
        self.live -= n;
    }

    pub fn live(&self) -> usize {
        self.live
    }

    pub fn peak(&self) -> usize {
        self.peak
    }
}
