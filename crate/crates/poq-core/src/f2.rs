//! Bit-packed vectors and matrices over GF(2).
//!
//! Vectors pack bit `i` into bit `i % 64` of word `i / 64`; unused bits of the
//! last word are kept zero so that derived equality and hashing are canonical.
//! The wire encoding of a vector is a 4-byte big-endian bit length followed by
//! `ceil(len / 8)` bytes with bit `i` stored in bit `i % 8` of byte `i / 8`.

use rand::Rng;
use thiserror::Error;

const WORD_BITS: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum F2Error {
    /// `sample_conditioned` was asked for `r` with `r^T 0 = 1`.
    #[error("no vector satisfies r^T t = 1 when t = 0")]
    InfeasibleConstraint,
    #[error("truncated vector encoding: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("non-canonical vector encoding: padding bits past length {len} are set")]
    NonCanonicalPadding { len: usize },
}

/// Bit vector over GF(2) with a fixed length.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; len.div_ceil(WORD_BITS)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = BitVec::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// Low `len` bits of `value`, bit `i` of the integer becoming entry `i`.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= WORD_BITS, "from_u64 supports at most 64 bits");
        let mut v = BitVec::zeros(len);
        if len > 0 {
            v.words[0] = value & mask_low(len);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range 0..{}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range 0..{}", self.len);
        let w = &mut self.words[i / WORD_BITS];
        if bit {
            *w |= 1 << (i % WORD_BITS);
        } else {
            *w &= !(1 << (i % WORD_BITS));
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range 0..{}", self.len);
        self.words[i / WORD_BITS] ^= 1 << (i % WORD_BITS);
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Parity of all entries.
    pub fn parity(&self) -> bool {
        self.words.iter().fold(0u64, |acc, w| acc ^ w).count_ones() % 2 == 1
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "xor of mismatched lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xored(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "dot of mismatched lengths");
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u64, |acc, (a, b)| acc ^ (a & b))
            .count_ones()
            % 2
            == 1
    }

    /// Index of the lowest set bit, if any.
    pub fn first_set(&self) -> Option<usize> {
        for (j, &w) in self.words.iter().enumerate() {
            if w != 0 {
                return Some(j * WORD_BITS + w.trailing_zeros() as usize);
            }
        }
        None
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % WORD_BITS == 0 {
            self.words.push(0);
        }
        self.len += 1;
        let i = self.len - 1;
        if bit {
            self.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        }
    }

    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        for i in 0..other.len {
            out.push(other.get(i));
        }
        out
    }

    /// Bits `lo..hi` as a new vector.
    pub fn slice(&self, lo: usize, hi: usize) -> BitVec {
        assert!(lo <= hi && hi <= self.len, "slice {lo}..{hi} out of range");
        let mut out = BitVec::zeros(hi - lo);
        for i in lo..hi {
            out.set(i - lo, self.get(i));
        }
        out
    }

    /// Value of the low 64 bits as an integer (length must be at most 64).
    pub fn as_u64(&self) -> u64 {
        assert!(self.len <= WORD_BITS, "as_u64 supports at most 64 bits");
        self.words.first().copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    /// Packed little-endian bytes without the length header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        for k in 0..nbytes {
            let bit = k * 8;
            out.push(((self.words[bit / WORD_BITS] >> (bit % WORD_BITS)) & 0xff) as u8);
        }
        out
    }

    /// Wire encoding: 4-byte big-endian bit length, then packed bytes.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.len.div_ceil(8));
        out.extend_from_slice(&(self.len as u32).to_be_bytes());
        out.extend_from_slice(&self.to_bytes());
        out
    }

    /// Parses one wire-encoded vector from the front of `buf`, returning the
    /// remainder. Padding bits past the stated length must be zero.
    pub fn read_wire(buf: &[u8]) -> Result<(BitVec, &[u8]), F2Error> {
        if buf.len() < 4 {
            return Err(F2Error::Truncated {
                need: 4,
                have: buf.len(),
            });
        }
        let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
        let nbytes = len.div_ceil(8);
        if buf.len() < 4 + nbytes {
            return Err(F2Error::Truncated {
                need: 4 + nbytes,
                have: buf.len(),
            });
        }
        let mut v = BitVec::zeros(len);
        for (k, &byte) in buf[4..4 + nbytes].iter().enumerate() {
            let bit = k * 8;
            v.words[bit / WORD_BITS] |= (byte as u64) << (bit % WORD_BITS);
        }
        if len % WORD_BITS != 0 || len % 8 != 0 {
            let canonical = {
                let mut c = v.clone();
                c.mask_tail();
                c
            };
            if canonical.words != v.words {
                return Err(F2Error::NonCanonicalPadding { len });
            }
        }
        Ok((v, &buf[4 + nbytes..]))
    }

    /// Wire decoding that must consume the whole buffer.
    pub fn from_wire(buf: &[u8]) -> Result<BitVec, F2Error> {
        let (v, rest) = BitVec::read_wire(buf)?;
        if !rest.is_empty() {
            return Err(F2Error::NonCanonicalPadding { len: v.len });
        }
        Ok(v)
    }

    fn mask_tail(&mut self) {
        let used = self.len % WORD_BITS;
        if used != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= mask_low(used);
            }
        }
    }

    fn words(&self) -> &[u64] {
        &self.words
    }
}

fn mask_low(bits: usize) -> u64 {
    if bits >= WORD_BITS {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

impl std::fmt::Debug for BitVec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", if self.get(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Uniform vector of the given length.
pub fn sample_uniform<R: Rng + ?Sized>(len: usize, rng: &mut R) -> BitVec {
    let mut v = BitVec::zeros(len);
    for w in v.words.iter_mut() {
        *w = rng.random();
    }
    v.mask_tail();
    v
}

/// Uniform vector `r` with `r^T t = bit`, by rejection sampling.
///
/// Succeeds after two draws in expectation. Infeasible only for `t = 0` and
/// `bit = 1`; `t = 0` with `bit = 0` degenerates to the unconditioned sampler.
pub fn sample_conditioned<R: Rng + ?Sized>(
    len: usize,
    t: &BitVec,
    bit: bool,
    rng: &mut R,
) -> Result<BitVec, F2Error> {
    assert_eq!(t.len(), len, "constraint length mismatch");
    if t.is_zero() && bit {
        return Err(F2Error::InfeasibleConstraint);
    }
    loop {
        let r = sample_uniform(len, rng);
        if r.dot(t) == bit {
            return Ok(r);
        }
    }
}

/// Row-major bit-packed matrix over GF(2).
#[derive(Clone, PartialEq, Eq)]
pub struct BitMat {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(WORD_BITS).max(1);
        BitMat {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn from_rows(rows: &[BitVec]) -> Self {
        let cols = rows.first().map_or(0, BitVec::len);
        let mut m = BitMat::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            m.set_row(i, r);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of range");
        (self.data[r * self.stride + c / WORD_BITS] >> (c % WORD_BITS)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, bit: bool) {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of range");
        let w = &mut self.data[r * self.stride + c / WORD_BITS];
        if bit {
            *w |= 1 << (c % WORD_BITS);
        } else {
            *w &= !(1 << (c % WORD_BITS));
        }
    }

    pub fn row(&self, r: usize) -> BitVec {
        assert!(r < self.rows, "row {r} out of range 0..{}", self.rows);
        let nwords = self.cols.div_ceil(WORD_BITS);
        let start = r * self.stride;
        let mut v = BitVec {
            len: self.cols,
            words: self.data[start..start + nwords].to_vec(),
        };
        v.mask_tail();
        v
    }

    pub fn set_row(&mut self, r: usize, v: &BitVec) {
        assert_eq!(v.len(), self.cols, "row length mismatch");
        let dst = &mut self.data[r * self.stride..(r + 1) * self.stride];
        dst.fill(0);
        dst[..v.words().len()].copy_from_slice(v.words());
    }

    pub fn append_row(&mut self, v: &BitVec) {
        assert_eq!(v.len(), self.cols, "row length mismatch");
        self.rows += 1;
        let start = self.data.len();
        self.data.resize(start + self.stride, 0);
        self.data[start..start + v.words().len()].copy_from_slice(v.words());
    }

    /// `M x` as a column vector of length `rows`.
    pub fn mul_vec(&self, x: &BitVec) -> BitVec {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        let mut out = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.stride..(r + 1) * self.stride];
            let acc = row
                .iter()
                .zip(x.words())
                .fold(0u64, |acc, (a, b)| acc ^ (a & b));
            out.set(r, acc.count_ones() % 2 == 1);
        }
        out
    }

    pub fn transpose(&self) -> BitMat {
        let mut out = BitMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    out.set(c, r, true);
                }
            }
        }
        out
    }

    fn xor_row_into(&mut self, src: usize, dst: usize) {
        let (a, b) = (src * self.stride, dst * self.stride);
        for k in 0..self.stride {
            let v = self.data[a + k];
            self.data[b + k] ^= v;
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for k in 0..self.stride {
            self.data.swap(a * self.stride + k, b * self.stride + k);
        }
    }

    /// Reduced row echelon form in place; returns the pivot column of each of
    /// the leading `rank` rows. `aug` is carried along as an extra column.
    fn reduce(&mut self, mut aug: Option<&mut BitVec>) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut next_row = 0;
        for col in 0..self.cols {
            let Some(pivot) = (next_row..self.rows).find(|&r| self.get(r, col)) else {
                continue;
            };
            self.swap_rows(pivot, next_row);
            if let Some(aug) = aug.as_deref_mut() {
                let (pb, nb) = (aug.get(pivot), aug.get(next_row));
                aug.set(pivot, nb);
                aug.set(next_row, pb);
            }
            for r in 0..self.rows {
                if r != next_row && self.get(r, col) {
                    self.xor_row_into(next_row, r);
                    if let Some(aug) = aug.as_deref_mut() {
                        let bit = aug.get(next_row) ^ aug.get(r);
                        aug.set(r, bit);
                    }
                }
            }
            pivots.push(col);
            next_row += 1;
            if next_row == self.rows {
                break;
            }
        }
        pivots
    }

    /// Rank via Gaussian elimination on a scratch copy.
    pub fn rank(&self) -> usize {
        self.clone().reduce(None).len()
    }

    /// Basis of the right kernel `{x : Mx = 0}`.
    pub fn kernel(&self) -> Vec<BitVec> {
        let mut m = self.clone();
        let pivots = m.reduce(None);
        let mut basis = Vec::with_capacity(self.cols - pivots.len());
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        for free in (0..self.cols).filter(|&c| !is_pivot[c]) {
            let mut v = BitVec::zeros(self.cols);
            v.set(free, true);
            for (row, &p) in pivots.iter().enumerate() {
                if m.get(row, free) {
                    v.set(p, true);
                }
            }
            basis.push(v);
        }
        basis
    }

    /// One solution of `Mx = y` with free coordinates zero, if consistent.
    pub fn solve(&self, y: &BitVec) -> Option<BitVec> {
        assert_eq!(y.len(), self.rows, "rhs length mismatch");
        let mut m = self.clone();
        let mut aug = y.clone();
        let pivots = m.reduce(Some(&mut aug));
        for r in pivots.len()..self.rows {
            if aug.get(r) {
                return None;
            }
        }
        let mut x = BitVec::zeros(self.cols);
        for (row, &p) in pivots.iter().enumerate() {
            x.set(p, aug.get(row));
        }
        Some(x)
    }

    /// Every solution of `Mx = y`; the count is `2^(cols - rank)` when the
    /// system is consistent. Intended for small kernels.
    pub fn solve_all(&self, y: &BitVec) -> Vec<BitVec> {
        let Some(base) = self.solve(y) else {
            return Vec::new();
        };
        let kernel = self.kernel();
        assert!(
            kernel.len() <= 20,
            "solution space 2^{} too large to enumerate",
            kernel.len()
        );
        let mut out = Vec::with_capacity(1 << kernel.len());
        for mask in 0u64..(1 << kernel.len()) {
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
}

impl std::fmt::Debug for BitMat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in 0..self.rows {
            writeln!(f, "{:?}", self.row(r))?;
        }
        Ok(())
    }
}

/// Matrix with independent uniform entries.
pub fn sample_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> BitMat {
    let mut m = BitMat::zeros(rows, cols);
    for r in 0..rows {
        let row = sample_uniform(cols, rng);
        m.set_row(r, &row);
    }
    m
}
