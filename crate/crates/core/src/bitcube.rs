//! Bit-packed binary matrices over `{-1, +1}`.
//!
//! A bit set to 1 encodes `+1` and a cleared bit encodes `-1`. Matrices are
//! stored column-major with one point per column; each column occupies
//! `ceil(d / 64)` little-endian `u64` words (coordinate `s` lives in word
//! `s / 64`, bit `s % 64`). Padding bits past `d` are always zero, so distance
//! kernels can XOR and popcount whole words.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::seed;

pub(crate) const WORD_BITS: usize = 64;

#[inline]
pub(crate) fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(len: usize) -> u64 {
    match len % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[inline]
pub(crate) fn xor_popcount(a: &[u64], b: &[u64]) -> usize {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum()
}

#[inline]
pub(crate) fn masked_xor_popcount(a: &[u64], b: &[u64], mask: &[u64]) -> usize {
    a.iter()
        .zip(b)
        .zip(mask)
        .map(|((x, y), m)| ((x ^ y) & m).count_ones() as usize)
        .sum()
}

/// Iterates the indices of set bits in a word slice.
pub(crate) fn iter_ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * WORD_BITS + bit)
            }
        })
    })
}

fn sign_to_bit(v: i8, at: usize) -> Result<bool> {
    match v {
        1 => Ok(true),
        -1 => Ok(false),
        other => Err(Error::param(format!(
            "entry {at} is {other}; binary entries must be +1 or -1"
        ))),
    }
}

/// An owned binary vector. Also used as a coordinate mask, where `+1` marks
/// an active coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

/// A borrowed binary vector, e.g. one column of a [`BinaryMatrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitVecRef<'a> {
    len: usize,
    words: &'a [u64],
}

impl BitVector {
    /// A vector of `len` entries, all `+1` if `value` is true and all `-1` otherwise.
    pub fn filled(len: usize, value: bool) -> Self {
        let mut words = vec![if value { u64::MAX } else { 0 }; words_for(len)];
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        BitVector { len, words }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut v = BitVector::filled(len, false);
        for i in 0..len {
            if f(i) {
                v.set(i, true);
            }
        }
        v
    }

    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        let mut v = BitVector::filled(signs.len(), false);
        for (i, &s) in signs.iter().enumerate() {
            v.set(i, sign_to_bit(s, i)?);
        }
        Ok(v)
    }

    /// A mask with exactly the listed coordinates active.
    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut v = BitVector::filled(len, false);
        for &i in indices {
            if i >= len {
                return Err(Error::param(format!(
                    "index {i} out of range for length {len}"
                )));
            }
            v.set(i, true);
        }
        Ok(v)
    }

    pub(crate) fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), words_for(len));
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        BitVector { len, words }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.view().get(i)
    }

    #[inline]
    pub fn sign(&self, i: usize) -> i8 {
        self.view().sign(i)
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "index {i} out of range for length {}",
            self.len
        );
        let bit = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= bit;
        } else {
            self.words[i / WORD_BITS] &= !bit;
        }
    }

    pub fn as_words(&self) -> &[u64] {
        &self.words
    }

    pub fn view(&self) -> BitVecRef<'_> {
        BitVecRef {
            len: self.len,
            words: &self.words,
        }
    }

    pub fn to_signs(&self) -> Vec<i8> {
        self.view().to_signs()
    }

    /// Indices of `+1` entries (active coordinates, for a mask).
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        iter_ones(&self.words)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

impl<'a> From<&'a BitVector> for BitVecRef<'a> {
    fn from(v: &'a BitVector) -> Self {
        v.view()
    }
}

impl<'a> BitVecRef<'a> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "index {i} out of range for length {}",
            self.len
        );
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn sign(&self, i: usize) -> i8 {
        if self.get(i) {
            1
        } else {
            -1
        }
    }

    pub fn as_words(&self) -> &'a [u64] {
        self.words
    }

    pub fn to_owned(&self) -> BitVector {
        BitVector {
            len: self.len,
            words: self.words.to_vec(),
        }
    }

    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.len).map(|i| self.sign(i)).collect()
    }
}

/// Number of coordinates where `a` and `b` differ.
pub fn hamming_distance(a: BitVecRef<'_>, b: BitVecRef<'_>) -> Result<usize> {
    check_dim(a.len, b.len)?;
    Ok(xor_popcount(a.words, b.words))
}

/// A `d x n` matrix over `{-1, +1}`, one point per column.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMatrix {
    d: usize,
    n: usize,
    stride: usize,
    bits: Vec<u64>,
}

impl BinaryMatrix {
    pub fn filled(d: usize, n: usize, value: bool) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("a binary matrix needs d >= 1"));
        }
        let column = BitVector::filled(d, value);
        let stride = column.words.len();
        let mut bits = Vec::with_capacity(stride * n);
        for _ in 0..n {
            bits.extend_from_slice(&column.words);
        }
        Ok(BinaryMatrix { d, n, stride, bits })
    }

    /// Builds a matrix from `f(coordinate, point)`.
    pub fn from_fn(d: usize, n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut m = BinaryMatrix::filled(d, n, false)?;
        for j in 0..n {
            for s in 0..d {
                if f(s, j) {
                    m.set(s, j, true);
                }
            }
        }
        Ok(m)
    }

    /// Column-major `±1` entries, `signs[j * d + s]` being coordinate `s` of point `j`.
    pub fn from_signs(d: usize, n: usize, signs: &[i8]) -> Result<Self> {
        check_dim(d * n, signs.len())?;
        let mut m = BinaryMatrix::filled(d, n, false)?;
        for (k, &v) in signs.iter().enumerate() {
            if sign_to_bit(v, k)? {
                m.set(k % d, k / d, true);
            }
        }
        Ok(m)
    }

    pub fn from_columns<'a>(
        d: usize,
        columns: impl IntoIterator<Item = BitVecRef<'a>>,
    ) -> Result<Self> {
        let mut m = BinaryMatrix::filled(d, 0, false)?;
        for c in columns {
            check_dim(d, c.len)?;
            m.bits.extend_from_slice(c.words);
            m.n += 1;
        }
        Ok(m)
    }

    pub(crate) fn from_raw(d: usize, n: usize, bits: Vec<u64>) -> Self {
        let stride = words_for(d);
        debug_assert_eq!(bits.len(), stride * n);
        BinaryMatrix { d, n, stride, bits }
    }

    /// Number of coordinates (rows).
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of points (columns).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words_per_column(&self) -> usize {
        self.stride
    }

    pub fn as_words(&self) -> &[u64] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, s: usize, j: usize) -> bool {
        self.column(j).get(s)
    }

    #[inline]
    pub fn sign(&self, s: usize, j: usize) -> i8 {
        self.column(j).sign(s)
    }

    #[inline]
    pub fn set(&mut self, s: usize, j: usize, value: bool) {
        assert!(s < self.d && j < self.n, "entry ({s}, {j}) out of range");
        let w = &mut self.bits[j * self.stride + s / WORD_BITS];
        let bit = 1u64 << (s % WORD_BITS);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    #[inline]
    pub fn column(&self, j: usize) -> BitVecRef<'_> {
        assert!(j < self.n, "column {j} out of range for {} points", self.n);
        BitVecRef {
            len: self.d,
            words: &self.bits[j * self.stride..(j + 1) * self.stride],
        }
    }

    pub(crate) fn column_words_mut(&mut self, j: usize) -> &mut [u64] {
        &mut self.bits[j * self.stride..(j + 1) * self.stride]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = BitVecRef<'_>> + '_ {
        (0..self.n).map(move |j| self.column(j))
    }

    /// A new matrix holding the listed columns in order.
    pub fn select_columns(&self, indices: &[usize]) -> BinaryMatrix {
        let mut bits = Vec::with_capacity(indices.len() * self.stride);
        for &j in indices {
            bits.extend_from_slice(self.column(j).words);
        }
        BinaryMatrix::from_raw(self.d, indices.len(), bits)
    }

    /// The first `count` columns (all of them if `count >= n`).
    pub fn head(&self, count: usize) -> BinaryMatrix {
        let count = count.min(self.n);
        BinaryMatrix::from_raw(self.d, count, self.bits[..count * self.stride].to_vec())
    }

    /// Entrywise negation.
    pub fn negated(&self) -> BinaryMatrix {
        let mut out = self.clone();
        let tail = tail_mask(self.d);
        for col in out.bits.chunks_mut(self.stride) {
            for w in col.iter_mut() {
                *w = !*w;
            }
            *col.last_mut().unwrap() &= tail;
        }
        out
    }

    pub fn to_signs(&self) -> Vec<i8> {
        self.columns().flat_map(|c| c.to_signs()).collect()
    }
}

/// Total number of disagreeing entries between two equally shaped matrices.
pub fn mismatch_count(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<usize> {
    check_dim(a.d, b.d)?;
    check_dim(a.n, b.n)?;
    Ok(xor_popcount(&a.bits, &b.bits))
}

/// Fraction of disagreeing entries, `mismatches / (d * n)`.
pub fn bit_error_rate(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<f64> {
    let mismatches = mismatch_count(a, b)?;
    if a.n == 0 {
        return Err(Error::EmptyInput(
            "bit error rate of a matrix with no points",
        ));
    }
    Ok(mismatches as f64 / (a.d * a.n) as f64)
}

/// Replaces a fraction `p` of the entries with uniform draws from `{-1, +1}`.
///
/// Exactly `round(p * d * n)` positions are chosen uniformly without
/// replacement (selection sampling over the column-major entry order), and
/// each chosen entry is overwritten by an independent fair coin. The expected
/// fraction of entries that actually change is `p / 2`.
pub fn inject_noise(x: &BinaryMatrix, p: f64, seed: u64) -> Result<BinaryMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("noise fraction {p} outside [0, 1]")));
    }
    let total = x.d * x.n;
    let mut needed = (p * total as f64).round() as usize;
    let mut out = x.clone();
    let mut rng = seed::rng(seed);
    for k in 0..total {
        if needed == 0 {
            break;
        }
        let remaining = total - k;
        if needed == remaining || rng.random_range(0..remaining) < needed {
            needed -= 1;
            out.set(k % x.d, k / x.d, rng.random::<bool>());
        }
    }
    Ok(out)
}

/// Real-valued `d x n` matrix with entries in `[-1, 1]`, column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    d: usize,
    n: usize,
    values: Vec<f32>,
}

impl RealMatrix {
    pub fn new(d: usize, n: usize, values: Vec<f32>) -> Result<Self> {
        check_dim(d * n, values.len())?;
        if let Some(k) = values.iter().position(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::param(format!(
                "entry {k} = {} outside [-1, 1]",
                values[k]
            )));
        }
        Ok(RealMatrix { d, n, values })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: usize, j: usize) -> f32 {
        assert!(s < self.d && j < self.n, "entry ({s}, {j}) out of range");
        self.values[j * self.d + s]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn column(&self, j: usize) -> &[f32] {
        &self.values[j * self.d..(j + 1) * self.d]
    }
}

impl From<&BinaryMatrix> for RealMatrix {
    fn from(m: &BinaryMatrix) -> Self {
        let values = m
            .columns()
            .flat_map(|c| c.to_signs())
            .map(f32::from)
            .collect();
        RealMatrix {
            d: m.d,
            n: m.n,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn naive_hamming(a: &[i8], b: &[i8]) -> usize {
        a.iter().zip(b).filter(|(x, y)| x != y).count()
    }

    #[test]
    fn identical_vectors_have_zero_distance() {
        let a = BitVector::from_signs(&[1, -1, 1, 1]).unwrap();
        assert_eq!(hamming_distance(a.view(), a.view()).unwrap(), 0);
    }

    #[test]
    fn single_flip() {
        let a = BitVector::from_signs(&[1, 1, -1]).unwrap();
        let b = BitVector::from_signs(&[1, -1, -1]).unwrap();
        assert_eq!(hamming_distance(a.view(), b.view()).unwrap(), 1);
    }

    #[test]
    fn length_mismatch_is_a_dimension_error() {
        let a = BitVector::filled(3, true);
        let b = BitVector::filled(4, true);
        assert!(matches!(
            hamming_distance(a.view(), b.view()),
            Err(Error::Dimension {
                expected: 3,
                found: 4
            })
        ));
    }

    #[test]
    fn rejects_non_sign_entries() {
        assert!(BitVector::from_signs(&[1, 0]).is_err());
        assert!(BinaryMatrix::from_signs(2, 1, &[1, 2]).is_err());
        assert!(BinaryMatrix::filled(0, 3, true).is_err());
    }

    #[test]
    fn ber_examples() {
        let a = BinaryMatrix::from_signs(4, 1, &[1, 1, -1, -1]).unwrap();
        let b = BinaryMatrix::from_signs(4, 1, &[1, -1, -1, -1]).unwrap();
        assert_eq!(bit_error_rate(&a, &a).unwrap(), 0.0);
        assert_eq!(bit_error_rate(&a, &a.negated()).unwrap(), 1.0);
        assert_eq!(bit_error_rate(&a, &b).unwrap(), 0.25);
        let c = BinaryMatrix::filled(4, 2, true).unwrap();
        assert!(matches!(
            bit_error_rate(&a, &c),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn negation_keeps_padding_clear() {
        let a = BinaryMatrix::filled(70, 3, true).unwrap();
        let neg = a.negated();
        assert_eq!(neg, BinaryMatrix::filled(70, 3, false).unwrap());
        assert_eq!(neg.negated(), a);
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = BinaryMatrix::from_fn(33, 17, |s, j| (s * 7 + j) % 3 == 0).unwrap();
        assert_eq!(inject_noise(&x, 0.0, 99).unwrap(), x);
    }

    #[test]
    fn noise_is_seeded() {
        let x = BinaryMatrix::filled(50, 40, false).unwrap();
        let a = inject_noise(&x, 0.5, 3).unwrap();
        assert_eq!(a, inject_noise(&x, 0.5, 3).unwrap());
        assert_ne!(a, inject_noise(&x, 0.5, 4).unwrap());
    }

    #[test]
    fn noise_out_of_range_is_rejected() {
        let x = BinaryMatrix::filled(4, 4, false).unwrap();
        assert!(matches!(inject_noise(&x, 1.5, 0), Err(Error::Parameter(_))));
        assert!(inject_noise(&x, -0.1, 0).is_err());
        assert!(inject_noise(&x, f64::NAN, 0).is_err());
    }

    #[test]
    fn noise_flip_fraction_near_half_p() {
        // 10^5 entries; flips ~ Binomial(round(p N), 1/2)
        let x = BinaryMatrix::filled(100, 1000, true).unwrap();
        let total = 100_000.0;
        let noisy = inject_noise(&x, 0.7, 11).unwrap();
        let frac = bit_error_rate(&x, &noisy).unwrap();
        let sigma = (0.7 * total * 0.25f64).sqrt() / total;
        assert!((frac - 0.35).abs() <= 3.0 * sigma, "flip fraction {frac}");
    }

    #[test]
    fn real_matrix_range_checked() {
        assert!(RealMatrix::new(1, 2, vec![0.5, 1.5]).is_err());
        let m = RealMatrix::new(1, 2, vec![0.5, -1.0]).unwrap();
        assert_eq!(m.get(0, 1), -1.0);
    }

    fn signs(len: usize) -> impl Strategy<Value = Vec<i8>> {
        prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn pack_unpack_round_trip(d in 1usize..150, n in 0usize..6, seed in any::<u64>()) {
            let mut rng = seed::rng(seed);
            let v: Vec<i8> = (0..d * n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            let m = BinaryMatrix::from_signs(d, n, &v).unwrap();
            prop_assert_eq!(m.to_signs(), v.clone());
            prop_assert_eq!(BinaryMatrix::from_signs(d, n, &m.to_signs()).unwrap(), m);
        }

        #[test]
        fn packed_distance_matches_naive(
            (a, b) in (1usize..200).prop_flat_map(|d| (signs(d), signs(d)))
        ) {
            let pa = BitVector::from_signs(&a).unwrap();
            let pb = BitVector::from_signs(&b).unwrap();
            prop_assert_eq!(hamming_distance(pa.view(), pb.view()).unwrap(), naive_hamming(&a, &b));
        }

        #[test]
        fn hamming_is_a_metric(
            (a, b, c) in (1usize..130).prop_flat_map(|d| (signs(d), signs(d), signs(d)))
        ) {
            let (a, b, c) = (
                BitVector::from_signs(&a).unwrap(),
                BitVector::from_signs(&b).unwrap(),
                BitVector::from_signs(&c).unwrap(),
            );
            let ab = hamming_distance(a.view(), b.view()).unwrap();
            let ba = hamming_distance(b.view(), a.view()).unwrap();
            let bc = hamming_distance(b.view(), c.view()).unwrap();
            let ac = hamming_distance(a.view(), c.view()).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(ac <= ab + bc);
        }
    }
}
