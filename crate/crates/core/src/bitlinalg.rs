//! Exact GF(2) and GF(2^m) arithmetic, bitstrings, Toeplitz matrices,
//! explicit codes and Hamming geometry.
//!
//! A bitstring of length `n` maps to the integer whose bit at weight
//! `2^(n-1-i)` is `bits[i]`. Field elements use the same reading: the
//! leftmost bit is the coefficient of the highest power.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Bitstring {
    bits: Vec<bool>,
}

impl Bitstring {
    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 bits");
        let bits = (0..len).map(|i| (value >> (len - 1 - i)) & 1 == 1).collect();
        Self { bits }
    }

    pub fn to_u64(&self) -> Result<u64> {
        if self.bits.len() > 64 {
            return invalid(format!("bitstring of length {} does not fit in u64", self.bits.len()));
        }
        Ok(self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn xor(&self, other: &Bitstring) -> Result<Bitstring> {
        if self.len() != other.len() {
            return invalid(format!("xor of lengths {} and {}", self.len(), other.len()));
        }
        Ok(Bitstring {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect(),
        })
    }

    pub fn concat(&self, other: &Bitstring) -> Bitstring {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(&other.bits);
        Bitstring { bits }
    }

    pub fn slice(&self, start: usize, end: usize) -> Bitstring {
        Bitstring { bits: self.bits[start..end].to_vec() }
    }

    /// Splits into `[0, at)` and `[at, len)`.
    pub fn split_at(&self, at: usize) -> Result<(Bitstring, Bitstring)> {
        if at > self.len() {
            return invalid(format!("split point {at} beyond length {}", self.len()));
        }
        Ok((self.slice(0, at), self.slice(at, self.len())))
    }

    /// All bitstrings of length `len` in increasing integer order.
    pub fn all(len: usize) -> impl Iterator<Item = Bitstring> {
        assert!(len < 64);
        (0..1u64 << len).map(move |v| Bitstring::from_u64(v, len))
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bitstring({self})")
    }
}

impl FromStr for Bitstring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => invalid(format!("bitstring character {other:?}")),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Bitstring { bits })
    }
}

impl Serialize for Bitstring {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Bitstring {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Mask with the low `n` bits set.
pub fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf2Matrix {
    rows: usize,
    cols: usize,
    entries: Vec<bool>,
}

impl Gf2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![false; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged matrix rows");
        }
        Ok(Self { rows: rows.len(), cols, entries: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> Bitstring {
        Bitstring::from_bits(self.entries[i * self.cols..(i + 1) * self.cols].to_vec())
    }

    pub fn column(&self, j: usize) -> Bitstring {
        Bitstring::from_bits((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    /// Row `i` packed so that column `j` sits at integer weight `2^(cols-1-j)`.
    pub fn row_masks(&self) -> Vec<u64> {
        assert!(self.cols <= 64);
        (0..self.rows)
            .map(|i| (0..self.cols).fold(0u64, |acc, j| (acc << 1) | self.get(i, j) as u64))
            .collect()
    }
}

pub fn gf2_matvec(m: &Gf2Matrix, x: &Bitstring) -> Result<Bitstring> {
    if x.len() != m.cols {
        return invalid(format!("matrix has {} columns, vector has length {}", m.cols, x.len()));
    }
    let bits = (0..m.rows)
        .map(|i| (0..m.cols).fold(false, |acc, j| acc ^ (m.get(i, j) & x.get(j))))
        .collect();
    Ok(Bitstring::from_bits(bits))
}

/// Packed product of row masks (see [`Gf2Matrix::row_masks`]) with `x`.
#[inline]
pub fn matvec_masks(rows: &[u64], x: u64) -> u64 {
    rows.iter().fold(0u64, |acc, &r| (acc << 1) | ((r & x).count_ones() & 1) as u64)
}

pub fn toeplitz_from_seed(seed: &Bitstring, rows: usize, cols: usize) -> Result<Gf2Matrix> {
    if rows == 0 || cols == 0 {
        if !seed.is_empty() {
            return invalid("degenerate Toeplitz matrix takes an empty seed");
        }
        return Ok(Gf2Matrix::zeros(rows, cols));
    }
    if seed.len() != rows + cols - 1 {
        return invalid(format!(
            "Toeplitz {rows}x{cols} needs seed length {}, got {}",
            rows + cols - 1,
            seed.len()
        ));
    }
    let mut m = Gf2Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m.set(i, j, seed.get(i + cols - 1 - j));
        }
    }
    Ok(m)
}

/// Row masks of the Toeplitz matrix for a packed seed of `rows+cols-1` bits.
pub fn toeplitz_row_masks(seed: u64, rows: usize, cols: usize) -> Vec<u64> {
    if rows == 0 || cols == 0 {
        return vec![0; rows];
    }
    let d = rows + cols - 1;
    (0..rows)
        .map(|i| {
            (0..cols).fold(0u64, |acc, j| {
                let s = i + cols - 1 - j;
                (acc << 1) | ((seed >> (d - 1 - s)) & 1)
            })
        })
        .collect()
}

/// Irreducible moduli indexed by degree, with the leading term included.
const MODULI: [u32; 17] = [
    0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x83, 0x11B, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443,
    0x8003, 0x1100B,
];

pub const MAX_FIELD_DEGREE: u32 = 16;

/// Irreducible modulus of GF(2^m) used throughout the crate.
pub fn field_modulus(m: u32) -> Result<u32> {
    if m == 0 || m > MAX_FIELD_DEGREE {
        return invalid(format!("no field modulus for degree {m}"));
    }
    Ok(MODULI[m as usize])
}

/// Product in GF(2^m) of packed elements `a`, `b` under `modulus`.
#[inline]
pub fn gf_mul_raw(a: u32, b: u32, m: u32, modulus: u32) -> u32 {
    let mut prod: u64 = 0;
    let mut b = b as u64;
    let a = a as u64;
    let mut shift = 0;
    while b != 0 {
        if b & 1 == 1 {
            prod ^= a << shift;
        }
        b >>= 1;
        shift += 1;
    }
    let modulus = modulus as u64;
    for deg in (m as u64..(2 * m as u64).max(m as u64 + 1)).rev() {
        if prod >> deg & 1 == 1 {
            prod ^= modulus << (deg - m as u64);
        }
    }
    prod as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GfElement {
    value: u32,
    degree: u32,
}

impl GfElement {
    pub fn new(value: u32, degree: u32) -> Result<Self> {
        field_modulus(degree)?;
        if value >> degree != 0 {
            return invalid(format!("value {value:#x} outside GF(2^{degree})"));
        }
        Ok(Self { value, degree })
    }

    pub fn zero(degree: u32) -> Result<Self> {
        Self::new(0, degree)
    }

    pub fn one(degree: u32) -> Result<Self> {
        Self::new(1, degree)
    }

    pub fn from_bitstring(bits: &Bitstring) -> Result<Self> {
        Self::new(bits.to_u64()? as u32, bits.len() as u32)
    }

    pub fn to_bitstring(&self) -> Bitstring {
        Bitstring::from_u64(self.value as u64, self.degree as usize)
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn modulus(&self) -> u32 {
        MODULI[self.degree as usize]
    }

    pub fn add(&self, other: &GfElement) -> Result<GfElement> {
        check_same_field(self, other)?;
        Ok(GfElement { value: self.value ^ other.value, degree: self.degree })
    }

    pub fn pow(&self, mut e: u64) -> GfElement {
        let mut base = *self;
        let mut acc = GfElement { value: 1, degree: self.degree };
        while e > 0 {
            if e & 1 == 1 {
                acc = mul_unchecked(&acc, &base);
            }
            base = mul_unchecked(&base, &base);
            e >>= 1;
        }
        acc
    }

    pub fn inverse(&self) -> Result<GfElement> {
        if self.value == 0 {
            return invalid("zero has no inverse");
        }
        Ok(self.pow((1u64 << self.degree) - 2))
    }
}

fn check_same_field(a: &GfElement, b: &GfElement) -> Result<()> {
    if a.degree != b.degree {
        return invalid(format!("field degrees {} and {} differ", a.degree, b.degree));
    }
    Ok(())
}

fn mul_unchecked(a: &GfElement, b: &GfElement) -> GfElement {
    GfElement {
        value: gf_mul_raw(a.value, b.value, a.degree, a.modulus()),
        degree: a.degree,
    }
}

pub fn gf_mul(a: &GfElement, b: &GfElement) -> Result<GfElement> {
    check_same_field(a, b)?;
    Ok(mul_unchecked(a, b))
}

pub fn hamming(x: &Bitstring, y: &Bitstring) -> Result<usize> {
    if x.len() != y.len() {
        return invalid(format!("hamming distance of lengths {} and {}", x.len(), y.len()));
    }
    Ok(x.bits().iter().zip(y.bits()).filter(|(a, b)| a != b).count())
}

pub fn binary_entropy(phi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&phi) {
        return invalid(format!("binary entropy argument {phi} outside [0,1]"));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(phi) + term(1.0 - phi))
}

/// Packed error masks of weight at most `radius` on `n` bits, by weight then value.
pub fn hamming_ball_masks(n: usize, radius: usize) -> Vec<u64> {
    let mut masks: Vec<u64> = (0..1u64 << n).filter(|m| m.count_ones() as usize <= radius).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
}

/// Explicit set of equal-length codewords.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearCode {
    codewords: Vec<Bitstring>,
}

impl LinearCode {
    pub fn new(codewords: Vec<Bitstring>) -> Result<Self> {
        let Some(first) = codewords.first() else {
            return invalid("a code needs at least one codeword");
        };
        let n = first.len();
        if codewords.iter().any(|c| c.len() != n) {
            return invalid("codewords of unequal length");
        }
        let mut sorted = codewords.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != codewords.len() {
            return invalid("duplicate codewords");
        }
        Ok(Self { codewords })
    }

    pub fn parse(words: &[&str]) -> Result<Self> {
        Self::new(words.iter().map(|w| w.parse()).collect::<Result<Vec<_>>>()?)
    }

    pub fn n(&self) -> usize {
        self.codewords[0].len()
    }

    pub fn size(&self) -> usize {
        self.codewords.len()
    }

    pub fn codewords(&self) -> &[Bitstring] {
        &self.codewords
    }

    pub fn contains(&self, w: &Bitstring) -> bool {
        self.codewords.contains(w)
    }

    /// `None` for a single codeword, where no pair exists.
    pub fn min_distance(&self) -> Option<usize> {
        let c = &self.codewords;
        (0..c.len())
            .flat_map(|i| (i + 1..c.len()).map(move |j| (i, j)))
            .map(|(i, j)| hamming(&c[i], &c[j]).expect("equal lengths by construction"))
            .min()
    }
}

pub fn code_min_distance(c: &LinearCode) -> Result<usize> {
    c.min_distance()
        .ok_or_else(|| Error::InvalidInput("minimum distance needs at least two codewords".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    #[test]
    fn matvec_examples() {
        assert_eq!(gf2_matvec(&Gf2Matrix::identity(3), &bs("101")).unwrap(), bs("101"));
        assert_eq!(gf2_matvec(&Gf2Matrix::zeros(2, 3), &bs("111")).unwrap(), bs("00"));
        let m = Gf2Matrix::from_rows(&[vec![true, true], vec![false, true]]).unwrap();
        assert_eq!(gf2_matvec(&m, &bs("10")).unwrap(), bs("10"));
        assert!(gf2_matvec(&m, &bs("101")).is_err());
    }

    #[test]
    fn toeplitz_examples() {
        let m = toeplitz_from_seed(&bs("111"), 2, 2).unwrap();
        assert!((0..2).all(|i| (0..2).all(|j| m.get(i, j))));
        let z = toeplitz_from_seed(&bs("0000"), 2, 3).unwrap();
        assert_eq!(z, Gf2Matrix::zeros(2, 3));
        // entry(i,j) = seed[i-j+cols-1]
        let t = toeplitz_from_seed(&bs("10110"), 3, 3).unwrap();
        assert_eq!(t.row(0), bs("101"));
        assert_eq!(t.column(0), bs("110"));
        assert!(toeplitz_from_seed(&bs("1011"), 3, 3).is_err());
    }

    #[test]
    fn toeplitz_masks_agree_with_matrix() {
        for seed in 0..1u64 << 6 {
            let m = toeplitz_from_seed(&Bitstring::from_u64(seed, 6), 3, 4).unwrap();
            assert_eq!(m.row_masks(), toeplitz_row_masks(seed, 3, 4));
        }
    }

    #[test]
    fn gf4_table() {
        let x = GfElement::new(0b10, 2).unwrap();
        assert_eq!(gf_mul(&x, &x).unwrap().value(), 0b11);
        let one = GfElement::one(2).unwrap();
        let zero = GfElement::zero(2).unwrap();
        for v in 0..4 {
            let b = GfElement::new(v, 2).unwrap();
            assert_eq!(gf_mul(&one, &b).unwrap(), b);
            assert_eq!(gf_mul(&zero, &b).unwrap(), zero);
        }
        assert!(gf_mul(&x, &GfElement::one(3).unwrap()).is_err());
    }

    /// Trial division by every polynomial of degree 1..=m/2.
    fn irreducible_oracle(p: u64, m: u32) -> bool {
        let deg = |q: u64| 63 - q.leading_zeros();
        let rem = |mut a: u64, b: u64| {
            while a != 0 && deg(a) >= deg(b) {
                a ^= b << (deg(a) - deg(b));
            }
            a
        };
        (2u64..1 << (m / 2 + 1)).all(|q| rem(p, q) != 0)
    }

    #[test]
    fn moduli_are_irreducible() {
        for m in 1..=MAX_FIELD_DEGREE {
            let p = field_modulus(m).unwrap() as u64;
            assert_eq!(63 - p.leading_zeros(), m);
            assert!(irreducible_oracle(p, m), "degree {m}");
        }
    }

    #[test]
    fn field_axioms_exhaustive_small() {
        for m in 1..=4u32 {
            let els: Vec<_> = (0..1u32 << m).map(|v| GfElement::new(v, m).unwrap()).collect();
            for a in &els {
                if a.value() != 0 {
                    let inv = a.inverse().unwrap();
                    assert_eq!(gf_mul(a, &inv).unwrap().value(), 1);
                }
                for b in &els {
                    assert_eq!(gf_mul(a, b).unwrap(), gf_mul(b, a).unwrap());
                    for c in &els {
                        let ab_c = gf_mul(&gf_mul(a, b).unwrap(), c).unwrap();
                        let a_bc = gf_mul(a, &gf_mul(b, c).unwrap()).unwrap();
                        assert_eq!(ab_c, a_bc);
                        let lhs = gf_mul(a, &b.add(c).unwrap()).unwrap();
                        let rhs = gf_mul(a, b).unwrap().add(&gf_mul(a, c).unwrap()).unwrap();
                        assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming(&bs("0110"), &bs("0110")).unwrap(), 0);
        assert_eq!(hamming(&bs("000"), &bs("111")).unwrap(), 3);
        assert_eq!(hamming(&bs("0110"), &bs("0011")).unwrap(), 2);
        assert!(hamming(&bs("0"), &bs("00")).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((binary_entropy(0.25).unwrap() - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn code_examples() {
        assert_eq!(code_min_distance(&LinearCode::parse(&["000", "111"]).unwrap()).unwrap(), 3);
        assert_eq!(
            code_min_distance(&LinearCode::parse(&["00", "01", "10", "11"]).unwrap()).unwrap(),
            1
        );
        let c = LinearCode::parse(&["0000", "0111", "1011", "1100"]).unwrap();
        assert_eq!(code_min_distance(&c).unwrap(), 2);
        assert!(code_min_distance(&LinearCode::parse(&["01"]).unwrap()).is_err());
    }

    #[test]
    fn bitstring_roundtrip() {
        let b = bs("0010110");
        assert_eq!(b.to_u64().unwrap(), 0b0010110);
        assert_eq!(Bitstring::from_u64(0b0010110, 7), b);
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, "\"0010110\"");
        assert_eq!(serde_json::from_str::<Bitstring>(&json).unwrap(), b);
        assert!("012".parse::<Bitstring>().is_err());
    }

    #[test]
    fn ball_masks() {
        let ball = hamming_ball_masks(4, 1);
        assert_eq!(ball, vec![0, 1, 2, 4, 8]);
    }
}
