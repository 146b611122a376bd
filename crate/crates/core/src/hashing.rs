//! Keyed hash families, strongly universal MACs, extractors and key-private
//! hashes, with exhaustive audits of every figure of merit they claim.
//!
//! Keys and inputs are packed integers in the crate-wide bit order. A key is
//! always laid out as `linear part || affine offset`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bitlinalg::{field_modulus, gf_mul_raw, low_mask, matvec_masks, toeplitz_row_masks, Bitstring, MAX_FIELD_DEGREE};
use crate::entropy::{pguess_classical, ClassicalJoint};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_BUDGET: u128 = 1 << 26;

/// A family {h_k : {0,1}^n → {0,1}^m} indexed by packed keys.
pub trait KeyedFunction: Sync {
    fn in_len(&self) -> usize;
    fn out_len(&self) -> usize;
    fn key_len(&self) -> usize;
    fn eval_packed(&self, key: u64, x: u64) -> u64;

    /// Outputs for every input under one key.
    fn table(&self, key: u64) -> Vec<u64> {
        (0..1u64 << self.in_len()).map(|x| self.eval_packed(key, x)).collect()
    }

    fn eval(&self, key: &Bitstring, x: &Bitstring) -> Result<Bitstring> {
        if key.len() != self.key_len() || x.len() != self.in_len() {
            return invalid(format!(
                "expected key {} / input {} bits, got {} / {}",
                self.key_len(),
                self.in_len(),
                key.len(),
                x.len()
            ));
        }
        Ok(Bitstring::from_u64(self.eval_packed(key.to_u64()?, x.to_u64()?), self.out_len()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    ToeplitzAffine,
    GfMultiplyAffine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HashFamily {
    kind: FamilyKind,
    n: usize,
    m: usize,
}

impl HashFamily {
    pub fn new(kind: FamilyKind, n: usize, m: usize) -> Result<Self> {
        match kind {
            FamilyKind::ToeplitzAffine => {
                if n == 0 || n > 32 || m > 32 {
                    return invalid(format!("toeplitz-affine {n}->{m} outside supported sizes"));
                }
            }
            FamilyKind::GfMultiplyAffine => {
                if n == 0 || n > MAX_FIELD_DEGREE as usize || m > n {
                    return invalid(format!("gf-multiply-affine {n}->{m} needs 1 <= m <= n <= 16"));
                }
            }
        }
        Ok(Self { kind, n, m })
    }

    pub fn toeplitz(n: usize, m: usize) -> Result<Self> {
        Self::new(FamilyKind::ToeplitzAffine, n, m)
    }

    pub fn gf(n: usize, m: usize) -> Result<Self> {
        Self::new(FamilyKind::GfMultiplyAffine, n, m)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Bits of the linear part of the key.
    pub fn linear_key_len(&self) -> usize {
        match self.kind {
            FamilyKind::ToeplitzAffine if self.m == 0 => 0,
            FamilyKind::ToeplitzAffine => self.n + self.m - 1,
            FamilyKind::GfMultiplyAffine => self.n,
        }
    }

    fn split_key(&self, key: u64) -> (u64, u64) {
        (key >> self.m, key & low_mask(self.m))
    }
}

impl KeyedFunction for HashFamily {
    fn in_len(&self) -> usize {
        self.n
    }

    fn out_len(&self) -> usize {
        self.m
    }

    fn key_len(&self) -> usize {
        self.linear_key_len() + self.m
    }

    fn eval_packed(&self, key: u64, x: u64) -> u64 {
        let (lin, b) = self.split_key(key);
        match self.kind {
            FamilyKind::ToeplitzAffine => matvec_masks(&toeplitz_row_masks(lin, self.m, self.n), x) ^ b,
            FamilyKind::GfMultiplyAffine => {
                let modulus = field_modulus(self.n as u32).expect("checked at construction");
                (gf_mul_raw(x as u32, lin as u32, self.n as u32, modulus) as u64 & low_mask(self.m)) ^ b
            }
        }
    }

    fn table(&self, key: u64) -> Vec<u64> {
        let (lin, b) = self.split_key(key);
        match self.kind {
            FamilyKind::ToeplitzAffine => {
                let rows = toeplitz_row_masks(lin, self.m, self.n);
                (0..1u64 << self.n).map(|x| matvec_masks(&rows, x) ^ b).collect()
            }
            FamilyKind::GfMultiplyAffine => (0..1u64 << self.n).map(|x| self.eval_packed(key, x)).collect(),
        }
    }
}

/// JSON form `{kind, n, m, r, nu}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default = "one")]
    pub nu: f64,
}

fn one() -> f64 {
    1.0
}

impl FamilySpec {
    pub fn family(&self) -> Result<HashFamily> {
        let f = HashFamily::new(self.kind, self.n, self.m)?;
        if let Some(r) = self.r {
            if r != f.key_len() {
                return invalid(format!("declared key length {r}, family needs {}", f.key_len()));
            }
        }
        Ok(f)
    }

    pub fn of(f: &HashFamily, nu: f64) -> Self {
        Self { kind: f.kind, n: f.n, m: f.m, r: Some(f.key_len()), nu }
    }
}

pub fn hash_eval(family: &HashFamily, key: &Bitstring, x: &Bitstring) -> Result<Bitstring> {
    family.eval(key, x)
}

/// Exhaustive figure with the pair that attains it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditResult {
    pub epsilon: f64,
    pub count: u64,
    pub total: u64,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub x1: Bitstring,
    pub x2: Bitstring,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<Bitstring>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2: Option<Bitstring>,
}

pub fn check_budget(required: u128, budget: u128) -> Result<()> {
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(())
}

fn pow2(k: usize) -> u128 {
    1u128 << k
}

fn all_tables(h: &dyn KeyedFunction) -> Vec<Vec<u64>> {
    (0..1u64 << h.key_len()).map(|k| h.table(k)).collect()
}

/// max_{x≠x'} Pr_k[h_k(x) = h_k(x')].
pub fn audit_universality(h: &dyn KeyedFunction, budget: u128) -> Result<AuditResult> {
    let (n, r) = (h.in_len(), h.key_len());
    check_budget(pow2(r) * pow2(2 * n), budget)?;
    let size = 1usize << n;
    let mut counts = vec![0u64; size * size];
    for k in 0..1u64 << r {
        let t = h.table(k);
        for a in 0..size {
            for b in a + 1..size {
                if t[a] == t[b] {
                    counts[a * size + b] += 1;
                }
            }
        }
    }
    let mut best = (0u64, None);
    for a in 0..size {
        for b in a + 1..size {
            if best.1.is_none() || counts[a * size + b] > best.0 {
                best = (counts[a * size + b], Some((a, b)));
            }
        }
    }
    let total = 1u64 << r;
    Ok(AuditResult {
        epsilon: best.0 as f64 / total as f64,
        count: best.0,
        total,
        witness: best.1.map(|(a, b)| Witness {
            x1: Bitstring::from_u64(a as u64, n),
            x2: Bitstring::from_u64(b as u64, n),
            t1: None,
            t2: None,
        }),
    })
}

/// Strongly universal MAC φ(x∗y) ⊕ b over GF(2^{n_mac}).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacSpec {
    family: HashFamily,
    pub eps_mac: f64,
}

impl MacSpec {
    pub fn new(n_mac: usize, m_mac: usize) -> Result<Self> {
        let family = HashFamily::gf(n_mac, m_mac)?;
        Ok(Self { family, eps_mac: 1.0 / (1u64 << m_mac) as f64 })
    }

    pub fn msg_len(&self) -> usize {
        self.family.n
    }

    pub fn tag_len(&self) -> usize {
        self.family.m
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }
}

impl KeyedFunction for MacSpec {
    fn in_len(&self) -> usize {
        self.family.in_len()
    }
    fn out_len(&self) -> usize {
        self.family.out_len()
    }
    fn key_len(&self) -> usize {
        self.family.key_len()
    }
    fn eval_packed(&self, key: u64, x: u64) -> u64 {
        self.family.eval_packed(key, x)
    }
    fn table(&self, key: u64) -> Vec<u64> {
        self.family.table(key)
    }
}

pub fn mac_eval(spec: &MacSpec, key: &Bitstring, msg: &Bitstring) -> Result<Bitstring> {
    spec.eval(key, msg)
}

/// max_{x1≠x2, t1, t2} Pr_k[h_k(x1)=t1 ∧ h_k(x2)=t2] · 2^m.
pub fn audit_strong_universality(h: &dyn KeyedFunction, budget: u128) -> Result<AuditResult> {
    let (n, m, r) = (h.in_len(), h.out_len(), h.key_len());
    check_budget(pow2(r) * pow2(2 * n), budget)?;
    let tables = all_tables(h);
    let size = 1usize << n;
    let tags = 1usize << m;
    let mut hist = vec![0u64; tags * tags];
    let mut best: (u64, Option<(usize, usize, usize, usize)>) = (0, None);
    for a in 0..size {
        for b in a + 1..size {
            hist.iter_mut().for_each(|v| *v = 0);
            for t in &tables {
                hist[t[a] as usize * tags + t[b] as usize] += 1;
            }
            for (i, &v) in hist.iter().enumerate() {
                if best.1.is_none() || v > best.0 {
                    best = (v, Some((a, b, i / tags, i % tags)));
                }
            }
        }
    }
    let total = 1u64 << r;
    Ok(AuditResult {
        epsilon: best.0 as f64 / total as f64 * tags as f64,
        count: best.0,
        total,
        witness: best.1.map(|(a, b, t1, t2)| Witness {
            x1: Bitstring::from_u64(a as u64, n),
            x2: Bitstring::from_u64(b as u64, n),
            t1: Some(Bitstring::from_u64(t1 as u64, m)),
            t2: Some(Bitstring::from_u64(t2 as u64, m)),
        }),
    })
}

/// Pr_k[h_k(x) ⊕ h_k(y) ≠ h_k(x⊕y) ⊕ h_k(0)] is zero for every (k, x, y).
pub fn audit_affine_linearity(h: &dyn KeyedFunction, budget: u128) -> Result<bool> {
    let (n, r) = (h.in_len(), h.key_len());
    check_budget(pow2(r) * pow2(2 * n), budget)?;
    Ok((0..1u64 << r).all(|k| {
        let t = h.table(k);
        (0..t.len()).all(|a| (0..t.len()).all(|b| t[a ^ b] ^ t[0] == t[a] ^ t[b]))
    }))
}

/// For every x, h(x, L) is exactly uniform over {0,1}^m for uniform L.
pub fn audit_uniformity(h: &dyn KeyedFunction, budget: u128) -> Result<bool> {
    let (n, m, r) = (h.in_len(), h.out_len(), h.key_len());
    check_budget(pow2(r) * pow2(n), budget)?;
    if r < m {
        return Ok(false);
    }
    let tables = all_tables(h);
    let expected = 1u64 << (r - m);
    Ok((0..1usize << n).all(|x| {
        let mut counts = vec![0u64; 1 << m];
        tables.iter().for_each(|t| counts[t[x] as usize] += 1);
        counts.iter().all(|&c| c == expected)
    }))
}

/// Seeded extractor backed by a hash family; the seed is the full family key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractorSpec {
    pub family: HashFamily,
    pub nu: f64,
}

impl ExtractorSpec {
    pub fn new(family: HashFamily, nu: f64) -> Self {
        Self { family, nu }
    }

    pub fn seed_len(&self) -> usize {
        self.family.key_len()
    }

    /// ε(k) = (ν/2)·√(2^{m−k}).
    pub fn error_at(&self, k: f64) -> f64 {
        extractor_error(self.nu, self.family.m, k)
    }

    pub fn rated(&self, k: f64) -> RatedExtractor {
        RatedExtractor { ext: Extractor::Leaf(*self), k, eps: self.error_at(k), subnormalized: true }
    }

    pub fn spec(&self) -> FamilySpec {
        FamilySpec::of(&self.family, self.nu)
    }
}

pub fn extractor_error(nu: f64, m: usize, k: f64) -> f64 {
    nu / 2.0 * (2f64.powf(m as f64 - k)).sqrt()
}

/// Leaf extractor or the concatenation Ext(x, s1∥s2) = Ext1(x,s1) ∥ Ext2(x,s2).
#[derive(Clone, Debug, PartialEq)]
pub enum Extractor {
    Leaf(ExtractorSpec),
    Concat(Box<Extractor>, Box<Extractor>),
}

impl KeyedFunction for Extractor {
    fn in_len(&self) -> usize {
        match self {
            Extractor::Leaf(s) => s.family.in_len(),
            Extractor::Concat(a, _) => a.in_len(),
        }
    }

    fn out_len(&self) -> usize {
        match self {
            Extractor::Leaf(s) => s.family.out_len(),
            Extractor::Concat(a, b) => a.out_len() + b.out_len(),
        }
    }

    fn key_len(&self) -> usize {
        match self {
            Extractor::Leaf(s) => s.seed_len(),
            Extractor::Concat(a, b) => a.key_len() + b.key_len(),
        }
    }

    fn eval_packed(&self, seed: u64, x: u64) -> u64 {
        match self {
            Extractor::Leaf(s) => s.family.eval_packed(seed, x),
            Extractor::Concat(a, b) => {
                let (s1, s2) = (seed >> b.key_len(), seed & low_mask(b.key_len()));
                (a.eval_packed(s1, x) << b.out_len()) | b.eval_packed(s2, x)
            }
        }
    }

    fn table(&self, seed: u64) -> Vec<u64> {
        match self {
            Extractor::Leaf(s) => s.family.table(seed),
            Extractor::Concat(a, b) => {
                let (s1, s2) = (seed >> b.key_len(), seed & low_mask(b.key_len()));
                let (t1, t2) = (a.table(s1), b.table(s2));
                t1.iter().zip(&t2).map(|(u, v)| (u << b.out_len()) | v).collect()
            }
        }
    }
}

pub fn ext_eval(ext: &Extractor, x: &Bitstring, seed: &Bitstring) -> Result<Bitstring> {
    ext.eval(seed, x)
}

/// Extractor with its claimed (k, ε) rating for subnormalized states.
#[derive(Clone, Debug, PartialEq)]
pub struct RatedExtractor {
    pub ext: Extractor,
    pub k: f64,
    pub eps: f64,
    pub subnormalized: bool,
}

pub fn lift_to_subnormalized(e: &RatedExtractor) -> RatedExtractor {
    RatedExtractor { ext: e.ext.clone(), k: e.k + 1.0, eps: 2.0 * e.eps, subnormalized: true }
}

pub fn compose_extractors(e1: &RatedExtractor, e2: &RatedExtractor) -> Result<RatedExtractor> {
    if e1.ext.in_len() != e2.ext.in_len() {
        return invalid("extractors read inputs of different lengths");
    }
    let need = e1.k - e1.ext.out_len() as f64;
    if (e2.k - need).abs() > 1e-12 {
        return invalid(format!("second extractor rated at k={}, composition needs k={need}", e2.k));
    }
    Ok(RatedExtractor {
        ext: Extractor::Concat(Box::new(e1.ext.clone()), Box::new(e2.ext.clone())),
        k: e1.k,
        eps: e1.eps + e2.eps,
        subnormalized: e1.subnormalized && e2.subnormalized,
    })
}

/// ½‖P_{Ext(X,S) S E} − U_K ⊗ U_S ⊗ P_E‖₁ by enumeration over seeds and inputs.
pub fn measure_extractor_distance(ext: &dyn KeyedFunction, source: &ClassicalJoint, budget: u128) -> Result<f64> {
    if source.x_bits() != ext.in_len() {
        return invalid(format!("source over {} bits, extractor reads {}", source.x_bits(), ext.in_len()));
    }
    let (d, m) = (ext.key_len(), ext.out_len());
    check_budget(pow2(d) * source.table().len().max(1) as u128, budget)?;
    let mut by_e: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for (&(x, e), &p) in source.table() {
        by_e.entry(e).or_default().push((x, p));
    }
    let uniform_k = 1.0 / (1u64 << m) as f64;
    let mut total = 0.0;
    let mut acc = vec![0.0; 1 << m];
    for s in 0..1u64 << d {
        let t = ext.table(s);
        for xs in by_e.values() {
            acc.iter_mut().for_each(|v| *v = 0.0);
            let pe: f64 = xs.iter().map(|&(_, p)| p).sum();
            for &(x, p) in xs {
                acc[t[x as usize] as usize] += p;
            }
            total += acc.iter().map(|&v| (v - uniform_k * pe).abs()).sum::<f64>();
        }
    }
    Ok(0.5 * total / (1u64 << d) as f64)
}

/// h(x, ℓ1∥ℓ2) = Ext(x, ℓ1) ⊕ ℓ2.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyPrivateHash {
    pub ext: Extractor,
    pub nu: f64,
}

pub fn key_private_hash(spec: &ExtractorSpec) -> KeyPrivateHash {
    KeyPrivateHash { ext: Extractor::Leaf(*spec), nu: spec.nu }
}

impl KeyedFunction for KeyPrivateHash {
    fn in_len(&self) -> usize {
        self.ext.in_len()
    }
    fn out_len(&self) -> usize {
        self.ext.out_len()
    }
    fn key_len(&self) -> usize {
        self.ext.key_len() + self.ext.out_len()
    }
    fn eval_packed(&self, key: u64, x: u64) -> u64 {
        let m = self.ext.out_len();
        self.ext.eval_packed(key >> m, x) ^ (key & low_mask(m))
    }
    fn table(&self, key: u64) -> Vec<u64> {
        let m = self.ext.out_len();
        let off = key & low_mask(m);
        self.ext.table(key >> m).into_iter().map(|v| v ^ off).collect()
    }
}

/// h(x, ℓ1∥ℓ2) = t ∥ h2(x∥t, ℓ2) with t = h1(x, ℓ1).
pub struct Sequential<'a> {
    pub h1: &'a dyn KeyedFunction,
    pub h2: &'a dyn KeyedFunction,
}

impl<'a> Sequential<'a> {
    pub fn new(h1: &'a dyn KeyedFunction, h2: &'a dyn KeyedFunction) -> Result<Self> {
        if h2.in_len() != h1.in_len() + h1.out_len() {
            return invalid("second function must read x followed by the first tag");
        }
        Ok(Self { h1, h2 })
    }
}

impl KeyedFunction for Sequential<'_> {
    fn in_len(&self) -> usize {
        self.h1.in_len()
    }
    fn out_len(&self) -> usize {
        self.h1.out_len() + self.h2.out_len()
    }
    fn key_len(&self) -> usize {
        self.h1.key_len() + self.h2.key_len()
    }
    fn eval_packed(&self, key: u64, x: u64) -> u64 {
        let k2 = self.h2.key_len();
        let t = self.h1.eval_packed(key >> k2, x);
        let m1 = self.h1.out_len();
        (t << self.h2.out_len()) | self.h2.eval_packed(key & low_mask(k2), (x << m1) | t)
    }
}

/// Realized key-privacy ratio on one classical instance.
#[derive(Clone, Debug, Serialize)]
pub struct KeyPrivacyReport {
    pub lhs: f64,
    pub hmin_x_given_te: f64,
    pub scale: f64,
    pub ratio: f64,
}

/// ‖ρ_LTE − τ_L ⊗ ρ_TE‖₁ against √(2^{−Hmin(X|TE)+m}); the final side
/// register is `post(x, t, e)` so that L ↔ XT ↔ E holds by construction.
pub fn key_privacy_ratio(
    h: &dyn KeyedFunction,
    source: &ClassicalJoint,
    post: &dyn Fn(u64, u64, u64) -> u64,
    budget: u128,
) -> Result<KeyPrivacyReport> {
    let (r, m) = (h.key_len(), h.out_len());
    check_budget(pow2(r) * source.table().len().max(1) as u128, budget)?;
    let keys = 1usize << r;
    let w_l = 1.0 / keys as f64;
    let mut groups: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    let mut x_te: Vec<((u64, u64), f64)> = Vec::new();
    let mut te_index: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for l in 0..keys as u64 {
        let t = h.table(l);
        for (&(x, e), &p) in source.table() {
            let tv = t[x as usize];
            let e2 = post(x, tv, e);
            let w = w_l * p;
            groups.entry((tv, e2)).or_insert_with(|| vec![0.0; keys])[l as usize] += w;
            let next = te_index.len() as u64;
            let idx = *te_index.entry((tv, e2)).or_insert(next);
            x_te.push(((x, idx), w));
        }
    }
    let mut lhs = 0.0;
    for per_l in groups.values() {
        let b: f64 = per_l.iter().sum();
        lhs += per_l.iter().map(|&a| (a - w_l * b).abs()).sum::<f64>();
    }
    let joint = ClassicalJoint::new(source.x_bits(), x_te)?;
    let pg = pguess_classical(&joint);
    let hmin = crate::entropy::neg_log2(pg);
    let scale = (pg * (1u64 << m) as f64).sqrt();
    let ratio = if scale > 0.0 { lhs / scale } else { 0.0 };
    Ok(KeyPrivacyReport { lhs, hmin_x_given_te: hmin, scale, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitlinalg::{gf2_matvec, toeplitz_from_seed};

    fn bs(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    /// Always outputs zero.
    struct Constant {
        n: usize,
        m: usize,
    }

    impl KeyedFunction for Constant {
        fn in_len(&self) -> usize {
            self.n
        }
        fn out_len(&self) -> usize {
            self.m
        }
        fn key_len(&self) -> usize {
            1
        }
        fn eval_packed(&self, _: u64, _: u64) -> u64 {
            0
        }
    }

    /// Keyless identity on n bits.
    struct Identity(usize);

    impl KeyedFunction for Identity {
        fn in_len(&self) -> usize {
            self.0
        }
        fn out_len(&self) -> usize {
            self.0
        }
        fn key_len(&self) -> usize {
            0
        }
        fn eval_packed(&self, _: u64, x: u64) -> u64 {
            x
        }
    }

    #[test]
    fn eval_examples() {
        let t = HashFamily::toeplitz(4, 2).unwrap();
        for x in Bitstring::all(4) {
            assert_eq!(hash_eval(&t, &Bitstring::zeros(t.key_len()), &x).unwrap(), bs("00"));
        }
        let g = HashFamily::gf(4, 2).unwrap();
        let key = bs("0001").concat(&bs("00"));
        for x in Bitstring::all(4) {
            assert_eq!(hash_eval(&g, &key, &x).unwrap(), x.slice(2, 4));
        }
        // independent matrix oracle
        let key = bs("10110").concat(&bs("01"));
        let x = bs("1101");
        let m = toeplitz_from_seed(&bs("10110"), 2, 4).unwrap();
        let expect = gf2_matvec(&m, &x).unwrap().xor(&bs("01")).unwrap();
        assert_eq!(hash_eval(&t, &key, &x).unwrap(), expect);
        assert!(hash_eval(&t, &bs("1"), &x).is_err());
    }

    #[test]
    fn universality_examples() {
        let t = HashFamily::toeplitz(4, 2).unwrap();
        let a = audit_universality(&t, DEFAULT_BUDGET).unwrap();
        assert!(a.epsilon <= 0.25);
        assert_eq!(audit_universality(&Constant { n: 3, m: 2 }, DEFAULT_BUDGET).unwrap().epsilon, 1.0);
        assert_eq!(audit_universality(&Identity(3), DEFAULT_BUDGET).unwrap().epsilon, 0.0);
        assert!(matches!(audit_universality(&t, 10), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn mac_examples() {
        let spec = MacSpec::new(2, 2).unwrap();
        for key in Bitstring::all(4) {
            let b = key.slice(2, 4);
            assert_eq!(mac_eval(&spec, &key, &bs("00")).unwrap(), b);
        }
        // x = 10 (the element x), y = 11 (x+1): product 1 = 01
        for b in Bitstring::all(2) {
            let key = bs("11").concat(&b);
            assert_eq!(mac_eval(&spec, &key, &bs("10")).unwrap(), bs("01").xor(&b).unwrap());
        }
        let a = audit_strong_universality(&spec, DEFAULT_BUDGET).unwrap();
        assert_eq!(a.epsilon, 0.25);
        let c = audit_strong_universality(&Constant { n: 2, m: 2 }, DEFAULT_BUDGET).unwrap();
        assert_eq!(c.epsilon, 4.0);
    }

    #[test]
    fn extractor_examples() {
        let e = Extractor::Leaf(ExtractorSpec::new(HashFamily::toeplitz(4, 1).unwrap(), 1.0));
        assert_eq!(ext_eval(&e, &bs("1011"), &Bitstring::zeros(5)).unwrap(), bs("0"));
        // diagonal seed on a square matrix reads x back
        let sq = Extractor::Leaf(ExtractorSpec::new(HashFamily::toeplitz(3, 3).unwrap(), 1.0));
        let seed = bs("00100").concat(&bs("000"));
        for x in Bitstring::all(3) {
            assert_eq!(ext_eval(&sq, &x, &seed).unwrap(), x);
        }
        let seed = bs("1011");
        let x = bs("0111");
        let oracle = gf2_matvec(&toeplitz_from_seed(&seed, 1, 4).unwrap(), &x).unwrap();
        assert_eq!(ext_eval(&e, &x, &seed.concat(&bs("0"))).unwrap(), oracle);
    }

    #[test]
    fn extractor_distance_examples() {
        let e = Extractor::Leaf(ExtractorSpec::new(HashFamily::toeplitz(4, 1).unwrap(), 1.0));
        // only the zero linear part (1 of 16) leaves the output unmixed
        let d = measure_extractor_distance(&e, &ClassicalJoint::uniform(4), DEFAULT_BUDGET).unwrap();
        assert!((d - 1.0 / 32.0).abs() < 1e-15);
        assert!(d <= extractor_error(1.0, 1, 4.0));
        let det = ClassicalJoint::new(4, [((6, 0), 1.0)]).unwrap();
        assert!(measure_extractor_distance(&e, &det, DEFAULT_BUDGET).unwrap() <= 0.5 + 1e-15);
    }

    #[test]
    fn rating_transforms() {
        let spec = ExtractorSpec::new(HashFamily::toeplitz(4, 1).unwrap(), 1.0);
        let r = RatedExtractor { ext: Extractor::Leaf(spec), k: 2.0, eps: 0.25, subnormalized: true };
        let l = lift_to_subnormalized(&r);
        assert_eq!((l.k, l.eps), (3.0, 0.5));
        let zero = ExtractorSpec::new(HashFamily::toeplitz(4, 0).unwrap(), 1.0).rated(1.0);
        let c = compose_extractors(&r, &zero).unwrap();
        assert_eq!(c.ext.key_len(), r.ext.key_len());
        for s in 0..1u64 << c.ext.key_len() {
            assert_eq!(c.ext.table(s), r.ext.table(s));
        }
        assert!(compose_extractors(&r, &spec.rated(2.0)).is_err());
    }

    #[test]
    fn key_private_examples() {
        let kp = key_private_hash(&ExtractorSpec::new(HashFamily::toeplitz(3, 2).unwrap(), 1.0));
        assert!(audit_uniformity(&kp, DEFAULT_BUDGET).unwrap());
        let key = 0b1011_0110_01u64 & low_mask(kp.key_len());
        for x in 0..8 {
            assert_eq!(kp.eval_packed(key ^ 0b01, x), kp.eval_packed(key, x) ^ 0b01);
        }
        assert!(audit_affine_linearity(&HashFamily::gf(3, 2).unwrap(), DEFAULT_BUDGET).unwrap());
    }
}
