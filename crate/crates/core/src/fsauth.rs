//! Quantum authentication with key recycling: conjugate-coded ciphers, a
//! key-private sketch, a strongly universal MAC, the attack harness and the
//! exact audits behind each security clause.
//!
//! Ciphers of unattacked or Pauli/measure-resend-attacked sessions stay BB84
//! product states; anything entangling falls back to the dense engine.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitlinalg::{binary_entropy, hamming_ball_masks, low_mask, Bitstring, LinearCode};
use crate::distill::hoeffding_width;
use crate::entropy::{hmin_from_pguess, neg_log2, pguess_classical, pguess_operators, Bracket, ClassicalJoint, DEFAULT_ITERATION_CAP, DEFAULT_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::hashing::{audit_strong_universality, check_budget, key_private_hash, ExtractorSpec, HashFamily, KeyPrivateHash, KeyedFunction, MacSpec};
use crate::quantum::{c, conjugate_code_vector, kron, measure_bb, pauli, CMatrix, CVector, DensityOperator};

#[derive(Clone, Debug, PartialEq)]
pub struct FsParams {
    pub n: usize,
    pub m: usize,
    pub code: LinearCode,
    pub ss: KeyPrivateHash,
    pub mac: MacSpec,
    pub phi: f64,
    pub k: f64,
}

impl FsParams {
    /// θ rated at `k`; `None` means uniform over the code.
    pub fn new(n: usize, m: usize, code: LinearCode, m_ss: usize, m_mac: usize, phi: f64, k: Option<f64>) -> Result<Self> {
        if code.n() != n {
            return invalid(format!("code length {} differs from n={n}", code.n()));
        }
        if n > 10 || !(0.0..=1.0).contains(&phi) {
            return invalid(format!("n={n} or phi={phi} outside the supported range"));
        }
        let ss = key_private_hash(&ExtractorSpec::new(HashFamily::toeplitz(n, m_ss)?, 1.0));
        let mac = MacSpec::new(n + m + m_ss, m_mac)?;
        let k = k.unwrap_or_else(|| (code.size() as f64).log2());
        Ok(Self { n, m, code, ss, mac, phi, k })
    }

    pub fn m_ss(&self) -> usize {
        self.ss.out_len()
    }

    pub fn m_mac(&self) -> usize {
        self.mac.tag_len()
    }

    pub fn r_ss(&self) -> usize {
        self.ss.key_len()
    }

    pub fn r_mac(&self) -> usize {
        self.mac.key_len()
    }

    pub fn radius(&self) -> usize {
        (self.phi * self.n as f64 + 1e-9).floor() as usize
    }

    /// Minimum code distance; `None` for a single codeword.
    pub fn distance(&self) -> Option<usize> {
        self.code.min_distance()
    }

    fn mac_input(&self, x: u64, y: u64, s: u64) -> u64 {
        (((x << self.m) | y) << self.m_ss()) | s
    }

    fn ball_by_weight(&self) -> Vec<Vec<u64>> {
        let mut out = vec![Vec::new(); self.radius() + 1];
        for b in hamming_ball_masks(self.n, self.radius()) {
            out[b.count_ones() as usize].push(b);
        }
        out
    }
}

/// Nearest preimage of `s` around `x_tilde`; ties or nothing within φn fail.
fn recover_with(ss_table: &[u64], shells: &[Vec<u64>], s: u64, x_tilde: u64) -> Option<u64> {
    for shell in shells {
        let mut found = None;
        for &b in shell {
            if ss_table[(x_tilde ^ b) as usize] == s {
                if found.is_some() {
                    return None;
                }
                found = Some(x_tilde ^ b);
            }
        }
        if found.is_some() {
            return found;
        }
    }
    None
}

/// rec[ℓ_ss][s][x̃] for exhaustive loops; `u64::MAX` marks failure.
struct RecoveryTable {
    per_key: usize,
    n: usize,
    m_ss: usize,
    entries: Vec<u64>,
    ss: Vec<Vec<u64>>,
}

impl RecoveryTable {
    fn build(p: &FsParams) -> Self {
        let shells = p.ball_by_weight();
        let (n, m_ss) = (p.n, p.m_ss());
        let per_key = 1usize << (n + m_ss);
        let keys = 1u64 << p.r_ss();
        let mut entries = Vec::with_capacity(per_key * keys as usize);
        let mut ss = Vec::with_capacity(keys as usize);
        for l in 0..keys {
            let t = p.ss.table(l);
            for s in 0..1u64 << m_ss {
                for xt in 0..1u64 << n {
                    entries.push(recover_with(&t, &shells, s, xt).unwrap_or(u64::MAX));
                }
            }
            ss.push(t);
        }
        Self { per_key, n, m_ss, entries, ss }
    }

    fn get(&self, l: usize, s: u64, xt: u64) -> Option<u64> {
        let _ = self.m_ss;
        let v = self.entries[l * self.per_key + ((s as usize) << self.n) + xt as usize];
        (v != u64::MAX).then_some(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsKeys {
    pub l_ss: Bitstring,
    pub l_mac: Bitstring,
    pub theta: Option<Bitstring>,
}

impl FsKeys {
    /// Uniform ℓ keys and θ uniform over the code.
    pub fn random(p: &FsParams, rng: &mut impl Rng) -> Self {
        let theta = p.code.codewords()[rng.gen_range(0..p.code.size())].clone();
        Self {
            l_ss: Bitstring::from_u64(rng.gen_range(0..1u64 << p.r_ss()), p.r_ss()),
            l_mac: Bitstring::from_u64(rng.gen_range(0..1u64 << p.r_mac()), p.r_mac()),
            theta: Some(theta),
        }
    }

    fn packed(&self, p: &FsParams) -> Result<(u64, u64, u64)> {
        if self.l_ss.len() != p.r_ss() || self.l_mac.len() != p.r_mac() {
            return invalid("key lengths do not match the parameters");
        }
        let theta = self.theta.as_ref().ok_or_else(|| Error::NotRunnable("theta is ⊥".into()))?;
        if !p.code.contains(theta) {
            return invalid(format!("theta {theta} is not a codeword"));
        }
        Ok((self.l_ss.to_u64()?, self.l_mac.to_u64()?, theta.to_u64()?))
    }
}

/// Quantum part of a cipher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum QuantumPart {
    /// Qubit i is H^{basis_i}|value_i⟩.
    Product { basis: Bitstring, value: Bitstring },
    Dense { state: DensityOperator },
}

impl QuantumPart {
    pub fn to_dense(&self) -> Result<DensityOperator> {
        match self {
            QuantumPart::Product { basis, value } => Ok(DensityOperator::pure(&conjugate_code_vector(value, basis)?)),
            QuantumPart::Dense { state } => Ok(state.clone()),
        }
    }

    /// Outcome law of the θ-basis measurement.
    pub fn measure(&self, theta: u64, n: usize) -> Result<Vec<(u64, f64)>> {
        match self {
            QuantumPart::Product { basis, value } => Ok(product_outcomes(basis.to_u64()?, value.to_u64()?, theta, n)),
            QuantumPart::Dense { state } => Ok(measure_bb(state, &Bitstring::from_u64(theta, n))?
                .into_iter()
                .map(|(x, w)| (x.to_u64().expect("short"), w))
                .filter(|&(_, w)| w > 0.0)
                .collect()),
        }
    }
}

/// Matching positions read the value; the rest are uniform.
fn product_outcomes(basis: u64, value: u64, theta: u64, n: usize) -> Vec<(u64, f64)> {
    let free = (basis ^ theta) & low_mask(n);
    let fixed = value & !free;
    let p = 1.0 / (1u64 << free.count_ones()) as f64;
    subsets(free).map(|sub| (fixed | sub, p)).collect()
}

fn subsets(mask: u64) -> impl Iterator<Item = u64> {
    let mut next = Some(0u64);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == mask { None } else { Some((cur.wrapping_sub(mask)) & mask) };
        Some(cur)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cipher {
    pub y: Bitstring,
    pub s: Bitstring,
    pub t: Bitstring,
    pub quantum: QuantumPart,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Encrypted {
    pub cipher: Cipher,
    /// Kept for audits only; never part of any view.
    #[serde(skip)]
    pub x: Bitstring,
}

fn encrypt_packed(p: &FsParams, keys: &FsKeys, y: u64, x: u64) -> Result<Cipher> {
    let (lss, lmac, theta) = keys.packed(p)?;
    let s = p.ss.eval_packed(lss, x);
    let t = p.mac.eval_packed(lmac, p.mac_input(x, y, s));
    Ok(Cipher {
        y: Bitstring::from_u64(y, p.m),
        s: Bitstring::from_u64(s, p.m_ss()),
        t: Bitstring::from_u64(t, p.m_mac()),
        quantum: QuantumPart::Product { basis: Bitstring::from_u64(theta, p.n), value: Bitstring::from_u64(x, p.n) },
    })
}

/// x is drawn from a ChaCha stream seeded with `seed`.
pub fn fs_encrypt(p: &FsParams, keys: &FsKeys, y: &Bitstring, seed: u64) -> Result<Encrypted> {
    if y.len() != p.m {
        return invalid(format!("message has {} bits, expected {}", y.len(), p.m));
    }
    let x = ChaCha8Rng::seed_from_u64(seed).gen_range(0..1u64 << p.n);
    Ok(Encrypted { cipher: encrypt_packed(p, keys, y.to_u64()?, x)?, x: Bitstring::from_u64(x, p.n) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decrypted {
    pub verdict: Verdict,
    pub y: Option<Bitstring>,
    pub recycled: FsKeys,
}

/// Bob's check given his measurement outcome.
fn bob_accepts(p: &FsParams, lss: u64, lmac: u64, y: u64, s: u64, t: u64, x_tilde: u64) -> bool {
    let table = p.ss.table(lss);
    match recover_with(&table, &p.ball_by_weight(), s, x_tilde) {
        Some(x) => p.mac.eval_packed(lmac, p.mac_input(x, y, s)) == t,
        None => false,
    }
}

fn cipher_classical(p: &FsParams, c: &Cipher) -> Result<(u64, u64, u64)> {
    if c.y.len() != p.m || c.s.len() != p.m_ss() || c.t.len() != p.m_mac() {
        return invalid("cipher lengths do not match the parameters");
    }
    Ok((c.y.to_u64()?, c.s.to_u64()?, c.t.to_u64()?))
}

pub fn fs_decrypt(p: &FsParams, keys: &FsKeys, cipher: &Cipher, rng: &mut impl Rng) -> Result<Decrypted> {
    let (lss, lmac, theta) = keys.packed(p)?;
    let (y, s, t) = cipher_classical(p, cipher)?;
    let outcomes = cipher.quantum.measure(theta, p.n)?;
    let x_tilde = sample_outcome(&outcomes, rng);
    let ok = bob_accepts(p, lss, lmac, y, s, t, x_tilde);
    let mut recycled = keys.clone();
    if !ok {
        recycled.theta = None;
    }
    Ok(Decrypted { verdict: if ok { Verdict::Accept } else { Verdict::Reject }, y: ok.then(|| cipher.y.clone()), recycled })
}

fn sample_outcome(outcomes: &[(u64, f64)], rng: &mut impl Rng) -> u64 {
    let total: f64 = outcomes.iter().map(|o| o.1).sum();
    let mut u = rng.gen::<f64>() * total;
    for &(x, w) in outcomes {
        if u < w {
            return x;
        }
        u -= w;
    }
    outcomes.last().map(|o| o.0).unwrap_or(0)
}

/// XOR masks on the classical cipher fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tamper {
    #[serde(default)]
    pub y: Option<Bitstring>,
    #[serde(default)]
    pub s: Option<Bitstring>,
    #[serde(default)]
    pub t: Option<Bitstring>,
}

impl Tamper {
    fn masks(&self) -> Result<(u64, u64, u64)> {
        let f = |b: &Option<Bitstring>| b.as_ref().map(|v| v.to_u64()).transpose().map(|v| v.unwrap_or(0));
        Ok((f(&self.y)?, f(&self.s)?, f(&self.t)?))
    }

    pub fn is_identity(&self) -> Result<bool> {
        Ok(self.masks()? == (0, 0, 0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum QuantumAttack {
    Identity,
    Pauli { string: String },
    /// Eve keeps the outcome as her record.
    MeasureResend { basis: Bitstring },
    /// CNOT from the first cipher qubit onto a fresh ancilla Eve keeps.
    CnotProbe,
    /// Fully depolarizes the first cipher qubit.
    DepolarizeFirst,
}

/// Kraus form on cipher ⊗ ancilla with the ancilla starting in |0⟩.
pub struct DenseAttack {
    pub anc_dim: usize,
    pub ops: Vec<CMatrix>,
}

impl QuantumAttack {
    fn product_safe(&self) -> bool {
        !matches!(self, QuantumAttack::CnotProbe | QuantumAttack::DepolarizeFirst)
    }

    pub fn dense(&self, n: usize) -> Result<DenseAttack> {
        let dim = 1usize << n;
        Ok(match self {
            QuantumAttack::Identity => DenseAttack { anc_dim: 1, ops: vec![CMatrix::identity(dim, dim)] },
            QuantumAttack::Pauli { string } => {
                if string.len() != n {
                    return invalid(format!("Pauli string {string} on {n} qubits"));
                }
                let u = string.chars().fold(CMatrix::identity(1, 1), |acc, ch| kron(&acc, &pauli(ch)));
                DenseAttack { anc_dim: 1, ops: vec![u] }
            }
            QuantumAttack::MeasureResend { basis } => {
                if basis.len() != n {
                    return invalid("measure-resend basis length differs from n");
                }
                // each K_r = P_r ⊗ |r⟩⟨0| on cipher ⊗ ancilla
                let ops = (0..dim)
                    .map(|r| {
                        let v = conjugate_code_vector(&Bitstring::from_u64(r as u64, n), basis).expect("checked");
                        let mut anc = CMatrix::zeros(dim, dim);
                        anc[(r, 0)] = c(1.0, 0.0);
                        kron(&(&v * v.adjoint()), &anc)
                    })
                    .collect();
                DenseAttack { anc_dim: dim, ops }
            }
            QuantumAttack::CnotProbe => {
                let full = dim * 2;
                let mut u = CMatrix::zeros(full, full);
                for i in 0..full {
                    let (q, a) = (i / 2, i % 2);
                    let ctrl = (q >> (n - 1)) & 1;
                    u[((q * 2) | (a ^ ctrl), i)] = c(1.0, 0.0);
                }
                DenseAttack { anc_dim: 2, ops: vec![u] }
            }
            QuantumAttack::DepolarizeFirst => {
                let rest = CMatrix::identity(dim / 2, dim / 2);
                let ops = ['I', 'X', 'Y', 'Z'].iter().map(|&ch| kron(&(pauli(ch) * c(0.5, 0.0)), &rest)).collect();
                DenseAttack { anc_dim: 1, ops }
            }
        })
    }

    /// Product-state action, returning the re-prepared state and Eve's record
    /// law; `None` if the attack needs the dense engine.
    fn on_product(&self, n: usize, basis: u64, value: u64) -> Option<Vec<(u64, u64, u64, f64)>> {
        match self {
            QuantumAttack::Identity => Some(vec![(basis, value, 0, 1.0)]),
            QuantumAttack::Pauli { string } => {
                let (mut xm, mut zm) = (0u64, 0u64);
                for (i, ch) in string.chars().enumerate() {
                    let bit = 1u64 << (n - 1 - i);
                    match ch {
                        'X' => xm |= bit,
                        'Z' => zm |= bit,
                        'Y' => {
                            xm |= bit;
                            zm |= bit
                        }
                        _ => {}
                    }
                }
                let flip = (xm & !basis) | (zm & basis);
                Some(vec![(basis, value ^ flip, 0, 1.0)])
            }
            QuantumAttack::MeasureResend { basis: b } => {
                let b = b.to_u64().ok()?;
                Some(product_outcomes(basis, value, b, n).into_iter().map(|(r, p)| (b, r, r, p)).collect())
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackStrategy {
    None,
    /// Logical flips in the encoding basis.
    Noise { pattern: Bitstring },
    Substitution {
        quantum: QuantumAttack,
        #[serde(default)]
        tamper: Tamper,
    },
    /// Sent before any cipher from Alice is seen.
    Impersonation { forged: Cipher },
}

/// What the adversary holds after the session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryView {
    pub intercepted: Option<Cipher>,
    pub delivered: Cipher,
    pub record: Option<u64>,
    pub verdict: Verdict,
    /// Alice's next cipher under the recycled keys, for impersonation runs.
    pub next_cipher: Option<Cipher>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackTranscript {
    pub view: AdversaryView,
    pub y_out: Option<Bitstring>,
    pub recycled: FsKeys,
}

/// Applies the quantum attack to a product cipher, sampling Eve's record.
fn attack_quantum(p: &FsParams, q: &QuantumAttack, part: &QuantumPart, rng: &mut impl Rng) -> Result<(QuantumPart, Option<u64>)> {
    if let (QuantumPart::Product { basis, value }, true) = (part, q.product_safe()) {
        let law = q.on_product(p.n, basis.to_u64()?, value.to_u64()?).ok_or_else(|| Error::InvalidInput("attack needs the dense engine".into()))?;
        let mut u: f64 = rng.gen();
        let mut pick = law[law.len() - 1];
        for item in &law {
            if u < item.3 {
                pick = *item;
                break;
            }
            u -= item.3;
        }
        let record = matches!(q, QuantumAttack::MeasureResend { .. }).then_some(pick.2);
        return Ok((QuantumPart::Product { basis: Bitstring::from_u64(pick.0, p.n), value: Bitstring::from_u64(pick.1, p.n) }, record));
    }
    let dense = q.dense(p.n)?;
    let rho = part.to_dense()?;
    let anc0 = DensityOperator::basis(dense.anc_dim, 0);
    let full = rho.tensor(&anc0);
    let branches: Vec<CMatrix> = dense.ops.iter().map(|k| k * full.matrix() * k.adjoint()).collect();
    let weights: Vec<(u64, f64)> = branches.iter().enumerate().map(|(j, b)| (j as u64, b.trace().re)).collect();
    let j = sample_outcome(&weights, rng);
    let chosen = DensityOperator::from_matrix_unchecked(branches[j as usize].clone());
    let reduced = crate::quantum::partial_trace(&chosen, &[true, false], &[1 << p.n, dense.anc_dim])?;
    let state = reduced.normalized().ok_or_else(|| Error::InvalidInput("attack branch of zero weight".into()))?;
    Ok((QuantumPart::Dense { state }, Some(j)))
}

fn apply_tamper(c: &Cipher, t: &Tamper) -> Result<Cipher> {
    let (my, ms, mt) = t.masks()?;
    let x = |b: &Bitstring, m: u64| Ok::<_, Error>(Bitstring::from_u64(b.to_u64()? ^ m, b.len()));
    Ok(Cipher { y: x(&c.y, my)?, s: x(&c.s, ms)?, t: x(&c.t, mt)?, quantum: c.quantum.clone() })
}

/// One session under `strategy`; draws are x, attack, Bob's measurement.
pub fn run_attack(p: &FsParams, keys: &FsKeys, y: &Bitstring, strategy: &AttackStrategy, seed: u64) -> Result<AttackTranscript> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let AttackStrategy::Impersonation { forged } = strategy {
        let dec = fs_decrypt(p, keys, forged, &mut rng)?;
        let next_cipher = match &dec.recycled.theta {
            Some(_) => Some(encrypt_packed(p, &dec.recycled, y.to_u64()?, rng.gen_range(0..1u64 << p.n))?),
            None => None,
        };
        return Ok(AttackTranscript {
            view: AdversaryView { intercepted: None, delivered: forged.clone(), record: None, verdict: dec.verdict, next_cipher },
            y_out: dec.y,
            recycled: dec.recycled,
        });
    }
    if y.len() != p.m {
        return invalid("message length differs from m");
    }
    let x = rng.gen_range(0..1u64 << p.n);
    let cipher = encrypt_packed(p, keys, y.to_u64()?, x)?;
    let (delivered, record) = match strategy {
        AttackStrategy::None => (cipher.clone(), None),
        AttackStrategy::Noise { pattern } => {
            let QuantumPart::Product { basis, value } = &cipher.quantum else { unreachable!("fresh ciphers are product states") };
            let flipped = value.xor(pattern)?;
            (Cipher { quantum: QuantumPart::Product { basis: basis.clone(), value: flipped }, ..cipher.clone() }, None)
        }
        AttackStrategy::Substitution { quantum, tamper } => {
            let (q, rec) = attack_quantum(p, quantum, &cipher.quantum, &mut rng)?;
            (apply_tamper(&Cipher { quantum: q, ..cipher.clone() }, tamper)?, rec)
        }
        AttackStrategy::Impersonation { .. } => unreachable!(),
    };
    let dec = fs_decrypt(p, keys, &delivered, &mut rng)?;
    let intercepted = (!matches!(strategy, AttackStrategy::Noise { .. })).then_some(cipher);
    Ok(AttackTranscript {
        view: AdversaryView { intercepted, delivered, record, verdict: dec.verdict, next_cipher: None },
        y_out: dec.y,
        recycled: dec.recycled,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Product,
    Dense,
}

/// Exact Pr[accept] for fixed keys, x and y under a substitution attack.
pub fn accept_probability(p: &FsParams, keys: &FsKeys, x: u64, y: u64, q: &QuantumAttack, tamper: &Tamper, engine: Engine) -> Result<f64> {
    let (lss, lmac, theta) = keys.packed(p)?;
    let c0 = encrypt_packed(p, keys, y, x)?;
    let c1 = apply_tamper(&c0, tamper)?;
    let (y2, s2, t2) = cipher_classical(p, &c1)?;
    let accept = |xt: u64| bob_accepts(p, lss, lmac, y2, s2, t2, xt);
    match engine {
        Engine::Product => {
            let law = q.on_product(p.n, theta, x).ok_or_else(|| Error::InvalidInput("attack needs the dense engine".into()))?;
            Ok(law
                .iter()
                .map(|&(b, v, _, w)| w * product_outcomes(b, v, theta, p.n).iter().filter(|o| accept(o.0)).map(|o| o.1).sum::<f64>())
                .sum())
        }
        Engine::Dense => {
            let dense = q.dense(p.n)?;
            let psi = kron(&to_col(&conjugate_code_vector(&Bitstring::from_u64(x, p.n), &Bitstring::from_u64(theta, p.n))?), &basis_col(dense.anc_dim, 0));
            let mut total = 0.0;
            for k in &dense.ops {
                let out = k * &psi;
                for xt in 0..1u64 << p.n {
                    if accept(xt) {
                        let v = conjugate_code_vector(&Bitstring::from_u64(xt, p.n), &Bitstring::from_u64(theta, p.n))?;
                        total += project_first(&out, &v, dense.anc_dim).iter().map(|z| z.norm_sqr()).sum::<f64>();
                    }
                }
            }
            Ok(total)
        }
    }
}

fn to_col(v: &CVector) -> CMatrix {
    CMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn basis_col(dim: usize, i: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, 1);
    m[(i, 0)] = c(1.0, 0.0);
    m
}

/// (⟨v| ⊗ I) w for a column w on first ⊗ rest.
fn project_first(w: &CMatrix, v: &CVector, rest: usize) -> CVector {
    let mut out = CVector::zeros(rest);
    for (i, vi) in v.iter().enumerate() {
        let ci = vi.conj();
        for a in 0..rest {
            out[a] += ci * w[(i * rest + a, 0)];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExhaustiveReport {
    pub total: u128,
    pub accepts: u128,
    pub accept_rate: f64,
}

/// Zero-noise sessions over every (ℓ_ss, ℓ_mac, θ, x, y).
pub fn honest_exhaustive(p: &FsParams, budget: u128) -> Result<ExhaustiveReport> {
    let total = p.code.size() as u128 * (1u128 << (p.r_ss() + p.r_mac() + p.n + p.m));
    check_budget(total, budget)?;
    let rec = RecoveryTable::build(p);
    let macs: Vec<Vec<u64>> = (0..1u64 << p.r_mac()).map(|l| p.mac.table(l)).collect();
    let mut accepts = 0u128;
    for _theta in p.code.codewords() {
        for lss in 0..1usize << p.r_ss() {
            for x in 0..1u64 << p.n {
                let s = rec.ss[lss][x as usize];
                // product state measured in its own basis returns x
                let xr = rec.get(lss, s, x);
                for y in 0..1u64 << p.m {
                    for mac in &macs {
                        let t = mac[p.mac_input(x, y, s) as usize];
                        if let Some(x2) = xr {
                            if mac[p.mac_input(x2, y, s) as usize] == t {
                                accepts += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ExhaustiveReport { total, accepts, accept_rate: accepts as f64 / total as f64 })
}

/// ε_ss = max over x and in-ball errors of Pr_{ℓ_ss}[recovery ≠ x].
pub fn audit_ss_recovery(p: &FsParams, budget: u128) -> Result<f64> {
    let ball = hamming_ball_masks(p.n, p.radius());
    check_budget((1u128 << (p.r_ss() + p.n)) * ball.len() as u128, budget)?;
    let rec = RecoveryTable::build(p);
    let mut worst = 0u64;
    for x in 0..1u64 << p.n {
        for &e in &ball {
            let fails = (0..1usize << p.r_ss()).filter(|&l| rec.get(l, rec.ss[l][x as usize], x ^ e) != Some(x)).count() as u64;
            worst = worst.max(fails);
        }
    }
    Ok(worst as f64 / (1u64 << p.r_ss()) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessExhaustive {
    pub max_reject_rate: f64,
    pub eps_ss: f64,
    pub witness_x: Bitstring,
    pub witness_pattern: Bitstring,
    pub holds: bool,
}

/// Worst reject frequency over (θ, x, y, ≤φn flips), exhaustive in the ℓ keys.
pub fn robustness_exhaustive(p: &FsParams, budget: u128) -> Result<RobustnessExhaustive> {
    let ball = hamming_ball_masks(p.n, p.radius());
    check_budget(p.code.size() as u128 * (1u128 << (p.r_ss() + p.n + p.m)) * ball.len() as u128, budget)?;
    let rec = RecoveryTable::build(p);
    let macs: Vec<Vec<u64>> = (0..1u64 << p.r_mac()).map(|l| p.mac.table(l)).collect();
    let mut collide: HashMap<(u64, u64), u64> = HashMap::new();
    let mac_keys = macs.len() as u64;
    let keys_total = (1u64 << p.r_ss()) * mac_keys;
    let mut worst = (0u64, 0u64, 0u64);
    // flips are logical, so θ only relabels the basis
    for _theta in p.code.codewords() {
        for x in 0..1u64 << p.n {
            for y in 0..1u64 << p.m {
                for &e in &ball {
                    let mut accepted = 0u64;
                    for lss in 0..1usize << p.r_ss() {
                        let s = rec.ss[lss][x as usize];
                        match rec.get(lss, s, x ^ e) {
                            Some(x2) if x2 == x => accepted += mac_keys,
                            Some(x2) => {
                                let (a, b) = (p.mac_input(x, y, s), p.mac_input(x2, y, s));
                                accepted += *collide.entry((a, b)).or_insert_with(|| macs.iter().filter(|t| t[a as usize] == t[b as usize]).count() as u64);
                            }
                            None => {}
                        }
                    }
                    let rejected = keys_total - accepted;
                    if rejected > worst.0 {
                        worst = (rejected, x, e);
                    }
                }
            }
        }
    }
    let eps_ss = audit_ss_recovery(p, budget)?;
    let max_reject_rate = worst.0 as f64 / keys_total as f64;
    Ok(RobustnessExhaustive {
        max_reject_rate,
        eps_ss,
        witness_x: Bitstring::from_u64(worst.1, p.n),
        witness_pattern: Bitstring::from_u64(worst.2, p.n),
        holds: max_reject_rate <= eps_ss + 1e-15,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessMc {
    pub trials: u64,
    pub rejects: u64,
    pub reject_rate: f64,
    pub width: f64,
    pub eps_ss: f64,
    pub within: bool,
}

/// Random keys, message and ≤φn flip pattern per trial; trial i uses seed+i.
pub fn robustness_mc(p: &FsParams, trials: u64, seed: u64) -> Result<RobustnessMc> {
    let ball = hamming_ball_masks(p.n, p.radius());
    let rejects: Result<u64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let keys = FsKeys::random(p, &mut rng);
            let y = Bitstring::from_u64(rng.gen_range(0..1u64 << p.m), p.m);
            let pattern = Bitstring::from_u64(ball[rng.gen_range(0..ball.len())], p.n);
            let tr = run_attack(p, &keys, &y, &AttackStrategy::Noise { pattern }, rng.gen())?;
            Ok((tr.view.verdict == Verdict::Reject) as u64)
        })
        .sum();
    let rejects = rejects?;
    let eps_ss = audit_ss_recovery(p, u128::MAX)?;
    let reject_rate = rejects as f64 / trials.max(1) as f64;
    let width = hoeffding_width(trials);
    Ok(RobustnessMc { trials, rejects, reject_rate, width, eps_ss, within: reject_rate <= eps_ss + width })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImpersonationReport {
    pub numerator: u128,
    pub denominator: u128,
    pub max_accept: f64,
    pub eps_mac: f64,
    pub forged: Cipher,
    pub holds: bool,
}

/// Best forgery over every classical (y′, s′, t′) and every BB84 product
/// quantum part; acceptance is an exact rational over ℓ_ss, ℓ_mac, θ and
/// Bob's outcome.
pub fn impersonation_audit(p: &FsParams, budget: u128) -> Result<ImpersonationReport> {
    let n = p.n;
    let work = (1u128 << (p.m_ss() + 2 * n + p.r_ss() + n)) * p.code.size() as u128;
    check_budget(work, budget)?;
    let rec = RecoveryTable::build(p);
    let tags = 1usize << p.m_mac();
    let mut cnt = vec![0u64; (1usize << p.mac.msg_len()) * tags];
    for l in 0..1u64 << p.r_mac() {
        for (z, t) in p.mac.table(l).into_iter().enumerate() {
            cnt[z * tags + t as usize] += 1;
        }
    }
    let denominator = p.code.size() as u128 * (1u128 << (n + p.r_ss() + p.r_mac()));
    let thetas: Vec<u64> = p.code.codewords().iter().map(|w| w.to_u64().expect("short")).collect();
    let mut best: (u128, u64, u64, u64, u64, u64) = (0, 0, 0, 0, 0, 0);
    let mut hist = vec![0u128; 1 << n];
    for s in 0..1u64 << p.m_ss() {
        for basis in 0..1u64 << n {
            for value in 0..1u64 << n {
                hist.iter_mut().for_each(|h| *h = 0);
                for &theta in &thetas {
                    let free = (basis ^ theta) & low_mask(n);
                    let weight = 1u128 << (n - free.count_ones() as usize);
                    for sub in subsets(free) {
                        let xt = (value & !free) | sub;
                        for l in 0..1usize << p.r_ss() {
                            if let Some(x2) = rec.get(l, s, xt) {
                                hist[x2 as usize] += weight;
                            }
                        }
                    }
                }
                for y in 0..1u64 << p.m {
                    for t in 0..tags as u64 {
                        let num: u128 = (0..1u64 << n)
                            .filter(|&x2| hist[x2 as usize] > 0)
                            .map(|x2| hist[x2 as usize] * cnt[p.mac_input(x2, y, s) as usize * tags + t as usize] as u128)
                            .sum();
                        if num > best.0 {
                            best = (num, y, s, t, basis, value);
                        }
                    }
                }
            }
        }
    }
    let (num, y, s, t, basis, value) = best;
    let forged = Cipher {
        y: Bitstring::from_u64(y, p.m),
        s: Bitstring::from_u64(s, p.m_ss()),
        t: Bitstring::from_u64(t, p.m_mac()),
        quantum: QuantumPart::Product { basis: Bitstring::from_u64(basis, n), value: Bitstring::from_u64(value, n) },
    };
    Ok(ImpersonationReport {
        numerator: num,
        denominator,
        max_accept: num as f64 / denominator as f64,
        eps_mac: p.mac.eps_mac,
        forged,
        holds: num << p.m_mac() <= denominator,
    })
}

/// Substitution attack from the exact-audit library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryAttack {
    pub name: String,
    pub quantum: QuantumAttack,
    pub tamper: Tamper,
}

/// Identity, every Pauli string, measure-resend in every basis, tag flips,
/// and an entangling probe.
pub fn attack_library(p: &FsParams) -> Vec<LibraryAttack> {
    let n = p.n;
    let mut out = Vec::new();
    let plain = |name: String, quantum| LibraryAttack { name, quantum, tamper: Tamper::default() };
    out.push(plain("identity".into(), QuantumAttack::Identity));
    for code in 1..1usize << (2 * n) {
        let s: String = (0..n).map(|i| ['I', 'X', 'Y', 'Z'][(code >> (2 * (n - 1 - i))) & 3]).collect();
        out.push(plain(format!("pauli-{s}"), QuantumAttack::Pauli { string: s }));
    }
    for b in Bitstring::all(n) {
        out.push(plain(format!("measure-resend-{b}"), QuantumAttack::MeasureResend { basis: b }));
    }
    for mask in 1..1u64 << p.m_mac() {
        let t = Bitstring::from_u64(mask, p.m_mac());
        out.push(LibraryAttack { name: format!("tag-flip-{t}"), quantum: QuantumAttack::Identity, tamper: Tamper { t: Some(t), ..Tamper::default() } });
    }
    out.push(plain("cnot-probe".into(), QuantumAttack::CnotProbe));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecycledEntropy {
    pub attack: String,
    pub accept_mass: f64,
    pub hmin: Bracket,
    pub k: f64,
    pub holds: bool,
}

/// Accept-branch H_min(Θ | Z, Z′, record, Eve's ancilla) with the ℓ keys
/// averaged out, minimized over messages y.
pub fn recycled_key_entropy(p: &FsParams, attack: &LibraryAttack, budget: u128) -> Result<RecycledEntropy> {
    let n = p.n;
    let dim = 1usize << n;
    check_budget(p.code.size() as u128 * (1u128 << (p.r_ss() + p.r_mac() + 2 * n + p.m)), budget)?;
    let dense = attack.quantum.dense(n)?;
    let a = dense.anc_dim;
    let (my, ms, mt) = attack.tamper.masks()?;
    let thetas: Vec<u64> = p.code.codewords().iter().map(|w| w.to_u64().expect("short")).collect();
    let p_theta = 1.0 / thetas.len() as f64;
    let keys = (1u64 << (p.r_ss() + p.r_mac())) as f64;
    let rec = RecoveryTable::build(p);
    let macs: Vec<Vec<u64>> = (0..1u64 << p.r_mac()).map(|l| p.mac.table(l)).collect();
    let mut worst: Option<(Bracket, f64)> = None;
    for y in 0..1u64 << p.m {
        // blocks keyed by (z, record) hold one operator per θ
        let mut blocks: BTreeMap<(u64, usize), Vec<CMatrix>> = BTreeMap::new();
        for (ti, &theta) in thetas.iter().enumerate() {
            let tb = Bitstring::from_u64(theta, n);
            let meas: Vec<CVector> = (0..dim as u64).map(|v| conjugate_code_vector(&Bitstring::from_u64(v, n), &tb)).collect::<Result<_>>()?;
            for x in 0..dim as u64 {
                let psi = kron(&to_col(&meas[x as usize]), &basis_col(a, 0));
                // count[z][x̃] of ℓ keys producing z and accepting x̃
                let mut count: HashMap<u64, Vec<u64>> = HashMap::new();
                for lss in 0..1usize << p.r_ss() {
                    let s = rec.ss[lss][x as usize];
                    let (y2, s2) = (y ^ my, s ^ ms);
                    for mac in &macs {
                        let t = mac[p.mac_input(x, y, s) as usize];
                        let t2 = t ^ mt;
                        let z = (((y << p.m_ss()) | s) << p.m_mac()) | t;
                        let row = count.entry(z).or_insert_with(|| vec![0; dim]);
                        for (xt, slot) in row.iter_mut().enumerate() {
                            if let Some(x2) = rec.get(lss, s2, xt as u64) {
                                if mac[p.mac_input(x2, y2, s2) as usize] == t2 {
                                    *slot += 1;
                                }
                            }
                        }
                    }
                }
                for (j, k) in dense.ops.iter().enumerate() {
                    let out = k * &psi;
                    let residual: Vec<CMatrix> = meas
                        .iter()
                        .map(|v| {
                            let w = to_col(&project_first(&out, v, a));
                            &w * w.adjoint()
                        })
                        .collect();
                    for (&z, row) in &count {
                        let mut op = CMatrix::zeros(a, a);
                        for (xt, &cnum) in row.iter().enumerate() {
                            if cnum > 0 {
                                op += &residual[xt] * c(cnum as f64, 0.0);
                            }
                        }
                        let scale = p_theta / dim as f64 / keys;
                        let entry = blocks.entry((z, j)).or_insert_with(|| vec![CMatrix::zeros(a, a); thetas.len()]);
                        entry[ti] += op * c(scale, 0.0);
                    }
                }
            }
        }
        let parts: Vec<Bracket> = blocks.values().map(|ops| pguess_operators(ops, a, DEFAULT_TOLERANCE * 1e-3, DEFAULT_ITERATION_CAP)).collect();
        let pg = Bracket::sum(&parts);
        let mass: f64 = blocks.values().flat_map(|ops| ops.iter().map(|o| o.trace().re)).sum();
        let h = hmin_from_pguess(pg);
        if worst.as_ref().map_or(true, |(b, _)| h.lo < b.lo) {
            worst = Some((h, mass));
        }
    }
    let (hmin, accept_mass) = worst.expect("at least one message");
    Ok(RecycledEntropy { attack: attack.name.clone(), accept_mass, hmin, k: p.k, holds: hmin.lo >= p.k - DEFAULT_TOLERANCE })
}

/// Audited constants feeding the closed-form bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub nu_ss: Option<f64>,
    pub nu_mac: Option<f64>,
    pub eps_mac: Option<f64>,
    pub eps_ss: Option<f64>,
}

impl BoundInputs {
    /// ε_mac and ε_ss by exhaustive audit; ν declared by the families.
    pub fn audited(p: &FsParams, budget: u128) -> Result<Self> {
        Ok(Self {
            nu_ss: Some(p.ss.nu),
            nu_mac: Some(1.0),
            eps_mac: Some(audit_strong_universality(&p.mac, budget)?.epsilon),
            eps_ss: Some(audit_ss_recovery(p, budget)?),
        })
    }
}

fn need(v: Option<f64>, what: &str) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidInput(format!("{what} has not been audited")))
}

/// ε_mac + (ν_ss+ν_mac)·√((2 + |C|/2^{d/2} + |C|2^{h(φ)n}/2^d)·2^{m_ss+m_mac−k}).
pub fn eps_adv(p: &FsParams, b: &BoundInputs) -> Result<f64> {
    let (nu_ss, nu_mac, eps_mac) = (need(b.nu_ss, "nu_ss")?, need(b.nu_mac, "nu_mac")?, need(b.eps_mac, "eps_mac")?);
    let size = p.code.size() as f64;
    let (t1, t2) = match p.distance() {
        None => (0.0, 0.0),
        Some(d) => {
            let d = d as f64;
            (size / 2f64.powf(d / 2.0), size * 2f64.powf(binary_entropy(p.phi)? * p.n as f64) / 2f64.powf(d))
        }
    };
    let inner = (2.0 + t1 + t2) * 2f64.powf((p.m_ss() + p.m_mac()) as f64 - p.k);
    Ok(eps_mac + (nu_ss + nu_mac) * inner.sqrt())
}

/// ε_noise = channel ε + ε_ss.
pub fn eps_noise(channel_eps: f64, b: &BoundInputs) -> Result<f64> {
    Ok(channel_eps + need(b.eps_ss, "eps_ss")?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyReplaceOutput {
    pub spare: Option<Bitstring>,
    pub theta: Bitstring,
}

/// θ ≠ ⊥ keeps θ and leaves the fresh key spare; ⊥ consumes the fresh key.
pub fn key_replace(k_new: &Bitstring, theta: Option<&Bitstring>) -> KeyReplaceOutput {
    match theta {
        Some(t) => KeyReplaceOutput { spare: Some(k_new.clone()), theta: t.clone() },
        None => KeyReplaceOutput { spare: None, theta: k_new.clone() },
    }
}

/// k′ = −log(2^{−n} + 2^{−k}).
pub fn key_replace_rating(n: usize, k: f64) -> f64 {
    -(2f64.powi(-(n as i32)) + 2f64.powf(-k)).log2()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeyReplaceAudit {
    pub instances: u64,
    /// sup of the refill branch guessing probability, ⊥-mass · 2^{−n}.
    pub refill_sup: f64,
    /// sup of the subnormalized non-⊥ guessing probability.
    pub sigma_sup: f64,
    pub bound: f64,
    pub k_prime: f64,
    /// sup of the realized output guessing probability.
    pub output_sup: f64,
    pub holds: bool,
}

/// Every θ source whose non-⊥ weights are multiples of 2^{−k−1} capped at
/// 2^{−k}, with ⊥ taking the rest.
pub fn audit_key_replace(n: usize, k: usize) -> Result<KeyReplaceAudit> {
    if n > 4 || k > n {
        return invalid("key replacement audit supports k <= n <= 4");
    }
    let size = 1usize << n;
    let unit = 2f64.powi(-(k as i32) - 1);
    let mut levels = vec![0usize; size];
    let (mut instances, mut refill_sup, mut sigma_sup, mut output_sup) = (0u64, 0f64, 0f64, 0f64);
    let mut ok = true;
    let bound = 2f64.powi(-(n as i32)) + 2f64.powi(-(k as i32));
    loop {
        let mass: f64 = levels.iter().map(|&l| l as f64 * unit).sum();
        if mass <= 1.0 + 1e-12 {
            instances += 1;
            let bot = (1.0 - mass).max(0.0);
            let sigma = pguess_classical(&ClassicalJoint::new(n, levels.iter().enumerate().map(|(v, &l)| ((v as u64, 0), l as f64 * unit)))?);
            let refill = bot / size as f64;
            let out = ClassicalJoint::new(n, levels.iter().enumerate().map(|(v, &l)| ((v as u64, 0), l as f64 * unit + refill)))?;
            let pg = pguess_classical(&out);
            ok &= pg <= sigma + refill + 1e-15 && pg <= bound + 1e-15;
            refill_sup = refill_sup.max(refill);
            sigma_sup = sigma_sup.max(sigma);
            output_sup = output_sup.max(pg);
        }
        let mut i = 0;
        while i < size && levels[i] == 2 {
            levels[i] = 0;
            i += 1;
        }
        if i == size {
            break;
        }
        levels[i] += 1;
    }
    let bound_components = refill_sup + sigma_sup;
    Ok(KeyReplaceAudit {
        instances,
        refill_sup,
        sigma_sup,
        bound: bound_components,
        k_prime: neg_log2(bound_components),
        output_sup,
        holds: ok && (bound_components - bound).abs() < 1e-15,
    })
}

/// Side information Eve holds about Θ in guessing-game instances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideInfo {
    None,
    Copy,
    /// Correct codeword with probability 1−η, else a uniform one.
    Noisy(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GuessingCheck {
    pub lemma: u8,
    pub code: Vec<Bitstring>,
    pub side: SideInfo,
    pub channel: String,
    pub phi: f64,
    pub lhs: Bracket,
    pub rhs: f64,
    pub holds: bool,
}

fn side_law(code: &[u64], side: SideInfo) -> Vec<(u64, u64, f64)> {
    let q = 1.0 / code.len() as f64;
    match side {
        SideInfo::None => code.iter().map(|&t| (t, 0, q)).collect(),
        SideInfo::Copy => code.iter().map(|&t| (t, t, q)).collect(),
        SideInfo::Noisy(eta) => code
            .iter()
            .flat_map(|&t| code.iter().map(move |&e| (t, e, q * (if e == t { 1.0 - eta } else { 0.0 } + eta * q))))
            .collect(),
    }
}

/// Channels on the Q half: identity, Paulis, measure-resend, depolarizing
/// and an entangling probe.
pub fn channel_library(n: usize) -> Vec<(String, QuantumAttack)> {
    let mut out = vec![("identity".to_string(), QuantumAttack::Identity)];
    for code in 1..1usize << (2 * n) {
        let s: String = (0..n).map(|i| ['I', 'X', 'Y', 'Z'][(code >> (2 * (n - 1 - i))) & 3]).collect();
        out.push((format!("pauli-{s}"), QuantumAttack::Pauli { string: s }));
    }
    for b in Bitstring::all(n) {
        out.push((format!("measure-resend-{b}"), QuantumAttack::MeasureResend { basis: b }));
    }
    out.push(("depolarize-first".into(), QuantumAttack::DepolarizeFirst));
    out.push(("cnot-probe".into(), QuantumAttack::CnotProbe));
    out
}

fn guessing_factor_one(size: usize, d: Option<usize>) -> f64 {
    d.map_or(1.0, |d| 1.0 + size as f64 / 2f64.powf(d as f64 / 2.0))
}

fn guessing_factor_two(size: usize, d: Option<usize>, phi: f64, n: usize) -> Result<f64> {
    Ok(match d {
        None => 1.0,
        Some(d) => 1.0 + size as f64 * 2f64.powf(binary_entropy(phi)? * n as f64) / 2f64.powf(d as f64),
    })
}

/// Both guessing inequalities on every (code, side information, channel)
/// instance; X and Q come from BB-measuring halves of EPR pairs, which is the
/// prepared state H^θ|x⟩ on Q with x uniform.
pub fn check_guessing_lemmas(ns: &[usize], phis: &[f64]) -> Result<Vec<GuessingCheck>> {
    let mut out = Vec::new();
    for &n in ns {
        let codes: Vec<LinearCode> = match n {
            1 => vec![LinearCode::parse(&["0"])?, LinearCode::parse(&["0", "1"])?],
            2 => vec![LinearCode::parse(&["00"])?, LinearCode::parse(&["00", "11"])?, LinearCode::parse(&["00", "01", "10", "11"])?],
            _ => return invalid("guessing checks support n in {1, 2}"),
        };
        for code in &codes {
            for side in [SideInfo::None, SideInfo::Copy, SideInfo::Noisy(0.25)] {
                for (name, ch) in channel_library(n) {
                    out.push(lemma_one(n, code, side, &name, &ch)?);
                    for &phi in phis {
                        out.push(lemma_two(n, code, side, &name, &ch, phi)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn theta_guess(law: &[(u64, u64, f64)]) -> Result<f64> {
    Ok(pguess_classical(&ClassicalJoint::new(16, law.iter().map(|&(t, e, p)| ((t, e), p)))?))
}

/// Outputs per (θ, x) of N(H^θ|x⟩) ⊗ ancilla as columns K_j ψ.
fn channel_outputs(n: usize, theta: u64, x: u64, dense: &DenseAttack) -> Result<Vec<CMatrix>> {
    let v = conjugate_code_vector(&Bitstring::from_u64(x, n), &Bitstring::from_u64(theta, n))?;
    let psi = kron(&to_col(&v), &basis_col(dense.anc_dim, 0));
    Ok(dense.ops.iter().map(|k| k * &psi).collect())
}

fn lemma_one(n: usize, code: &LinearCode, side: SideInfo, name: &str, ch: &QuantumAttack) -> Result<GuessingCheck> {
    let thetas: Vec<u64> = code.codewords().iter().map(|w| w.to_u64().expect("short")).collect();
    let law = side_law(&thetas, side);
    let dense = ch.dense(n)?;
    let bdim = (1usize << n) * dense.anc_dim;
    let mut by_e: BTreeMap<u64, Vec<CMatrix>> = BTreeMap::new();
    for &(theta, e, pte) in &law {
        let ops = by_e.entry(e).or_insert_with(|| vec![CMatrix::zeros(bdim, bdim); 1 << n]);
        for x in 0..1u64 << n {
            for w in channel_outputs(n, theta, x, &dense)? {
                ops[x as usize] += &w * w.adjoint() * c(pte / (1u64 << n) as f64, 0.0);
            }
        }
    }
    let parts: Vec<Bracket> = by_e.values().map(|ops| pguess_operators(ops, bdim, DEFAULT_TOLERANCE * 1e-2, DEFAULT_ITERATION_CAP)).collect();
    let lhs = Bracket::sum(&parts);
    let rhs = theta_guess(&law)? * guessing_factor_one(code.size(), code.min_distance());
    Ok(GuessingCheck { lemma: 1, code: code.codewords().to_vec(), side, channel: name.into(), phi: 0.0, lhs, rhs, holds: lhs.hi <= rhs + 1e-9 })
}

fn lemma_two(n: usize, code: &LinearCode, side: SideInfo, name: &str, ch: &QuantumAttack, phi: f64) -> Result<GuessingCheck> {
    let thetas: Vec<u64> = code.codewords().iter().map(|w| w.to_u64().expect("short")).collect();
    let law = side_law(&thetas, side);
    let dense = ch.dense(n)?;
    let a = dense.anc_dim;
    let radius = (phi * n as f64 + 1e-9).floor() as usize;
    // Θ is known to the guesser, so E is redundant and blocks are per θ
    let mut parts = Vec::new();
    for &theta in &thetas {
        let p_theta: f64 = law.iter().filter(|l| l.0 == theta).map(|l| l.2).sum();
        let tb = Bitstring::from_u64(theta, n);
        let meas: Vec<CVector> = (0..1u64 << n).map(|v| conjugate_code_vector(&Bitstring::from_u64(v, n), &tb)).collect::<Result<_>>()?;
        let mut ops = vec![CMatrix::zeros(a, a); 1 << n];
        for x in 0..1u64 << n {
            for w in channel_outputs(n, theta, x, &dense)? {
                for (x2, v) in meas.iter().enumerate() {
                    if ((x2 as u64) ^ x).count_ones() as usize <= radius {
                        let r = to_col(&project_first(&w, v, a));
                        ops[x as usize] += &r * r.adjoint() * c(p_theta / (1u64 << n) as f64, 0.0);
                    }
                }
            }
        }
        parts.push(pguess_operators(&ops, a, DEFAULT_TOLERANCE * 1e-2, DEFAULT_ITERATION_CAP));
    }
    let lhs = Bracket::sum(&parts);
    let rhs = theta_guess(&law)? * guessing_factor_two(code.size(), code.min_distance(), phi, n)?;
    Ok(GuessingCheck { lemma: 2, code: code.codewords().to_vec(), side, channel: name.into(), phi, lhs, rhs, holds: lhs.hi <= rhs + 1e-9 })
}

/// Session config `{n, m, code, m_ss, m_mac, phi, k, strategy, trials, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n: usize,
    pub m: usize,
    pub code: Vec<Bitstring>,
    pub m_ss: usize,
    pub m_mac: usize,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default = "no_attack")]
    pub strategy: AttackStrategy,
    #[serde(default = "one_trial")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
}

fn no_attack() -> AttackStrategy {
    AttackStrategy::None
}

fn one_trial() -> u64 {
    1
}

impl SessionConfig {
    pub fn params(&self) -> Result<FsParams> {
        let code = LinearCode::new(self.code.clone()).map_err(|e| Error::Config(e.to_string()))?;
        FsParams::new(self.n, self.m, code, self.m_ss, self.m_mac, self.phi, self.k).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub trials: u64,
    pub accept_rate: f64,
    pub forgery_rate: f64,
    pub eps_adv: f64,
    pub eps_noise: f64,
}

/// Runs `trials` sessions with fresh random keys per trial.
pub fn run_sessions(cfg: &SessionConfig) -> Result<(Vec<AttackTranscript>, SessionSummary)> {
    let p = cfg.params()?;
    let transcripts: Vec<AttackTranscript> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i));
            let keys = FsKeys::random(&p, &mut rng);
            let y = Bitstring::from_u64(rng.gen_range(0..1u64 << p.m), p.m);
            run_attack(&p, &keys, &y, &cfg.strategy, rng.gen())
        })
        .collect::<Result<_>>()?;
    let accepts = transcripts.iter().filter(|t| t.view.verdict == Verdict::Accept).count() as f64;
    let forged = matches!(cfg.strategy, AttackStrategy::Impersonation { .. } | AttackStrategy::Substitution { .. });
    let trials = cfg.trials.max(1) as f64;
    let b = BoundInputs::audited(&p, crate::hashing::DEFAULT_BUDGET)?;
    let summary = SessionSummary {
        trials: cfg.trials,
        accept_rate: accepts / trials,
        forgery_rate: if forged { accepts / trials } else { 0.0 },
        eps_adv: eps_adv(&p, &b)?,
        eps_noise: eps_noise(0.0, &b)?,
    };
    Ok((transcripts, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    fn small() -> FsParams {
        FsParams::new(2, 1, LinearCode::parse(&["00", "11"]).unwrap(), 1, 2, 0.0, None).unwrap()
    }

    #[test]
    fn encrypt_examples() {
        let p = FsParams::new(3, 1, LinearCode::parse(&["000", "111"]).unwrap(), 1, 2, 0.0, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut keys = FsKeys::random(&p, &mut rng);
        keys.theta = Some(bs("000"));
        let e = fs_encrypt(&p, &keys, &bs("1"), 5).unwrap();
        assert_eq!(e, fs_encrypt(&p, &keys, &bs("1"), 5).unwrap());
        let rho = e.cipher.quantum.to_dense().unwrap();
        let xi = e.x.to_u64().unwrap() as usize;
        assert!((rho.matrix()[(xi, xi)].re - 1.0).abs() < 1e-12);
        keys.theta = Some(bs("111"));
        let e = fs_encrypt(&p, &keys, &bs("0"), 6).unwrap();
        let oracle = crate::quantum::conjugate_code_state(&e.x, &bs("111")).unwrap();
        assert!(crate::quantum::trace_distance(&e.cipher.quantum.to_dense().unwrap(), &oracle).unwrap() < 1e-12);
        keys.theta = None;
        assert!(matches!(fs_encrypt(&p, &keys, &bs("0"), 1), Err(Error::NotRunnable(_))));
    }

    #[test]
    fn honest_and_tag_forgery() {
        let p = small();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..50 {
            let keys = FsKeys::random(&p, &mut rng);
            let tr = run_attack(&p, &keys, &bs("1"), &AttackStrategy::None, i).unwrap();
            assert_eq!(tr.view.verdict, Verdict::Accept);
            assert_eq!(tr.y_out, Some(bs("1")));
            assert_eq!(tr.recycled, keys);
        }
        let p3 = FsParams::new(2, 1, LinearCode::parse(&["00", "11"]).unwrap(), 1, 3, 0.0, None).unwrap();
        let keys = FsKeys::random(&p3, &mut rng);
        let c0 = encrypt_packed(&p3, &keys, 1, 2).unwrap();
        let (_, lss, theta) = (0, keys.l_ss.to_u64().unwrap(), keys.theta.as_ref().unwrap().to_u64().unwrap());
        let _ = theta;
        // random forged tag: exhaustive ℓ_mac
        for t in 0..8u64 {
            let accepted = (0..1u64 << p3.r_mac()).filter(|&l| bob_accepts(&p3, lss, l, 1, c0.s.to_u64().unwrap(), t, 2)).count();
            assert!(accepted as f64 / (1u64 << p3.r_mac()) as f64 <= 0.125);
        }
    }

    #[test]
    fn product_engine_matches_dense() {
        let p = small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..6 {
            let keys = FsKeys::random(&p, &mut rng);
            for q in [
                QuantumAttack::Identity,
                QuantumAttack::MeasureResend { basis: bs("01") },
                QuantumAttack::MeasureResend { basis: bs("11") },
                QuantumAttack::Pauli { string: "YX".into() },
            ] {
                for x in 0..4 {
                    let a = accept_probability(&p, &keys, x, 1, &q, &Tamper::default(), Engine::Product).unwrap();
                    let b = accept_probability(&p, &keys, x, 1, &q, &Tamper::default(), Engine::Dense).unwrap();
                    assert!((a - b).abs() < 1e-12, "{q:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn reject_hides_theta() {
        let p = small();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let keys = FsKeys::random(&p, &mut rng);
        let forged = Cipher { y: bs("0"), s: bs("0"), t: bs("00"), quantum: QuantumPart::Product { basis: bs("00"), value: bs("00") } };
        let tr = run_attack(&p, &keys, &bs("0"), &AttackStrategy::Impersonation { forged }, 1).unwrap();
        let json = serde_json::to_value(&tr.view).unwrap();
        assert!(json.get("theta").is_none());
        if tr.view.verdict == Verdict::Reject {
            assert!(tr.recycled.theta.is_none() && tr.view.next_cipher.is_none());
        }
    }

    #[test]
    fn bound_examples() {
        let p = FsParams::new(3, 1, LinearCode::parse(&["000", "111"]).unwrap(), 1, 2, 0.0, Some(1.0)).unwrap();
        let b = BoundInputs { nu_ss: Some(1.0), nu_mac: Some(1.0), eps_mac: Some(0.25), eps_ss: Some(0.02) };
        let v = eps_adv(&p, &b).unwrap();
        let expect = 0.25 + 2.0 * ((2.0 + 2.0 / 2f64.powf(1.5) + 2.0 / 8.0) * 4.0f64).sqrt();
        assert!((v - expect).abs() < 1e-12 && (v - 7.13).abs() < 0.01);
        assert!((eps_noise(0.01, &b).unwrap() - 0.03).abs() < 1e-15);
        assert!(eps_adv(&p, &BoundInputs::default()).is_err());
        let single = |k| FsParams::new(3, 1, LinearCode::parse(&["000"]).unwrap(), 1, 2, 0.0, Some(k)).unwrap();
        assert!(eps_adv(&single(8.0), &b).unwrap() < eps_adv(&single(4.0), &b).unwrap());
    }

    #[test]
    fn key_replace_examples() {
        assert!((key_replace_rating(3, 3.0) - 2.0).abs() < 1e-12);
        assert!((key_replace_rating(5, 5.0) - 4.0).abs() < 1e-12);
        let out = key_replace(&bs("101"), None);
        assert_eq!((out.spare, out.theta), (None, bs("101")));
        let out = key_replace(&bs("101"), Some(&bs("011")));
        assert_eq!((out.spare, out.theta), (Some(bs("101")), bs("011")));
        let a = audit_key_replace(2, 2).unwrap();
        assert!(a.holds && (a.k_prime - 1.0).abs() < 1e-12);
        assert!(a.output_sup < a.bound);
    }

    #[test]
    fn recycled_entropy_small() {
        let p = small();
        let none = LibraryAttack { name: "identity".into(), quantum: QuantumAttack::Identity, tamper: Tamper::default() };
        let r = recycled_key_entropy(&p, &none, u128::MAX).unwrap();
        assert!((r.hmin.lo - 1.0).abs() < 1e-9 && (r.accept_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn guessing_n1() {
        let checks = check_guessing_lemmas(&[1], &[0.0]).unwrap();
        assert!(checks.iter().all(|c| c.holds), "{:?}", checks.iter().find(|c| !c.holds));
    }
}
