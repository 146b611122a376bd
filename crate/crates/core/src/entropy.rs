//! Guessing probability, min-entropy and classical smooth min-entropy.
//!
//! Quantities without a closed form come back as a [`Bracket`] whose
//! endpoints are each backed by an explicit object: a POVM for the lower
//! end of a guessing probability, a dual-feasible operator for the upper.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bitlinalg::Bitstring;
use crate::error::{invalid, Error, Result};
use crate::quantum::{
    c, herm_eig, herm_eigenvalues, herm_fn, project_subsystem, purified_distance_diag, trace_norm, CMatrix,
    CVector, CqState, DensityOperator, Symbol,
};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_ITERATION_CAP: usize = 10_000;
pub const EXACT_WIDTH: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Helstrom,
    PrimalDual,
    SmoothingSearch,
}

/// Certified interval; `lo <= hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    #[serde(serialize_with = "ser_real", deserialize_with = "de_real")]
    pub lo: f64,
    #[serde(serialize_with = "ser_real", deserialize_with = "de_real")]
    pub hi: f64,
    pub method: Method,
}

impl Bracket {
    pub fn exact(v: f64) -> Self {
        Self { lo: v, hi: v, method: Method::Exact }
    }

    pub fn width(&self) -> f64 {
        if self.lo == self.hi {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        self.lo - tol <= v && v <= self.hi + tol
    }

    /// Sum of brackets over disjoint classical blocks.
    pub fn sum<'a>(items: impl IntoIterator<Item = &'a Bracket>) -> Bracket {
        let mut out = Bracket::exact(0.0);
        for b in items {
            out.lo += b.lo;
            out.hi += b.hi;
            out.method = weaker(out.method, b.method);
        }
        out
    }
}

fn weaker(a: Method, b: Method) -> Method {
    let rank = |m: Method| match m {
        Method::Exact => 0,
        Method::Helstrom => 1,
        Method::PrimalDual => 2,
        Method::SmoothingSearch => 3,
    };
    if rank(a) >= rank(b) {
        a
    } else {
        b
    }
}

/// Infinite values serialize as the string `"inf"` (or `"-inf"`).
pub fn ser_real<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

pub fn de_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Raw::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        Raw::Str(s) => Err(serde::de::Error::custom(format!("not a real: {s}"))),
    }
}

/// `-log2 p`, with `+inf` for zero.
pub fn neg_log2(p: f64) -> f64 {
    if p <= 0.0 {
        f64::INFINITY
    } else {
        -p.log2()
    }
}

/// Classical P_XE as a table over (x, e); x printed as an `x_bits`-bit string.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalJoint {
    x_bits: usize,
    table: BTreeMap<(u64, u64), f64>,
}

impl ClassicalJoint {
    pub fn new(x_bits: usize, entries: impl IntoIterator<Item = ((u64, u64), f64)>) -> Result<Self> {
        let mut table = BTreeMap::new();
        for ((x, e), p) in entries {
            if !(p >= 0.0) {
                return invalid(format!("probability {p} at ({x},{e})"));
            }
            if x_bits < 64 && x >> x_bits != 0 {
                return invalid(format!("symbol {x} does not fit {x_bits} bits"));
            }
            if p > 0.0 {
                *table.entry((x, e)).or_insert(0.0) += p;
            }
        }
        let mass: f64 = table.values().sum();
        if mass > 1.0 + 1e-12 {
            return invalid(format!("mass {mass} exceeds 1"));
        }
        Ok(Self { x_bits, table })
    }

    /// X uniform over `2^n`, no side information.
    pub fn uniform(n: usize) -> Self {
        let p = 1.0 / (1u64 << n) as f64;
        Self::new(n, (0..1u64 << n).map(|x| ((x, 0), p))).expect("valid")
    }

    pub fn x_bits(&self) -> usize {
        self.x_bits
    }

    pub fn table(&self) -> &BTreeMap<(u64, u64), f64> {
        &self.table
    }

    pub fn get(&self, x: u64, e: u64) -> f64 {
        self.table.get(&(x, e)).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        self.table.values().sum()
    }

    pub fn e_values(&self) -> BTreeSet<u64> {
        self.table.keys().map(|&(_, e)| e).collect()
    }

    pub fn x_values(&self) -> BTreeSet<u64> {
        self.table.keys().map(|&(x, _)| x).collect()
    }

    pub fn marginal_e(&self) -> BTreeMap<u64, f64> {
        let mut m = BTreeMap::new();
        for (&(_, e), &p) in &self.table {
            *m.entry(e).or_insert(0.0) += p;
        }
        m
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(self.x_bits, self.table.iter().map(|(&k, &p)| (k, p * s)))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "e", "p"])?;
        for (&(x, e), &p) in &self.table {
            wr.write_record([Bitstring::from_u64(x, self.x_bits).to_string(), e.to_string(), format!("{p:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut x_bits = None;
        let mut entries = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return invalid("ClassicalJoint rows have three columns x,e,p");
            }
            let x: Bitstring = rec[0].parse()?;
            if *x_bits.get_or_insert(x.len()) != x.len() {
                return invalid("x strings of unequal length");
            }
            let e: u64 = rec[1].trim().parse().map_err(|_| Error::InvalidInput(format!("bad e {:?}", &rec[1])))?;
            let p: f64 = rec[2].trim().parse().map_err(|_| Error::InvalidInput(format!("bad p {:?}", &rec[2])))?;
            entries.push(((x.to_u64()?, e), p));
        }
        Self::new(x_bits.unwrap_or(1), entries)
    }

    /// Diagonal cq embedding: X classical, E as a basis-state register.
    pub fn to_cq(&self) -> Result<CqState> {
        let es: Vec<u64> = self.e_values().into_iter().collect();
        let dim = es.len().max(1);
        let mut parts: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for (&(x, e), &p) in &self.table {
            let i = es.binary_search(&e).expect("present");
            parts.entry(x).or_insert_with(|| vec![0.0; dim])[i] += p;
        }
        CqState::from_unnormalized(
            dim,
            parts.into_iter().map(|(x, d)| (Symbol::Value(x), DensityOperator::from_matrix_unchecked(diag(&d)))),
        )
    }
}

fn diag(d: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(d.len(), d.iter().map(|&v| c(v, 0.0))))
}

pub fn pguess_classical(p: &ClassicalJoint) -> f64 {
    let mut best: BTreeMap<u64, f64> = BTreeMap::new();
    for (&(_, e), &v) in p.table() {
        let b = best.entry(e).or_insert(0.0);
        if v > *b {
            *b = v;
        }
    }
    best.values().sum()
}

pub fn hmin_classical(p: &ClassicalJoint) -> f64 {
    neg_log2(pguess_classical(p))
}

pub fn pguess_cq(rho: &CqState) -> Bracket {
    pguess_cq_with(rho, DEFAULT_TOLERANCE, DEFAULT_ITERATION_CAP)
}

pub fn pguess_cq_with(rho: &CqState, tolerance: f64, cap: usize) -> Bracket {
    let ops: Vec<CMatrix> = rho.branches().values().map(|b| b.state.matrix() * c(b.weight, 0.0)).collect();
    pguess_operators(&ops, rho.dim(), tolerance, cap)
}

/// Optimal guessing probability for the unnormalized ensemble `ops`.
pub fn pguess_operators(ops: &[CMatrix], dim: usize, tolerance: f64, cap: usize) -> Bracket {
    match ops.len() {
        0 => return Bracket::exact(0.0),
        1 => return Bracket::exact(ops[0].trace().re),
        _ => {}
    }
    let diagonal = ops.iter().all(|m| {
        (0..dim).all(|i| (0..dim).all(|j| i == j || m[(i, j)].norm() <= 1e-14))
    });
    if diagonal {
        let v = (0..dim).map(|i| ops.iter().map(|m| m[(i, i)].re).fold(0.0, f64::max)).sum();
        return Bracket::exact(v);
    }
    if ops.len() == 2 {
        let v = 0.5 * (ops[0].trace().re + ops[1].trace().re + trace_norm(&(&ops[0] - &ops[1])));
        return Bracket { lo: v, hi: v, method: Method::Helstrom };
    }
    primal_dual(ops, dim, tolerance, cap)
}

fn inv_sqrt_on_support(m: &CMatrix) -> (CMatrix, CMatrix) {
    let (vals, vecs) = herm_eig(m);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let cut = 1e-13 * scale;
    let d = vals.len();
    let inv = CVector::from_iterator(d, vals.iter().map(|&v| c(if v > cut { 1.0 / v.sqrt() } else { 0.0 }, 0.0)));
    let ker = CVector::from_iterator(d, vals.iter().map(|&v| c(if v > cut { 0.0 } else { 1.0 }, 0.0)));
    (
        &vecs * CMatrix::from_diagonal(&inv) * vecs.adjoint(),
        &vecs * CMatrix::from_diagonal(&ker) * vecs.adjoint(),
    )
}

/// Normalizes Σ_x B_x into a POVM, assigning the kernel to the best branch.
fn povm_from(parts: &[CMatrix], ops: &[CMatrix]) -> Vec<CMatrix> {
    let total = parts.iter().fold(CMatrix::zeros(parts[0].nrows(), parts[0].nrows()), |a, b| a + b);
    let (s, ker) = inv_sqrt_on_support(&total);
    let mut povm: Vec<CMatrix> = parts.iter().map(|b| &s * b * &s).collect();
    let best = (0..ops.len())
        .max_by(|&a, &b| (ops[a].clone() * &ker).trace().re.total_cmp(&(ops[b].clone() * &ker).trace().re))
        .unwrap_or(0);
    povm[best] += ker;
    povm
}

fn primal_value(ops: &[CMatrix], povm: &[CMatrix]) -> f64 {
    ops.iter().zip(povm).map(|(a, p)| (a * p).trace().re).sum()
}

/// Smallest tr Y over Y = Herm(Σ A_x Π_x) + λI with Y ⪰ A_x for all x.
fn dual_value(ops: &[CMatrix], povm: &[CMatrix], dim: usize) -> f64 {
    let r = ops.iter().zip(povm).fold(CMatrix::zeros(dim, dim), |acc, (a, p)| acc + a * p);
    let y0 = (&r + r.adjoint()) * c(0.5, 0.0);
    let lambda = ops
        .iter()
        .map(|a| herm_eigenvalues(&(a - &y0)).into_iter().fold(f64::MIN, f64::max))
        .fold(f64::MIN, f64::max);
    y0.trace().re + lambda * dim as f64
}

fn primal_dual(ops: &[CMatrix], dim: usize, tolerance: f64, cap: usize) -> Bracket {
    let mut povm = povm_from(ops, ops);
    let mut lo = primal_value(ops, &povm);
    let mut hi = dual_value(ops, &povm, dim);
    let trivial = ops.iter().map(|a| a.trace().re).fold(0.0, f64::max);
    lo = lo.max(trivial);
    hi = hi.min(ops.iter().map(|a| a.trace().re).sum());
    let mut iter = 0;
    while hi - lo > tolerance && iter < cap {
        let next: Vec<CMatrix> = ops.iter().zip(&povm).map(|(a, p)| a * p * a).collect();
        povm = povm_from(&next, ops);
        lo = lo.max(primal_value(ops, &povm));
        hi = hi.min(dual_value(ops, &povm, dim));
        iter += 1;
    }
    Bracket { lo, hi: hi.max(lo), method: Method::PrimalDual }
}

/// −log2 of the guessing bracket; the zero state has +∞ entropy.
pub fn hmin(rho: &CqState) -> Bracket {
    hmin_from_pguess(pguess_cq(rho))
}

pub fn hmin_from_pguess(p: Bracket) -> Bracket {
    Bracket { lo: neg_log2(p.hi), hi: neg_log2(p.lo), method: p.method }
}

/// Capped distribution together with its entropy bracket.
#[derive(Clone, Debug)]
pub struct Smoothed {
    pub bracket: Bracket,
    pub witness: ClassicalJoint,
}

pub fn hmin_smooth_classical(p: &ClassicalJoint, delta: f64) -> Result<Bracket> {
    Ok(smooth_classical(p, delta)?.bracket)
}

const SEARCH_STEPS: usize = 80;

pub fn smooth_classical(p: &ClassicalJoint, delta: f64) -> Result<Smoothed> {
    smooth_with(p, delta, &[false, true])
}

/// Mass-preserving candidates only.
pub fn smooth_classical_renormalized(p: &ClassicalJoint, delta: f64) -> Result<Smoothed> {
    smooth_with(p, delta, &[true])
}

fn smooth_with(p: &ClassicalJoint, delta: f64, modes: &[bool]) -> Result<Smoothed> {
    if !(0.0..1.0).contains(&delta) {
        return invalid(format!("smoothing parameter {delta} outside [0,1)"));
    }
    let base = hmin_classical(p);
    if delta == 0.0 || p.table().is_empty() {
        return Ok(Smoothed { bracket: Bracket::exact(base), witness: p.clone() });
    }
    let keys = support_grid(p);
    let pv: Vec<f64> = keys.iter().map(|&(x, e)| p.get(x, e)).collect();
    let cmax = pv.iter().copied().fold(0.0, f64::max);

    let mut best = Smoothed { bracket: Bracket { lo: base, hi: base, method: Method::SmoothingSearch }, witness: p.clone() };
    for &renormalize in modes {
        let feasible = |cap: f64| -> Option<Vec<f64>> {
            let q = capped(&pv, cap, renormalize)?;
            (purified_distance_diag(&q, &pv).ok()? <= delta).then_some(q)
        };
        let (mut lo_c, mut hi_c) = (0.0, cmax);
        if feasible(0.0).is_some() {
            hi_c = 0.0;
        } else {
            for _ in 0..SEARCH_STEPS {
                let mid = 0.5 * (lo_c + hi_c);
                if feasible(mid).is_some() {
                    hi_c = mid;
                } else {
                    lo_c = mid;
                }
            }
        }
        let Some(q) = feasible(hi_c) else { continue };
        let witness = ClassicalJoint::new(p.x_bits(), keys.iter().copied().zip(q))?;
        let lo = hmin_classical(&witness);
        let slack = capped(&pv, lo_c, renormalize)
            .and_then(|q| ClassicalJoint::new(p.x_bits(), keys.iter().copied().zip(q)).ok())
            .map(|w| hmin_classical(&w) - lo)
            .filter(|s| s.is_finite() && *s > 0.0)
            .unwrap_or(0.0);
        if lo > best.bracket.lo {
            best = Smoothed { bracket: Bracket { lo, hi: lo + slack, method: Method::SmoothingSearch }, witness };
        }
    }
    Ok(best)
}

/// Every (x, e) with x in the observed X alphabet and e in the support of E.
fn support_grid(p: &ClassicalJoint) -> Vec<(u64, u64)> {
    let xs = p.x_values();
    let es = p.e_values();
    es.iter().flat_map(|&e| xs.iter().map(move |&x| (x, e))).collect()
}

/// Caps entries at `cap`; optionally refills the removed mass below the cap.
fn capped(p: &[f64], cap: f64, renormalize: bool) -> Option<Vec<f64>> {
    let mut q: Vec<f64> = p.iter().map(|&v| v.min(cap)).collect();
    if renormalize {
        let removed: f64 = p.iter().zip(&q).map(|(a, b)| a - b).sum();
        let room: f64 = q.iter().map(|&v| cap - v).sum();
        if removed > room + 1e-15 {
            return None;
        }
        if room > 0.0 {
            let f = removed / room;
            q.iter_mut().for_each(|v| *v += f * (cap - *v));
        }
    }
    Some(q)
}

/// Classical P_ABZ over (a, b, z) with a declared |Z|.
#[derive(Clone, Debug)]
pub struct TripartiteJoint {
    pub a_bits: usize,
    pub z_card: u64,
    pub table: BTreeMap<(u64, u64, u64), f64>,
}

impl TripartiteJoint {
    fn encode(&self, b: u64, z: u64) -> u64 {
        b * self.z_card + z
    }

    /// P_{A, (B,Z)}.
    pub fn a_given_bz(&self) -> Result<ClassicalJoint> {
        ClassicalJoint::new(self.a_bits, self.table.iter().map(|(&(a, b, z), &p)| ((a, self.encode(b, z)), p)))
    }

    /// P_{A, B} with Z traced out.
    pub fn a_given_b(&self) -> Result<ClassicalJoint> {
        ClassicalJoint::new(self.a_bits, self.table.iter().map(|(&(a, b, _), &p)| ((a, b), p)))
    }

    /// P_{A,B} restricted to the event `z ∈ event`.
    pub fn a_given_b_on(&self, event: impl Fn(u64) -> bool) -> Result<ClassicalJoint> {
        ClassicalJoint::new(
            self.a_bits,
            self.table.iter().filter(|(&(_, _, z), _)| event(z)).map(|(&(a, b, _), &p)| ((a, b), p)),
        )
    }

    pub fn random(rng: &mut impl Rng, a_card: u64, b_card: u64, z_card: u64, mass: f64) -> Self {
        let a_bits = (64 - (a_card.max(2) - 1).leading_zeros()) as usize;
        let sparsity: f64 = rng.gen_range(0.2..1.0);
        let mut raw = BTreeMap::new();
        for a in 0..a_card {
            for b in 0..b_card {
                for z in 0..z_card {
                    if rng.gen_bool(sparsity) {
                        raw.insert((a, b, z), rng.gen_range(0.0..1.0f64).powi(3));
                    }
                }
            }
        }
        if raw.is_empty() {
            raw.insert((0, 0, 0), 1.0);
        }
        let total: f64 = raw.values().sum();
        raw.values_mut().for_each(|v| *v *= mass / total);
        Self { a_bits, z_card, table: raw }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaCheck {
    pub lhs: Bracket,
    pub rhs: Bracket,
    pub holds: bool,
}

/// Witness q_AB lifted to q_ABZ = q_AB · P(z|a,b), which keeps the purified
/// distance to P_ABZ equal to that of q_AB to P_AB.
fn lift_witness(q_ab: &ClassicalJoint, p: &TripartiteJoint, keep: impl Fn(u64) -> bool, with_z: bool) -> Result<ClassicalJoint> {
    let marg = p.a_given_b()?;
    let mut entries = Vec::new();
    for (&(a, b, z), &v) in &p.table {
        let pab = marg.get(a, b);
        if pab > 0.0 && keep(z) {
            let e = if with_z { p.encode(b, z) } else { b };
            entries.push(((a, e), q_ab.get(a, b) * v / pab));
        }
    }
    ClassicalJoint::new(p.a_bits, entries)
}

/// Hmin^δ(A|BZ) ≥ Hmin^δ(A|B) − log|Z|, compared as lo(LHS) vs hi(RHS).
pub fn check_chain_rule(p: &TripartiteJoint, delta: f64, tol: f64) -> Result<LemmaCheck> {
    let bz = p.a_given_bz()?;
    let b = p.a_given_b()?;
    let rhs_s = smooth_classical(&b, delta)?;
    let log_z = (p.z_card.max(1) as f64).log2();
    let mut lhs = smooth_classical(&bz, delta)?.bracket;
    if delta > 0.0 {
        let lifted = lift_witness(&rhs_s.witness, p, |_| true, true)?;
        let pv: Vec<f64> = bz.table().keys().map(|&(a, e)| bz.get(a, e)).collect();
        let qv: Vec<f64> = bz.table().keys().map(|&(a, e)| lifted.get(a, e)).collect();
        if purified_distance_diag(&qv, &pv)? <= delta + 1e-12 {
            lhs.lo = lhs.lo.max(hmin_classical(&lifted));
            lhs.hi = lhs.hi.max(lhs.lo);
        }
    }
    let rhs = Bracket { lo: rhs_s.bracket.lo - log_z, hi: rhs_s.bracket.hi - log_z, method: rhs_s.bracket.method };
    Ok(LemmaCheck { holds: lhs.lo + tol >= rhs.hi, lhs, rhs })
}

/// Hmin^δ[ρ^{z∈event}](A|B) ≥ Hmin^δ[ρ](A|B).
pub fn check_event_conditioning(p: &TripartiteJoint, event: impl Fn(u64) -> bool + Copy, delta: f64, tol: f64) -> Result<LemmaCheck> {
    let whole = p.a_given_b()?;
    let branch = p.a_given_b_on(event)?;
    let rhs_s = smooth_classical(&whole, delta)?;
    let mut lhs = smooth_classical(&branch, delta)?.bracket;
    if delta > 0.0 && branch.mass() > 0.0 {
        let lifted = lift_witness(&rhs_s.witness, p, event, false)?;
        let keys: Vec<(u64, u64)> = branch.table().keys().copied().collect();
        let pv: Vec<f64> = keys.iter().map(|&(a, b)| branch.get(a, b)).collect();
        let qv: Vec<f64> = keys.iter().map(|&(a, b)| lifted.get(a, b)).collect();
        if purified_distance_diag(&qv, &pv)? <= delta + 1e-12 {
            lhs.lo = lhs.lo.max(hmin_classical(&lifted));
            lhs.hi = lhs.hi.max(lhs.lo);
        }
    }
    let rhs = rhs_s.bracket;
    Ok(LemmaCheck { holds: lhs.lo + tol >= rhs.hi, lhs, rhs })
}

/// Splits side information B⊗Z (Z last, classical) and keeps the Z = `select` branch.
pub fn condition_on_event(rho: &CqState, z_dim: usize, select: usize) -> Result<CqState> {
    if z_dim < 2 || rho.dim() % z_dim != 0 {
        return invalid("state has no classical flag register of the given size");
    }
    if select >= z_dim {
        return invalid("flag value out of range");
    }
    let b_dim = rho.dim() / z_dim;
    let dims = [b_dim, z_dim];
    let mut parts = Vec::new();
    for (x, br) in rho.branches() {
        let m = br.state.matrix() * c(br.weight, 0.0);
        for i in 0..rho.dim() {
            for j in 0..rho.dim() {
                if i % z_dim != j % z_dim && m[(i, j)].norm() > 1e-10 {
                    return invalid("flag register is not classical");
                }
            }
        }
        let mut e = CVector::zeros(z_dim);
        e[select] = c(1.0, 0.0);
        parts.push((*x, DensityOperator::from_matrix_unchecked(project_subsystem(&m, &dims, 1, &e)?)));
    }
    CqState::from_unnormalized(b_dim, parts)
}

/// Chain rule at δ = 0 for side information B⊗Z with classical Z last.
pub fn check_chain_rule_cq(rho: &CqState, z_dim: usize, tol: f64) -> Result<LemmaCheck> {
    if rho.dim() % z_dim != 0 {
        return invalid("side dimension not divisible by |Z|");
    }
    let b_dim = rho.dim() / z_dim;
    let lhs = hmin(rho);
    let traced = CqState::from_unnormalized(
        b_dim,
        rho.branches().iter().map(|(x, br)| {
            let m = crate::quantum::partial_trace_matrix(&(br.state.matrix() * c(br.weight, 0.0)), &[true, false], &[b_dim, z_dim])
                .expect("factorization checked");
            (*x, DensityOperator::from_matrix_unchecked(m))
        }),
    )?;
    let r = hmin(&traced);
    let log_z = (z_dim as f64).log2();
    let rhs = Bracket { lo: r.lo - log_z, hi: r.hi - log_z, method: r.method };
    Ok(LemmaCheck { holds: lhs.lo + tol >= rhs.hi, lhs, rhs })
}

/// Brute-force pguess over projective qubit measurements on a grid of Bloch
/// directions plus the two constant guesses; a lower bound converging to the
/// optimum for two outcomes.
pub fn pguess_grid_qubit(ops: &[CMatrix], steps: usize) -> f64 {
    assert_eq!(ops.len(), 2);
    let mut best = ops[0].trace().re.max(ops[1].trace().re);
    for i in 0..steps {
        let th = std::f64::consts::PI * i as f64 / steps as f64;
        for j in 0..steps {
            let ph = 2.0 * std::f64::consts::PI * j as f64 / steps as f64;
            let v = CVector::from_row_slice(&[c((th / 2.0).cos(), 0.0), c(ph.cos(), ph.sin()) * (th / 2.0).sin()]);
            let p0 = &v * v.adjoint();
            let p1 = CMatrix::identity(2, 2) - &p0;
            let val = (&ops[0] * &p0).trace().re + (&ops[1] * &p1).trace().re;
            best = best.max(val);
        }
    }
    best
}

/// Operator square root, exposed for proof-chain checks.
pub fn sqrt_op(m: &CMatrix) -> CMatrix {
    herm_fn(m, |v| v.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::conjugate_code_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    fn cq(parts: &[(u64, f64, &str, &str)]) -> CqState {
        CqState::from_unnormalized(
            2,
            parts.iter().map(|&(x, w, v, th)| (Symbol::Value(x), conjugate_code_state(&bs(v), &bs(th)).unwrap().scale(w))),
        )
        .unwrap()
    }

    #[test]
    fn classical_examples() {
        assert!((pguess_classical(&ClassicalJoint::uniform(2)) - 0.25).abs() < 1e-15);
        let copy = ClassicalJoint::new(2, (0..4).map(|x| ((x, x), 0.25))).unwrap();
        assert!((pguess_classical(&copy) - 1.0).abs() < 1e-15);
        let p = ClassicalJoint::new(1, [((0, 0), 0.5), ((1, 0), 0.25), ((1, 1), 0.25)]).unwrap();
        assert!((pguess_classical(&p) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cq_examples() {
        let orth = pguess_cq(&cq(&[(0, 0.5, "0", "0"), (1, 0.5, "1", "0")]));
        assert!((orth.lo - 1.0).abs() < 1e-12 && orth.method == Method::Exact);
        let hel = pguess_cq(&cq(&[(0, 0.5, "0", "0"), (1, 0.5, "0", "1")]));
        let expect = 0.5 + 0.5 * std::f64::consts::FRAC_1_SQRT_2;
        assert!((hel.lo - expect).abs() < 1e-12);
        assert_eq!(hel.method, Method::Helstrom);
        let ops: Vec<CMatrix> = [("0", "0"), ("0", "1")]
            .iter()
            .map(|(v, t)| conjugate_code_state(&bs(v), &bs(t)).unwrap().scale(0.5).matrix().clone())
            .collect();
        let grid = pguess_grid_qubit(&ops, 100);
        assert!(grid <= hel.hi + 1e-12 && grid >= hel.lo - 1e-3);
        let h = hmin(&cq(&[(0, 0.5, "0", "0"), (1, 0.5, "0", "1")]));
        assert!((h.lo - 0.228_447).abs() < 1e-5);
        let same = pguess_cq(&cq(&[(0, 0.2, "0", "1"), (1, 0.3, "0", "1"), (2, 0.5, "0", "1")]));
        assert!((same.lo - 0.5).abs() < 1e-6 && (same.hi - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_state_is_infinite() {
        let z = CqState::from_unnormalized(2, std::iter::empty()).unwrap();
        let h = hmin(&z);
        assert!(h.lo.is_infinite() && h.lo > 0.0);
        let json = serde_json::to_string(&h).unwrap();
        assert!(json.contains("\"inf\""));
        let back: Bracket = serde_json::from_str(&json).unwrap();
        assert!(back.lo.is_infinite());
    }

    #[test]
    fn primal_dual_on_trine() {
        let s3 = 3f64.sqrt() / 2.0;
        let vecs = [[1.0, 0.0], [-0.5, s3], [-0.5, -s3]];
        let ops: Vec<CMatrix> = vecs
            .iter()
            .map(|v| {
                let k = CVector::from_row_slice(&[c(v[0], 0.0), c(v[1], 0.0)]);
                &k * k.adjoint() * c(1.0 / 3.0, 0.0)
            })
            .collect();
        let b = pguess_operators(&ops, 2, 1e-9, 10_000);
        assert!(b.lo <= 2.0 / 3.0 + 1e-9 && b.hi >= 2.0 / 3.0 - 1e-9, "{b:?}");
        assert!(b.hi - b.lo < 1e-6);
    }

    #[test]
    fn smoothing_examples() {
        let u = ClassicalJoint::uniform(3);
        let b = smooth_classical_renormalized(&u, 0.3).unwrap().bracket;
        assert!((b.lo - 3.0).abs() < 1e-9);
        // dropping mass is allowed by the purified-distance ball
        assert!(hmin_smooth_classical(&u, 0.3).unwrap().lo > 3.0);
        let det = ClassicalJoint::new(2, [((1, 0), 1.0)]).unwrap();
        assert_eq!(hmin_smooth_classical(&det, 0.0).unwrap().lo, 0.0);
        let s = hmin_smooth_classical(&det, 0.1).unwrap();
        assert!(s.lo > 0.0);
        assert!(hmin_smooth_classical(&det, 1.0).is_err());
    }

    #[test]
    fn chain_rule_examples() {
        let mut table = BTreeMap::new();
        for a in 0..4u64 {
            table.insert((a, 0, a >> 1), 0.25);
        }
        let p = TripartiteJoint { a_bits: 2, z_card: 2, table };
        let r = check_chain_rule(&p, 0.0, EXACT_WIDTH).unwrap();
        assert!(r.holds && (r.lhs.lo - 1.0).abs() < 1e-12 && (r.rhs.hi - 1.0).abs() < 1e-12);
        let mut table = BTreeMap::new();
        for a in 0..4u64 {
            table.insert((a, 0, 0), 0.25);
        }
        let p = TripartiteJoint { a_bits: 2, z_card: 1, table };
        let r = check_chain_rule(&p, 0.0, EXACT_WIDTH).unwrap();
        assert!(r.holds && (r.lhs.lo - r.rhs.hi).abs() < 1e-12);
    }

    #[test]
    fn event_conditioning_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = TripartiteJoint::random(&mut rng, 4, 3, 2, 1.0);
        let always0 = TripartiteJoint {
            table: p.table.iter().map(|(&(a, b, _), &v)| ((a, b, 0), v)).collect(),
            ..p.clone()
        };
        let r = check_event_conditioning(&always0, |z| z == 0, 0.0, EXACT_WIDTH).unwrap();
        assert!(r.holds && (r.lhs.lo - r.rhs.lo).abs() < 1e-12);
        let r = check_event_conditioning(&always0, |z| z == 1, 0.0, EXACT_WIDTH).unwrap();
        assert!(r.holds && r.lhs.lo.is_infinite());
    }

    #[test]
    fn quantum_flag_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let parts: Vec<_> = (0..3u64)
            .map(|x| {
                let b0 = crate::quantum::random_density(2, 0.1 + 0.03 * x as f64, &mut rng);
                let b1 = crate::quantum::random_density(2, 0.15, &mut rng);
                let op = b0.tensor(&DensityOperator::basis(2, 0)).add(&b1.tensor(&DensityOperator::basis(2, 1))).unwrap();
                (Symbol::Value(x), op)
            })
            .collect();
        let rho = CqState::from_unnormalized(4, parts).unwrap();
        let branch = condition_on_event(&rho, 2, 0).unwrap();
        assert_eq!(branch.dim(), 2);
        let whole = hmin(&CqState::from_unnormalized(
            2,
            rho.branches().iter().map(|(x, b)| {
                let m = crate::quantum::partial_trace_matrix(&(b.state.matrix() * c(b.weight, 0.0)), &[true, false], &[2, 2]).unwrap();
                (*x, DensityOperator::from_matrix_unchecked(m))
            }),
        )
        .unwrap());
        assert!(hmin(&branch).lo + 1e-6 >= whole.hi);
        assert!(check_chain_rule_cq(&rho, 2, 1e-6).unwrap().holds);
        assert!(condition_on_event(&rho, 3, 0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let p = ClassicalJoint::new(3, [((5, 0), 0.5), ((2, 1), 0.25)]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("101,0,"));
        assert_eq!(ClassicalJoint::read_csv(&buf[..]).unwrap(), p);
    }
}
