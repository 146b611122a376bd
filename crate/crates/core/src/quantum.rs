//! Dense finite-dimensional density-operator engine.
//!
//! Operators may be subnormalized. Square roots and absolute values go
//! through a Hermitian eigendecomposition with eigenvalues above `-1e-10`
//! clamped to zero.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bitlinalg::Bitstring;
use crate::error::{invalid, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const MAX_DIM: usize = 1 << 10;
pub const MAX_QUBITS: usize = 10;
pub const HERM_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Real eigenvalues and eigenvectors of the Hermitian part of `m`.
pub fn herm_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn herm_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
}

/// Applies `f` to the spectrum of the Hermitian matrix `m`.
pub fn herm_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = herm_eig(m);
    let d = CMatrix::from_diagonal(&CVector::from_iterator(vals.len(), vals.iter().map(|&v| c(f(v), 0.0))));
    &vecs * d * vecs.adjoint()
}

fn clamp_psd(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    herm_fn(m, |v| clamp_psd(v).sqrt())
}

pub fn trace_norm(m: &CMatrix) -> f64 {
    herm_eigenvalues(m).iter().map(|v| v.abs()).sum()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn hadamard() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)])
}

pub fn pauli(p: char) -> CMatrix {
    match p {
        'I' => CMatrix::identity(2, 2),
        'X' => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        'Y' => CMatrix::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]),
        'Z' => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c(-1.0, 0.0)]),
        other => panic!("unknown Pauli {other}"),
    }
}

/// The pure state H^θ|x⟩ as a vector.
pub fn conjugate_code_vector(x: &Bitstring, theta: &Bitstring) -> Result<CVector> {
    if x.len() != theta.len() {
        return invalid(format!("x has length {}, theta {}", x.len(), theta.len()));
    }
    if x.len() > MAX_QUBITS {
        return invalid(format!("{} qubits exceed the dense cap of {MAX_QUBITS}", x.len()));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CVector::from_element(1, ONE);
    for i in 0..x.len() {
        let q = match (theta.get(i), x.get(i)) {
            (false, false) => [ONE, ZERO],
            (false, true) => [ZERO, ONE],
            (true, false) => [c(s, 0.0), c(s, 0.0)],
            (true, true) => [c(s, 0.0), c(-s, 0.0)],
        };
        v = v.kronecker(&CVector::from_row_slice(&q));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    /// Checks Hermiticity, positivity and trace within [`HERM_TOL`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return invalid("density operator must be square");
        }
        if matrix.nrows() > MAX_DIM || matrix.nrows() == 0 {
            return invalid(format!("dimension {} outside 1..={MAX_DIM}", matrix.nrows()));
        }
        let asym = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > HERM_TOL {
            return invalid(format!("not Hermitian (deviation {asym:e})"));
        }
        let vals = herm_eigenvalues(&matrix);
        if vals.iter().any(|&v| v < -HERM_TOL) {
            return invalid("negative eigenvalue");
        }
        let tr: f64 = matrix.trace().re;
        if tr > 1.0 + HERM_TOL {
            return invalid(format!("trace {tr} exceeds 1"));
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix known to satisfy the invariants up to rounding.
    pub fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn zero(dim: usize) -> Self {
        Self { matrix: CMatrix::zeros(dim, dim) }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim) * c(1.0 / dim as f64, 0.0) }
    }

    pub fn pure(v: &CVector) -> Self {
        Self { matrix: v * v.adjoint() }
    }

    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(CMatrix::from_diagonal(&CVector::from_iterator(
            probs.len(),
            probs.iter().map(|&p| c(p, 0.0)),
        )))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(i, i)] = ONE;
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { matrix: &self.matrix * c(s, 0.0) }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_dim(self, other)?;
        Ok(Self { matrix: &self.matrix + &other.matrix })
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self { matrix: kron(&self.matrix, &other.matrix) }
    }

    pub fn normalized(&self) -> Option<Self> {
        let t = self.trace();
        (t > 0.0).then(|| self.scale(1.0 / t))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        herm_eigenvalues(&self.matrix)
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.matrix[(i, j)].norm() <= tol))
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Entries as `[re, im]` pairs, row-major.
    pub fn entries_row_major(&self) -> Vec<[f64; 2]> {
        let d = self.dim();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| [self.matrix[(i, j)].re, self.matrix[(i, j)].im])
            .collect()
    }
}

impl Serialize for DensityOperator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("DensityOperator", 2)?;
        st.serialize_field("dim", &self.dim())?;
        st.serialize_field("entries", &self.entries_row_major())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for DensityOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dim: usize,
            entries: Vec<[f64; 2]>,
        }
        let raw = Raw::deserialize(d)?;
        if raw.entries.len() != raw.dim * raw.dim {
            return Err(serde::de::Error::custom("entry count does not match dim"));
        }
        let m = CMatrix::from_row_iterator(raw.dim, raw.dim, raw.entries.iter().map(|e| c(e[0], e[1])));
        DensityOperator::new(m).map_err(serde::de::Error::custom)
    }
}

fn same_dim(a: &DensityOperator, b: &DensityOperator) -> Result<()> {
    if a.dim() != b.dim() {
        return invalid(format!("dimensions {} and {} differ", a.dim(), b.dim()));
    }
    Ok(())
}

pub fn conjugate_code_state(x: &Bitstring, theta: &Bitstring) -> Result<DensityOperator> {
    Ok(DensityOperator::pure(&conjugate_code_vector(x, theta)?))
}

/// Outcome weights tr(P^θ_x ρ) of the BB-basis measurement, in increasing x order.
pub fn measure_bb(rho: &DensityOperator, theta: &Bitstring) -> Result<Vec<(Bitstring, f64)>> {
    let n = theta.len();
    if n > MAX_QUBITS || rho.dim() != 1 << n {
        return invalid(format!("state of dim {} cannot be measured on {n} qubits", rho.dim()));
    }
    Bitstring::all(n)
        .map(|x| {
            let v = conjugate_code_vector(&x, theta)?;
            let w = (v.adjoint() * rho.matrix() * &v)[(0, 0)].re;
            Ok((x, w))
        })
        .collect()
}

/// Measures the first `theta.len()` qubits in basis θ and returns, per
/// outcome, the unnormalized residual state on the remaining factor.
pub fn measure_bb_subsystem(
    rho: &DensityOperator,
    theta: &Bitstring,
) -> Result<Vec<(Bitstring, DensityOperator)>> {
    let n = theta.len();
    let a = 1usize << n;
    if rho.dim() % a != 0 {
        return invalid(format!("dim {} not divisible by 2^{n}", rho.dim()));
    }
    let dims = [a, rho.dim() / a];
    Bitstring::all(n)
        .map(|x| {
            let v = conjugate_code_vector(&x, theta)?;
            Ok((x, DensityOperator::from_matrix_unchecked(project_subsystem(rho.matrix(), &dims, 0, &v)?)))
        })
        .collect()
}

fn multi_index(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
    out
}

fn flat_index(parts: &[usize], dims: &[usize]) -> usize {
    parts.iter().zip(dims).fold(0, |acc, (&p, &d)| acc * d + p)
}

fn check_factorization(total: usize, dims: &[usize]) -> Result<()> {
    if dims.iter().product::<usize>() != total {
        return invalid(format!("factor dims {dims:?} do not multiply to {total}"));
    }
    Ok(())
}

/// Contracts factor `which` with ⟨ψ|·|ψ⟩; remaining factors keep their order.
pub fn project_subsystem(m: &CMatrix, dims: &[usize], which: usize, psi: &CVector) -> Result<CMatrix> {
    check_factorization(m.nrows(), dims)?;
    if psi.len() != dims[which] {
        return invalid("projector vector has the wrong dimension");
    }
    let rest: Vec<usize> = dims.iter().enumerate().filter(|&(k, _)| k != which).map(|(_, &d)| d).collect();
    let rd: usize = rest.iter().product();
    let mut out = CMatrix::zeros(rd, rd);
    let embed = |r: usize, s: usize| {
        let mut parts = multi_index(r, &rest);
        parts.insert(which, s);
        flat_index(&parts, dims)
    };
    for r1 in 0..rd {
        for r2 in 0..rd {
            let mut acc = ZERO;
            for s1 in 0..dims[which] {
                if psi[s1] == ZERO {
                    continue;
                }
                for s2 in 0..dims[which] {
                    if psi[s2] == ZERO {
                        continue;
                    }
                    acc += psi[s1].conj() * m[(embed(r1, s1), embed(r2, s2))] * psi[s2];
                }
            }
            out[(r1, r2)] = acc;
        }
    }
    Ok(out)
}

/// Reorders tensor factors: new factor `k` is old factor `order[k]`.
pub fn permute_subsystems(m: &CMatrix, dims: &[usize], order: &[usize]) -> Result<CMatrix> {
    check_factorization(m.nrows(), dims)?;
    let mut seen = vec![false; dims.len()];
    if order.len() != dims.len() || order.iter().any(|&k| k >= dims.len() || std::mem::replace(&mut seen[k], true)) {
        return invalid("order is not a permutation of the factors");
    }
    let new_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let remap = |i: usize| {
        let parts = multi_index(i, &new_dims);
        let mut old = vec![0; dims.len()];
        for (k, &o) in order.iter().enumerate() {
            old[o] = parts[k];
        }
        flat_index(&old, dims)
    };
    let d = m.nrows();
    let idx: Vec<usize> = (0..d).map(remap).collect();
    Ok(CMatrix::from_fn(d, d, |i, j| m[(idx[i], idx[j])]))
}

pub fn partial_trace_matrix(m: &CMatrix, keep: &[bool], dims: &[usize]) -> Result<CMatrix> {
    check_factorization(m.nrows(), dims)?;
    if keep.len() != dims.len() {
        return invalid("keep mask and dims differ in length");
    }
    let kept: Vec<usize> = (0..dims.len()).filter(|&k| keep[k]).map(|k| dims[k]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|&k| !keep[k]).map(|k| dims[k]).collect();
    let kd: usize = kept.iter().product();
    let td: usize = traced.iter().product();
    let join = |a: usize, b: usize| {
        let (ka, tb) = (multi_index(a, &kept), multi_index(b, &traced));
        let (mut ki, mut ti) = (ka.into_iter(), tb.into_iter());
        let parts: Vec<usize> = keep.iter().map(|&k| if k { ki.next() } else { ti.next() }.unwrap()).collect();
        flat_index(&parts, dims)
    };
    let mut out = CMatrix::zeros(kd, kd);
    for i in 0..kd {
        for j in 0..kd {
            out[(i, j)] = (0..td).map(|t| m[(join(i, t), join(j, t))]).sum();
        }
    }
    Ok(out)
}

pub fn partial_trace(rho: &DensityOperator, keep: &[bool], dims: &[usize]) -> Result<DensityOperator> {
    Ok(DensityOperator::from_matrix_unchecked(partial_trace_matrix(rho.matrix(), keep, dims)?))
}

pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    same_dim(rho, sigma)?;
    Ok(0.5 * trace_norm(&(rho.matrix() - sigma.matrix())))
}

pub fn generalized_trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    Ok(trace_distance(rho, sigma)? + 0.5 * (rho.trace() - sigma.trace()).abs())
}

pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    same_dim(rho, sigma)?;
    let sr = psd_sqrt(rho.matrix());
    let inner = &sr * sigma.matrix() * &sr;
    Ok(herm_eigenvalues(&inner).into_iter().map(|v| clamp_psd(v).sqrt()).sum())
}

pub fn generalized_fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    let slack = (clamp_psd(1.0 - rho.trace()) * clamp_psd(1.0 - sigma.trace())).sqrt();
    Ok(fidelity(rho, sigma)? + slack)
}

pub fn purified_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    let f = generalized_fidelity(rho, sigma)?.min(1.0);
    Ok(clamp_psd(1.0 - f * f).sqrt())
}

/// Purified distance between diagonal operators given by their diagonals.
pub fn purified_distance_diag(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return invalid("diagonals differ in length");
    }
    let f: f64 = p.iter().zip(q).map(|(a, b)| (clamp_psd(*a) * clamp_psd(*b)).sqrt()).sum();
    let (tp, tq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    let fbar = (f + (clamp_psd(1.0 - tp) * clamp_psd(1.0 - tq)).sqrt()).min(1.0);
    Ok(clamp_psd(1.0 - fbar * fbar).sqrt())
}

#[derive(Clone, Debug)]
pub struct KrausChannel {
    dim_in: usize,
    dim_out: usize,
    operators: Vec<CMatrix>,
    trace_preserving: bool,
}

impl KrausChannel {
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = operators.first() else {
            return invalid("a channel needs at least one Kraus operator");
        };
        let (dim_out, dim_in) = first.shape();
        if operators.iter().any(|k| k.shape() != (dim_out, dim_in)) {
            return invalid("Kraus operators of different shapes");
        }
        let gram = operators.iter().fold(CMatrix::zeros(dim_in, dim_in), |acc, k| acc + k.adjoint() * k);
        let top = herm_eigenvalues(&gram).into_iter().fold(f64::MIN, f64::max);
        if top > 1.0 + HERM_TOL {
            return invalid(format!("Kraus operators increase trace (norm {top})"));
        }
        let dev = (&gram - CMatrix::identity(dim_in, dim_in)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(Self { dim_in, dim_out, operators, trace_preserving: dev <= HERM_TOL })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(vec![CMatrix::identity(d, d)]).expect("identity is a channel")
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    /// Pauli string such as `"XZ"` acting qubit-wise.
    pub fn pauli_string(s: &str) -> Self {
        let u = s.chars().fold(CMatrix::identity(1, 1), |acc, p| kron(&acc, &pauli(p)));
        Self::new(vec![u]).expect("Pauli strings are unitary")
    }

    /// Replaces a qubit by I/2.
    pub fn depolarizing_qubit() -> Self {
        Self::new(['I', 'X', 'Y', 'Z'].iter().map(|&p| pauli(p) * c(0.5, 0.0)).collect())
            .expect("full depolarizing is a channel")
    }

    /// Measures in basis `basis` and re-prepares the observed conjugate-coding
    /// state; Kraus index equals the outcome integer.
    pub fn measure_resend(basis: &Bitstring) -> Self {
        let n = basis.len();
        let ops = Bitstring::all(n)
            .map(|r| {
                let v = conjugate_code_vector(&r, basis).expect("lengths agree");
                &v * v.adjoint()
            })
            .collect();
        Self::new(ops).expect("projective measurement is a channel")
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    pub fn tensor(&self, other: &KrausChannel) -> KrausChannel {
        let ops = self
            .operators
            .iter()
            .flat_map(|a| other.operators.iter().map(move |b| kron(a, b)))
            .collect();
        KrausChannel::new(ops).expect("tensor of channels is a channel")
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &KrausChannel) -> Result<KrausChannel> {
        if first.dim_out != self.dim_in {
            return invalid("composition dimensions mismatch");
        }
        KrausChannel::new(
            self.operators
                .iter()
                .flat_map(|a| first.operators.iter().map(move |b| a * b))
                .collect(),
        )
    }

    /// Each Kraus branch separately: K_j ρ K_j†.
    pub fn branches(&self, rho: &CMatrix) -> Vec<CMatrix> {
        self.operators.iter().map(|k| k * rho * k.adjoint()).collect()
    }
}

pub fn apply_channel(ch: &KrausChannel, rho: &DensityOperator) -> Result<DensityOperator> {
    if rho.dim() != ch.dim_in {
        return invalid(format!("channel input dim {} but state dim {}", ch.dim_in, rho.dim()));
    }
    let out = ch
        .branches(rho.matrix())
        .into_iter()
        .fold(CMatrix::zeros(ch.dim_out, ch.dim_out), |acc, m| acc + m);
    Ok(DensityOperator::from_matrix_unchecked(out))
}

/// Classical label of a cq-state branch; `Bot` is the abort symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Value(u64),
    Bot,
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub weight: f64,
    pub state: DensityOperator,
}

/// Classical–quantum ensemble Σ_x w_x |x⟩⟨x| ⊗ ρ_x with normalized ρ_x.
#[derive(Clone, Debug)]
pub struct CqState {
    dim: usize,
    branches: BTreeMap<Symbol, Branch>,
}

impl CqState {
    pub fn new(dim: usize, branches: BTreeMap<Symbol, Branch>) -> Result<Self> {
        let mut total = 0.0;
        for b in branches.values() {
            if b.state.dim() != dim {
                return invalid("conditional of wrong dimension");
            }
            if b.weight < 0.0 {
                return invalid("negative branch weight");
            }
            if (b.state.trace() - 1.0).abs() > 1e-8 {
                return invalid("conditional not normalized");
            }
            total += b.weight;
        }
        if total > 1.0 + 1e-9 {
            return invalid(format!("total weight {total} exceeds 1"));
        }
        Ok(Self { dim, branches })
    }

    /// Builds from unnormalized operators w_x ρ_x; zero-trace branches are dropped.
    pub fn from_unnormalized(dim: usize, parts: impl IntoIterator<Item = (Symbol, DensityOperator)>) -> Result<Self> {
        let mut acc: BTreeMap<Symbol, CMatrix> = BTreeMap::new();
        for (x, op) in parts {
            if op.dim() != dim {
                return invalid("operator of wrong dimension");
            }
            let e = acc.entry(x).or_insert_with(|| CMatrix::zeros(dim, dim));
            *e += op.matrix();
        }
        let branches = acc
            .into_iter()
            .filter_map(|(x, m)| {
                let op = DensityOperator::from_matrix_unchecked(m);
                let w = op.trace();
                (w > 0.0).then(|| (x, Branch { weight: w, state: op.scale(1.0 / w) }))
            })
            .collect();
        Self::new(dim, branches)
    }

    pub fn classical(probs: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        Self::from_unnormalized(1, probs.into_iter().map(|(x, p)| (Symbol::Value(x), DensityOperator::diagonal(&[p]).unwrap_or_else(|_| DensityOperator::zero(1)))))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branches(&self) -> &BTreeMap<Symbol, Branch> {
        &self.branches
    }

    pub fn total_weight(&self) -> f64 {
        self.branches.values().map(|b| b.weight).sum()
    }

    pub fn unnormalized(&self, x: &Symbol) -> Option<DensityOperator> {
        self.branches.get(x).map(|b| b.state.scale(b.weight))
    }

    /// The non-⊥ part σ_XE.
    pub fn without_bot(&self) -> CqState {
        let branches = self.branches.iter().filter(|(x, _)| **x != Symbol::Bot).map(|(x, b)| (*x, b.clone())).collect();
        CqState { dim: self.dim, branches }
    }

    /// Applies a channel to the quantum side of every branch.
    pub fn map_side(&self, ch: &KrausChannel) -> Result<CqState> {
        let branches = self
            .branches
            .iter()
            .map(|(x, b)| Ok((*x, Branch { weight: b.weight, state: apply_channel(ch, &b.state)? })))
            .collect::<Result<BTreeMap<_, _>>>()?;
        CqState::new(ch.dim_out(), branches)
    }
}

/// Random positive operator of trace `mass` and rank ≤ `dim`.
pub fn random_density(dim: usize, mass: f64, rng: &mut impl Rng) -> DensityOperator {
    let rank = rng.gen_range(1..=dim);
    let g = CMatrix::from_fn(dim, rank, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let m = &g * g.adjoint();
    let t = m.trace().re;
    DensityOperator::from_matrix_unchecked(m * c(mass / t, 0.0))
}

pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    g.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    fn ket(x: &str, th: &str) -> DensityOperator {
        conjugate_code_state(&bs(x), &bs(th)).unwrap()
    }

    fn close(a: &CMatrix, b: &CMatrix) -> bool {
        (a - b).iter().all(|z| z.norm() < 1e-12)
    }

    #[test]
    fn conjugate_coding_examples() {
        assert!(close(ket("0", "0").matrix(), DensityOperator::basis(2, 0).matrix()));
        let minus = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(-0.5, 0.0), c(-0.5, 0.0), c(0.5, 0.0)]);
        assert!(close(ket("1", "1").matrix(), &minus));
        assert!(close(ket("01", "00").matrix(), DensityOperator::basis(4, 1).matrix()));
        assert!(conjugate_code_state(&bs("01"), &bs("0")).is_err());
    }

    #[test]
    fn measurement_examples() {
        let w = measure_bb(&ket("0", "0"), &bs("0")).unwrap();
        assert_eq!(w[0].1, 1.0);
        let w = measure_bb(&ket("0", "0"), &bs("1")).unwrap();
        assert!((w[0].1 - 0.5).abs() < 1e-12 && (w[1].1 - 0.5).abs() < 1e-12);
        let w = measure_bb(&ket("0", "1"), &bs("1")).unwrap();
        assert!((w[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let (z, o, p) = (ket("0", "0"), ket("1", "0"), ket("0", "1"));
        assert!(trace_distance(&z, &z).unwrap().abs() < 1e-12);
        assert!((trace_distance(&z, &o).unwrap() - 1.0).abs() < 1e-12);
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((trace_distance(&z, &p).unwrap() - r2).abs() < 1e-12);
        let half = z.scale(0.5);
        assert!((generalized_trace_distance(&half, &DensityOperator::zero(2)).unwrap() - 0.5).abs() < 1e-12);
        assert!(generalized_trace_distance(&half, &half).unwrap().abs() < 1e-12);
        assert!(purified_distance(&z, &z).unwrap() < 1e-6);
        assert!((purified_distance(&z, &p).unwrap() - r2).abs() < 1e-9);
        assert!((purified_distance(&z, &o).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_examples() {
        let z = ket("0", "0");
        let id = apply_channel(&KrausChannel::identity(2), &z).unwrap();
        assert!(close(id.matrix(), z.matrix()));
        let dep = apply_channel(&KrausChannel::depolarizing_qubit(), &z).unwrap();
        assert!(close(dep.matrix(), DensityOperator::maximally_mixed(2).matrix()));
        let flip = apply_channel(&KrausChannel::pauli_string("X"), &z).unwrap();
        assert!(close(flip.matrix(), DensityOperator::basis(2, 1).matrix()));
        assert!(KrausChannel::measure_resend(&bs("01")).is_trace_preserving());
        assert!(KrausChannel::new(vec![CMatrix::identity(2, 2) * c(1.1, 0.0)]).is_err());
    }

    #[test]
    fn partial_trace_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_density(2, 1.0, &mut rng);
        let b = random_density(3, 1.0, &mut rng);
        let ab = a.tensor(&b);
        let ra = partial_trace(&ab, &[true, false], &[2, 3]).unwrap();
        assert!(close(ra.matrix(), a.matrix()));
        let rb = partial_trace(&ab, &[false, true], &[2, 3]).unwrap();
        assert!(close(rb.matrix(), b.matrix()));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = CVector::from_row_slice(&[c(s, 0.0), ZERO, ZERO, c(s, 0.0)]);
        let red = partial_trace(&DensityOperator::pure(&phi), &[true, false], &[2, 2]).unwrap();
        assert!(close(red.matrix(), DensityOperator::maximally_mixed(2).matrix()));
        let all = partial_trace(&ab, &[true, true], &[2, 3]).unwrap();
        assert!(close(all.matrix(), ab.matrix()));
        assert!(partial_trace(&ab, &[true, false], &[2, 2]).is_err());
    }

    #[test]
    fn subsystem_measurement_matches_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(8, 0.7, &mut rng);
        let th = bs("10");
        let parts = measure_bb_subsystem(&rho, &th).unwrap();
        let total = parts.iter().fold(CMatrix::zeros(2, 2), |acc, (_, r)| acc + r.matrix());
        let reduced = partial_trace(&rho, &[false, true], &[4, 2]).unwrap();
        assert!(close(&total, reduced.matrix()));
        let direct = measure_bb(&partial_trace(&rho, &[true, false], &[4, 2]).unwrap(), &th).unwrap();
        for ((x1, r), (x2, w)) in parts.iter().zip(&direct) {
            assert_eq!(x1, x2);
            assert!((r.trace() - w).abs() < 1e-12);
        }
    }
}
