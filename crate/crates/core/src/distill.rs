//! Classical post-processing: sketch-based error correction, hash
//! verification and privacy amplification, run once or enumerated exactly.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitlinalg::{hamming_ball_masks, low_mask, Bitstring};
use crate::entropy::{neg_log2, pguess_classical, ClassicalJoint};
use crate::error::{invalid, Error, Result};
use crate::hashing::{audit_universality, check_budget, ExtractorSpec, FamilyKind, HashFamily, KeyedFunction, DEFAULT_BUDGET};

/// Two-sided 99% Hoeffding half-width for a mean of `trials` bounded samples.
pub fn hoeffding_width(trials: u64) -> f64 {
    if trials == 0 {
        return f64::INFINITY;
    }
    ((200f64).ln() / (2.0 * trials as f64)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EcParams {
    pub n: usize,
    pub r: usize,
    pub t: usize,
    pub phi: f64,
    pub sketch: HashFamily,
    pub verif: HashFamily,
    pub eps_verif: f64,
}

impl EcParams {
    /// Toeplitz-affine sketch and GF-affine verification; ε_verif is audited.
    pub fn new(n: usize, r: usize, t: usize, phi: f64) -> Result<Self> {
        Self::with_families(n, r, t, phi, FamilyKind::ToeplitzAffine, FamilyKind::GfMultiplyAffine)
    }

    pub fn with_families(n: usize, r: usize, t: usize, phi: f64, sketch: FamilyKind, verif: FamilyKind) -> Result<Self> {
        if !(0.0..=1.0).contains(&phi) {
            return invalid(format!("error rate {phi} outside [0,1]"));
        }
        let sketch = HashFamily::new(sketch, n, r)?;
        let verif = HashFamily::new(verif, n, t)?;
        let eps_verif = audit_universality(&verif, DEFAULT_BUDGET)?.epsilon;
        Ok(Self { n, r, t, phi, sketch, verif, eps_verif })
    }

    /// Hamming radius searched by `corr`.
    pub fn radius(&self) -> usize {
        (self.phi * self.n as f64 + 1e-9).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaParams {
    pub ext: ExtractorSpec,
    pub m: usize,
    pub k: f64,
    pub delta: f64,
}

impl PaParams {
    pub fn new(n: usize, m: usize, k: f64, delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return invalid(format!("smoothing parameter {delta} outside [0,1)"));
        }
        Ok(Self { ext: ExtractorSpec::new(HashFamily::toeplitz(n, m)?, 1.0), m, k, delta })
    }

    pub fn eps_pa(&self) -> f64 {
        if self.m == 0 {
            0.0
        } else {
            self.ext.error_at(self.k)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    ClassicalJoint,
    NoisyCorrelated,
    AdversarialPlugin,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceOutcome {
    pub x: u64,
    pub y: u64,
    pub e: u64,
    pub p: f64,
}

/// Bob's string is Alice's XOR an offset drawn from this law.
#[derive(Clone, Debug, PartialEq)]
pub enum Noise {
    Iid(f64),
    Ball(usize),
    Offsets(Vec<(u64, f64)>),
}

impl Noise {
    fn offsets(&self, n: usize) -> Vec<(u64, f64)> {
        match self {
            Noise::Iid(q) => (0..1u64 << n)
                .map(|o| {
                    let w = o.count_ones() as i32;
                    (o, q.powi(w) * (1.0 - q).powi(n as i32 - w))
                })
                .filter(|&(_, p)| p > 0.0)
                .collect(),
            Noise::Ball(radius) => {
                let masks = hamming_ball_masks(n, *radius);
                let p = 1.0 / masks.len() as f64;
                masks.into_iter().map(|o| (o, p)).collect()
            }
            Noise::Offsets(v) => v.clone(),
        }
    }

    fn sample(&self, n: usize, rng: &mut impl Rng) -> u64 {
        match self {
            Noise::Iid(q) => (0..n).fold(0, |acc, i| if rng.gen_bool(*q) { acc | 1 << i } else { acc }),
            _ => sample_weighted(&self.offsets(n), rng).unwrap_or(0),
        }
    }
}

fn sample_weighted(items: &[(u64, f64)], rng: &mut impl Rng) -> Option<u64> {
    let mut u: f64 = rng.gen();
    for &(v, p) in items {
        if u < p {
            return Some(v);
        }
        u -= p;
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Table(Vec<SourceOutcome>),
    /// X uniform, E = X masked to the revealed positions.
    Leaky { leak_mask: u64, noise: Noise },
}

/// Emits (X, Y, E) or ⊥ with a declared (k, δ) rating on H_min^δ(X|E).
#[derive(Clone, Debug, PartialEq)]
pub struct SourceModel {
    pub kind: SourceKind,
    pub n: usize,
    pub k: f64,
    pub delta: f64,
    shape: Shape,
}

impl SourceModel {
    /// Table source; missing mass is the ⊥ branch.
    pub fn classical_joint(n: usize, k: f64, delta: f64, outcomes: Vec<SourceOutcome>) -> Result<Self> {
        let mass: f64 = outcomes.iter().map(|o| o.p).sum();
        if mass > 1.0 + 1e-12 || outcomes.iter().any(|o| o.p < 0.0 || o.x >> n != 0 || o.y >> n != 0) {
            return invalid("source table is not a subnormalized distribution over n-bit strings");
        }
        Ok(Self { kind: SourceKind::ClassicalJoint, n, k, delta, shape: Shape::Table(outcomes) })
    }

    /// Leak of the masked bits plus an arbitrary offset law for Bob.
    pub fn adversarial(n: usize, leak_mask: u64, noise: Noise) -> Result<Self> {
        let mut s = make_noisy_correlated_source(n, 0.0, n as f64 - leak_mask.count_ones() as f64)?;
        s.kind = SourceKind::AdversarialPlugin;
        s.shape = Shape::Leaky { leak_mask, noise };
        Ok(s)
    }

    pub fn leak_mask(&self) -> Option<u64> {
        match &self.shape {
            Shape::Leaky { leak_mask, .. } => Some(*leak_mask),
            Shape::Table(_) => None,
        }
    }

    pub fn outcomes(&self) -> Result<Vec<SourceOutcome>> {
        match &self.shape {
            Shape::Table(t) => Ok(t.clone()),
            Shape::Leaky { leak_mask, noise } => {
                check_budget(1u128 << (2 * self.n), DEFAULT_BUDGET)?;
                let px = 1.0 / (1u64 << self.n) as f64;
                let offs = noise.offsets(self.n);
                Ok((0..1u64 << self.n)
                    .flat_map(|x| offs.iter().map(move |&(o, q)| SourceOutcome { x, y: x ^ o, e: x & leak_mask, p: px * q }))
                    .collect())
            }
        }
    }

    /// P_XE of the non-⊥ branch.
    pub fn xe_joint(&self) -> Result<ClassicalJoint> {
        ClassicalJoint::new(self.n, self.outcomes()?.into_iter().map(|o| ((o.x, o.e), o.p)))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Option<(u64, u64, u64)> {
        match &self.shape {
            Shape::Table(t) => {
                let mut u: f64 = rng.gen();
                for o in t {
                    if u < o.p {
                        return Some((o.x, o.y, o.e));
                    }
                    u -= o.p;
                }
                None
            }
            Shape::Leaky { leak_mask, noise } => {
                let x = rng.gen_range(0..1u64 << self.n);
                let o = noise.sample(self.n, rng);
                Some((x, x ^ o, x & leak_mask))
            }
        }
    }
}

/// X uniform, Y = X with i.i.d. flips, E = the first n−k bits of X.
pub fn make_noisy_correlated_source(n: usize, flip_rate: f64, k: f64) -> Result<SourceModel> {
    if n == 0 || n > 32 || !(0.0..=1.0).contains(&flip_rate) {
        return invalid(format!("noisy source needs 1 <= n <= 32 and flip rate in [0,1], got {n}, {flip_rate}"));
    }
    if k < 0.0 || k > n as f64 || k.fract() != 0.0 {
        return invalid(format!("rating k={k} infeasible for a fixed-bit leak on {n} bits"));
    }
    let leak = n - k as usize;
    let leak_mask = low_mask(leak) << (n - leak);
    Ok(SourceModel { kind: SourceKind::NoisyCorrelated, n, k, delta: 0.0, shape: Shape::Leaky { leak_mask, noise: Noise::Iid(flip_rate) } })
}

/// Pr[Binomial(n, q) > radius].
pub fn binomial_tail(n: usize, q: f64, radius: usize) -> f64 {
    let mut total = 0.0;
    let mut coeff = 1.0;
    for w in 0..=n {
        if w > 0 {
            coeff *= (n - w + 1) as f64 / w as f64;
        }
        if w > radius {
            total += coeff * q.powi(w as i32) * (1.0 - q).powi((n - w) as i32);
        }
    }
    total
}

pub fn synd(x: &Bitstring, key: &Bitstring, ec: &EcParams) -> Result<Bitstring> {
    ec.sketch.eval(key, x)
}

/// Unique member of the radius-φn ball around y whose sketch is s, else `None`.
pub fn corr(y: &Bitstring, s: &Bitstring, key: &Bitstring, ec: &EcParams) -> Result<Option<Bitstring>> {
    if y.len() != ec.n || s.len() != ec.r || key.len() != ec.sketch.key_len() {
        return invalid("corr argument lengths do not match the sketch");
    }
    let table = ec.sketch.table(key.to_u64()?);
    let ball = hamming_ball_masks(ec.n, ec.radius());
    Ok(corr_packed(&table, &ball, y.to_u64()?, s.to_u64()?).map(|v| Bitstring::from_u64(v, ec.n)))
}

fn corr_packed(table: &[u64], ball: &[u64], y: u64, s: u64) -> Option<u64> {
    let mut found = None;
    for &b in ball {
        let c = y ^ b;
        if table[c as usize] == s {
            if found.is_some() {
                return None;
            }
            found = Some(c);
        }
    }
    found
}

/// ε_ss: worst case over x and in-ball errors of Pr_key[corr ≠ x].
pub fn audit_sketch_recovery(ec: &EcParams, budget: u128) -> Result<f64> {
    let ball = hamming_ball_masks(ec.n, ec.radius());
    let keys = 1u64 << ec.sketch.key_len();
    check_budget(keys as u128 * (1u128 << ec.n) * (ball.len() as u128).pow(2), budget)?;
    let mut fails = vec![0u64; (1usize << ec.n) * ball.len()];
    for k in 0..keys {
        let table = ec.sketch.table(k);
        for x in 0..1u64 << ec.n {
            for (j, &b) in ball.iter().enumerate() {
                if corr_packed(&table, &ball, x ^ b, table[x as usize]) != Some(x) {
                    fails[x as usize * ball.len() + j] += 1;
                }
            }
        }
    }
    Ok(*fails.iter().max().unwrap_or(&0) as f64 / keys as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Abort,
}

/// Everything the authentic channel hands to Eve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineTranscript {
    pub sketch_key: Option<Bitstring>,
    pub syndrome: Option<Bitstring>,
    pub verif_key: Option<Bitstring>,
    pub verif_tag: Option<Bitstring>,
    pub decision: Decision,
    pub pa_seed: Option<Bitstring>,
}

impl PipelineTranscript {
    fn aborted() -> Self {
        Self { sketch_key: None, syndrome: None, verif_key: None, verif_tag: None, decision: Decision::Abort, pa_seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrOutput {
    pub x: Bitstring,
    pub x_hat: Option<Bitstring>,
    pub sketch_key: Bitstring,
    pub syndrome: Bitstring,
}

pub fn run_corr(x: &Bitstring, y: &Bitstring, ec: &EcParams, rng: &mut impl Rng) -> Result<CorrOutput> {
    let key = Bitstring::from_u64(rng.gen_range(0..1u64 << ec.sketch.key_len()), ec.sketch.key_len());
    let s = synd(x, &key, ec)?;
    let x_hat = corr(y, &s, &key, ec)?;
    Ok(CorrOutput { x: x.clone(), x_hat, sketch_key: key, syndrome: s })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifOutput {
    pub key: Bitstring,
    pub tag: Bitstring,
    pub decision: Decision,
}

/// Alice sends (f, f(x)); Bob accepts iff his estimate hashes to the same tag.
pub fn run_verif(x: &Bitstring, x_hat: Option<&Bitstring>, ec: &EcParams, rng: &mut impl Rng) -> Result<VerifOutput> {
    let key = Bitstring::from_u64(rng.gen_range(0..1u64 << ec.verif.key_len()), ec.verif.key_len());
    let tag = ec.verif.eval(&key, x)?;
    let decision = match x_hat {
        Some(xh) if ec.verif.eval(&key, xh)? == tag => Decision::Accept,
        _ => Decision::Abort,
    };
    Ok(VerifOutput { key, tag, decision })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaOutput {
    pub key_a: Bitstring,
    pub key_b: Bitstring,
    pub seed: Bitstring,
}

pub fn run_pa(x: &Bitstring, x_hat: &Bitstring, pa: &PaParams, rng: &mut impl Rng) -> Result<PaOutput> {
    let d = pa.ext.seed_len();
    let seed = Bitstring::from_u64(rng.gen_range(0..1u64 << d), d);
    Ok(PaOutput { key_a: pa.ext.family.eval(&seed, x)?, key_b: pa.ext.family.eval(&seed, x_hat)?, seed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub keys: Option<(Bitstring, Bitstring)>,
    pub transcript: PipelineTranscript,
}

pub fn check_budget_consistency(source: &SourceModel, ec: &EcParams, pa: &PaParams) -> Result<()> {
    let want = source.k - ec.r as f64 - ec.t as f64;
    if (pa.k - want).abs() > 1e-9 {
        return Err(Error::Config(format!("privacy amplification rated at k={}, entropy budget leaves {want}", pa.k)));
    }
    if source.n != ec.n || pa.ext.family.in_len() != ec.n {
        return Err(Error::Config("source, sketch and extractor lengths differ".into()));
    }
    Ok(())
}

/// One seeded run; draws are source, sketch key, verification key, seed.
pub fn distill_pipeline(source: &SourceModel, ec: &EcParams, pa: &PaParams, seed: u64) -> Result<PipelineRun> {
    check_budget_consistency(source, ec, pa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Some((x, y, _)) = source.sample(&mut rng) else {
        return Ok(PipelineRun { keys: None, transcript: PipelineTranscript::aborted() });
    };
    let (x, y) = (Bitstring::from_u64(x, ec.n), Bitstring::from_u64(y, ec.n));
    let c = run_corr(&x, &y, ec, &mut rng)?;
    let v = run_verif(&x, c.x_hat.as_ref(), ec, &mut rng)?;
    let mut transcript = PipelineTranscript {
        sketch_key: Some(c.sketch_key),
        syndrome: Some(c.syndrome),
        verif_key: Some(v.key),
        verif_tag: Some(v.tag),
        decision: v.decision,
        pa_seed: None,
    };
    if v.decision == Decision::Abort {
        return Ok(PipelineRun { keys: None, transcript });
    }
    let x_hat = c.x_hat.expect("accept implies an estimate");
    let p = run_pa(&x, &x_hat, pa, &mut rng)?;
    transcript.pa_seed = Some(p.seed);
    Ok(PipelineRun { keys: Some((p.key_a, p.key_b)), transcript })
}

fn group_distance(pairs: &[f64], mass: f64, m: usize) -> f64 {
    let side = 1usize << m;
    let ideal = mass / side as f64;
    let mut d = 0.0;
    for ka in 0..side {
        for kb in 0..side {
            let target = if ka == kb { ideal } else { 0.0 };
            d += (pairs[ka * side + kb] - target).abs();
        }
    }
    0.5 * d
}

/// Exact distance of (K_A, K_B, transcript, E) from the ideal key resource
/// fed the same transcript. Affine offsets of every key only relabel the
/// transcript, so only offset-zero keys are enumerated.
pub fn final_distance(source: &SourceModel, ec: &EcParams, pa: &PaParams, budget: u128) -> Result<f64> {
    check_budget_consistency(source, ec, pa)?;
    let outcomes = source.outcomes()?;
    let (ls, lv, lp) = (ec.sketch.linear_key_len(), ec.verif.linear_key_len(), pa.ext.family.linear_key_len());
    check_budget((outcomes.len() as u128) << (ls + lv + lp), budget)?;
    let ball = hamming_ball_masks(ec.n, ec.radius());
    let pa_tables: Vec<Vec<u64>> = (0..1u64 << lp).map(|z| pa.ext.family.table(z << pa.m)).collect();
    let verif_tables: Vec<Vec<u64>> = (0..1u64 << lv).map(|f| ec.verif.table(f << ec.t)).collect();
    let side = 1usize << (2 * pa.m);
    let mut total = 0.0;
    let mut groups: HashMap<(u64, u64, u64), Vec<(u64, u64, f64)>> = HashMap::new();
    let mut acc = vec![0.0; side];
    for ks in 0..1u64 << ls {
        let st = ec.sketch.table(ks << ec.r);
        let est: Vec<Option<u64>> = outcomes.iter().map(|o| corr_packed(&st, &ball, o.y, st[o.x as usize])).collect();
        for vt in &verif_tables {
            groups.clear();
            for (o, xh) in outcomes.iter().zip(&est) {
                if let Some(xh) = *xh {
                    if vt[xh as usize] == vt[o.x as usize] {
                        groups.entry((st[o.x as usize], vt[o.x as usize], o.e)).or_default().push((o.x, xh, o.p));
                    }
                }
            }
            for pt in &pa_tables {
                for g in groups.values() {
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    let mut mass = 0.0;
                    for &(x, xh, p) in g {
                        acc[((pt[x as usize] << pa.m) | pt[xh as usize]) as usize] += p;
                        mass += p;
                    }
                    total += group_distance(&acc, mass, pa.m);
                }
            }
        }
    }
    Ok(total / (1u64 << (ls + lv + lp)) as f64)
}

/// Same quantity by plain enumeration of every full key and transcript.
pub fn final_distance_full(source: &SourceModel, ec: &EcParams, pa: &PaParams, budget: u128) -> Result<f64> {
    check_budget_consistency(source, ec, pa)?;
    let outcomes = source.outcomes()?;
    let (ds, dv, dp) = (ec.sketch.key_len(), ec.verif.key_len(), pa.ext.seed_len());
    check_budget((outcomes.len() as u128) << (ds + dv + dp), budget)?;
    let w = 1.0 / (1u64 << (ds + dv + dp)) as f64;
    let ball = hamming_ball_masks(ec.n, ec.radius());
    let mut views: BTreeMap<(u64, u64, u64, u64, u64, u64), Vec<f64>> = BTreeMap::new();
    for ks in 0..1u64 << ds {
        for f in 0..1u64 << dv {
            for z in 0..1u64 << dp {
                for o in &outcomes {
                    let s = ec.sketch.eval_packed(ks, o.x);
                    let st = ec.sketch.table(ks);
                    let Some(xh) = corr_packed(&st, &ball, o.y, s) else { continue };
                    let tag = ec.verif.eval_packed(f, o.x);
                    if ec.verif.eval_packed(f, xh) != tag {
                        continue;
                    }
                    let (ka, kb) = (pa.ext.family.eval_packed(z, o.x), pa.ext.family.eval_packed(z, xh));
                    let cell = views.entry((ks, s, f, tag, z, o.e)).or_insert_with(|| vec![0.0; 1 << (2 * pa.m)]);
                    cell[((ka << pa.m) | kb) as usize] += o.p * w;
                }
            }
        }
    }
    Ok(views.values().map(|c| group_distance(c, c.iter().sum(), pa.m)).sum())
}

/// H_min(X | E, sketch key, s) over the whole non-⊥ branch.
pub fn audit_entropy_after_corr(source: &SourceModel, ec: &EcParams) -> Result<f64> {
    let outcomes = source.outcomes()?;
    let ds = ec.sketch.key_len();
    let w = 1.0 / (1u64 << ds) as f64;
    let mut entries = Vec::new();
    for ks in 0..1u64 << ds {
        let st = ec.sketch.table(ks);
        for o in &outcomes {
            entries.push(((o.x, pack_view(&[(o.e, 32), (ks, ds), (st[o.x as usize], ec.r)])), o.p * w));
        }
    }
    Ok(neg_log2(pguess_classical(&ClassicalJoint::new(ec.n, entries)?)))
}

/// H_min(X | E, sketch transcript, f, f(x)) on the accept branch, subnormalized.
pub fn audit_entropy_after_verif(source: &SourceModel, ec: &EcParams) -> Result<f64> {
    let outcomes = source.outcomes()?;
    let (ds, dv) = (ec.sketch.key_len(), ec.verif.key_len());
    let w = 1.0 / (1u64 << (ds + dv)) as f64;
    let ball = hamming_ball_masks(ec.n, ec.radius());
    let vts: Vec<Vec<u64>> = (0..1u64 << dv).map(|f| ec.verif.table(f)).collect();
    let mut entries = Vec::new();
    for ks in 0..1u64 << ds {
        let st = ec.sketch.table(ks);
        for o in &outcomes {
            let Some(xh) = corr_packed(&st, &ball, o.y, st[o.x as usize]) else { continue };
            for (f, vt) in vts.iter().enumerate() {
                if vt[xh as usize] == vt[o.x as usize] {
                    let view = pack_view(&[(o.e, 20), (ks, ds), (st[o.x as usize], ec.r), (f as u64, dv), (vt[o.x as usize], ec.t)]);
                    entries.push(((o.x, view), o.p * w));
                }
            }
        }
    }
    Ok(neg_log2(pguess_classical(&ClassicalJoint::new(ec.n, entries)?)))
}

fn pack_view(parts: &[(u64, usize)]) -> u64 {
    parts.iter().fold(0u64, |acc, &(v, bits)| (acc << bits) | v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub trials: u64,
    pub aborts: u64,
    pub abort_rate: f64,
    pub width: f64,
    pub eps_ss: f64,
    pub within: bool,
}

/// Monte Carlo abort rate against ε_ss, trial i seeded with `seed + i`.
pub fn pipeline_robustness_mc(source: &SourceModel, ec: &EcParams, pa: &PaParams, trials: u64, seed: u64) -> Result<RobustnessReport> {
    let eps_ss = audit_sketch_recovery(ec, DEFAULT_BUDGET)?;
    let mut aborts = 0;
    for i in 0..trials {
        if distill_pipeline(source, ec, pa, seed.wrapping_add(i))?.keys.is_none() {
            aborts += 1;
        }
    }
    let abort_rate = aborts as f64 / trials.max(1) as f64;
    let width = hoeffding_width(trials);
    Ok(RobustnessReport { trials, aborts, abort_rate, width, eps_ss, within: abort_rate <= eps_ss + width })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub n: usize,
    #[serde(default)]
    pub flip_rate: f64,
    pub k: f64,
    #[serde(default)]
    pub delta: f64,
    /// Revealed positions, as a bitstring mask; defaults to the leading n−k bits.
    #[serde(default)]
    pub leak: Option<Bitstring>,
    /// Deterministic Bob offsets with weights, for adversarial sources.
    #[serde(default)]
    pub offsets: Option<Vec<(Bitstring, f64)>>,
    /// Explicit (x, y, e, p) rows for classical-joint sources.
    #[serde(default)]
    pub table: Option<Vec<(Bitstring, Bitstring, u64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcConfig {
    pub r: usize,
    pub t: usize,
    pub phi: f64,
    #[serde(default)]
    pub families: Option<FamilyChoice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyChoice {
    pub sketch: FamilyKind,
    pub verif: FamilyKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaConfig {
    pub m: usize,
    pub k: f64,
    #[serde(default)]
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub source: SourceConfig,
    pub ec: EcConfig,
    pub pa: PaConfig,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn build(&self) -> Result<(SourceModel, EcParams, PaParams)> {
        let sc = &self.source;
        let mut source = match sc.kind {
            SourceKind::NoisyCorrelated => make_noisy_correlated_source(sc.n, sc.flip_rate, sc.k)?,
            SourceKind::AdversarialPlugin => {
                let leak = match &sc.leak {
                    Some(b) => b.to_u64()?,
                    None => low_mask(sc.n - sc.k as usize) << sc.k as usize,
                };
                let noise = match &sc.offsets {
                    Some(v) => Noise::Offsets(v.iter().map(|(b, p)| Ok((b.to_u64()?, *p))).collect::<Result<_>>()?),
                    None => Noise::Iid(sc.flip_rate),
                };
                SourceModel::adversarial(sc.n, leak, noise)?
            }
            SourceKind::ClassicalJoint => {
                let rows = sc.table.as_ref().ok_or_else(|| Error::Config("classical-joint source needs a table".into()))?;
                let outcomes = rows
                    .iter()
                    .map(|(x, y, e, p)| Ok(SourceOutcome { x: x.to_u64()?, y: y.to_u64()?, e: *e, p: *p }))
                    .collect::<Result<_>>()?;
                SourceModel::classical_joint(sc.n, sc.k, sc.delta, outcomes)?
            }
        };
        source.k = sc.k;
        source.delta = sc.delta;
        let fam = self.ec.families.clone().unwrap_or(FamilyChoice { sketch: FamilyKind::ToeplitzAffine, verif: FamilyKind::GfMultiplyAffine });
        let ec = EcParams::with_families(sc.n, self.ec.r, self.ec.t, self.ec.phi, fam.sketch, fam.verif)?;
        let pa = PaParams::new(sc.n, self.pa.m, self.pa.k, self.pa.delta)?;
        check_budget_consistency(&source, &ec, &pa)?;
        Ok((source, ec, pa))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: u64,
    pub decision: Decision,
    pub keys_equal: Option<bool>,
    pub audited_distance: Option<f64>,
    pub bound: f64,
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
