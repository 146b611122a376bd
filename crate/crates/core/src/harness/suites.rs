use super::fixtures;
use super::report::{Comparison, ExperimentConfig, Provenance, ReportRecord, Suite, Value};
use super::{commutation_deviation, compose_parallel, compose_serial, distinguish_exact, ClaimCheck, Comb, ConstructionClaim, Converter, Interface, Strategy};
use crate::bitlinalg::LinearCode;
use crate::distill::{final_distance, hoeffding_width, EcParams, Noise, PaParams, SourceModel};
use crate::entropy::{
    check_chain_rule, check_event_conditioning, hmin_classical, hmin_smooth_classical, pguess_cq, Bracket, ClassicalJoint,
    TripartiteJoint,
};
use crate::error::Result;
use crate::fsauth::{
    attack_library, audit_key_replace, check_guessing_lemmas, eps_adv, eps_noise, honest_exhaustive, impersonation_audit,
    recycled_key_entropy, robustness_exhaustive, robustness_mc, run_sessions, AttackStrategy, BoundInputs, FsParams,
};
use crate::hashing::{KeyedFunction, audit_strong_universality, audit_universality, measure_extractor_distance, ExtractorSpec, HashFamily, MacSpec, DEFAULT_BUDGET};
use crate::quantum::{generalized_trace_distance, hadamard, purified_distance, random_density, CqState, DensityOperator, KrausChannel, Symbol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Runner = Box<dyn Fn(&ExperimentConfig) -> Result<Vec<ReportRecord>> + Send + Sync>;

pub(super) struct Job {
    pub id: String,
    pub run: Runner,
}

fn job(id: &str, run: impl Fn(&ExperimentConfig) -> Result<Vec<ReportRecord>> + Send + Sync + 'static) -> Job {
    Job { id: id.to_string(), run: Box::new(run) }
}

/// Seed of a job: the configured seed shifted by a fixed per-job offset.
fn seed_of(cfg: &ExperimentConfig, offset: u64) -> u64 {
    cfg.seed.wrapping_add(offset.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

struct Rec<'a> {
    cfg: &'a ExperimentConfig,
    suite: Suite,
}

impl Rec<'_> {
    #[allow(clippy::too_many_arguments)]
    fn make(&self, id: &str, metric: &str, value: Value, cmp: Comparison, bound: f64, tol: f64, prov: Provenance, seed: u64) -> ReportRecord {
        ReportRecord::judged(format!("{}/{id}", self.suite.name()), self.suite, metric, value, cmp, bound, tol, prov, seed)
    }

    fn exact(&self, id: &str, metric: &str, v: f64, cmp: Comparison, bound: f64) -> ReportRecord {
        self.make(id, metric, Value::Real(v), cmp, bound, self.cfg.tolerance, Provenance::Exact, self.cfg.seed)
    }

    fn exhaustive(&self, id: &str, metric: &str, v: f64, cmp: Comparison, bound: f64, tol: f64) -> ReportRecord {
        self.make(id, metric, Value::Real(v), cmp, bound, tol, Provenance::Exhaustive, self.cfg.seed)
    }
}

pub(super) fn jobs(suite: Suite, _cfg: &ExperimentConfig) -> Vec<Job> {
    match suite {
        Suite::Entropy => vec![job("entropy", entropy_suite)],
        Suite::HashAudit => vec![
            job("hash-audit/strong-universality", strong_universality),
            job("hash-audit/extractor", extractor_audits),
            job("hash-audit/verification", verification_soundness),
        ],
        Suite::Distill => vec![job("distill/pipeline-bound", pipeline_bound), job("distill/config", distill_config)],
        Suite::Fsauth => vec![
            job("fsauth/robustness", fs_robustness),
            job("fsauth/forgery", fs_forgery),
            job("fsauth/recycled-entropy", fs_recycled),
            job("fsauth/config", fs_config),
        ],
        Suite::Bounds => vec![job("bounds/key-replacement", key_replacement), job("bounds/dominance", bound_dominance)],
        Suite::Lemmas => vec![
            job("lemmas/distance-chain", distance_chain),
            job("lemmas/conditioning", conditioning_lemmas),
            job("lemmas/guessing", guessing_lemmas),
        ],
        Suite::Composition => vec![job("composition", composition_suite)],
    }
}

fn entropy_suite(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Entropy };
    let mut out = Vec::new();
    let plus = DensityOperator::from_matrix_unchecked(hadamard() * DensityOperator::basis(2, 0).matrix() * hadamard());
    let cq = CqState::from_unnormalized(2, [(Symbol::Value(0), DensityOperator::basis(2, 0).scale(0.5)), (Symbol::Value(1), plus.scale(0.5))])?;
    let pg = pguess_cq(&cq);
    let oracle = 0.5 + 0.5 * 0.5f64.sqrt();
    out.push(r.make("pguess-zero-vs-plus", "pguess", Value::Bracket(pg), Comparison::Equal, oracle, 1e-6, Provenance::Exact, cfg.seed));
    out.push(r.exact("hmin-uniform-4", "hmin", hmin_classical(&ClassicalJoint::uniform(4)), Comparison::Equal, 4.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(cfg, 1));
    let p = TripartiteJoint::random(&mut rng, 8, 3, 1, 1.0).a_given_b()?;
    let smooth = hmin_smooth_classical(&p, 0.1)?;
    out.push(r.make("smoothing-monotone", "hmin^0.1 - hmin", Value::Real(smooth.lo - hmin_classical(&p)), Comparison::AtLeast, 0.0, cfg.tolerance, Provenance::Exact, seed_of(cfg, 1)));
    Ok(out)
}

fn strong_universality(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::HashAudit };
    let mut out = Vec::new();
    for m in [2usize, 3, 4] {
        let a = audit_strong_universality(&MacSpec::new(m, m)?, DEFAULT_BUDGET)?;
        let joint = a.count as f64 / a.total as f64;
        out.push(r.exhaustive(&format!("strong-universality/m{m}"), "max joint tag probability", joint, Comparison::Equal, 2f64.powi(-2 * m as i32), 0.0));
    }
    let t = audit_universality(&HashFamily::toeplitz(6, 2)?, DEFAULT_BUDGET)?;
    out.push(r.exhaustive("universality/toeplitz-6-2", "max collision probability", t.epsilon, Comparison::AtMost, 0.25, 0.0));
    Ok(out)
}

fn subsets(n: u64, size: u32) -> impl Iterator<Item = u64> {
    (0u64..1 << n).filter(move |s| s.count_ones() == size)
}

fn flat(bits: usize, support: u64, mass: f64) -> Result<ClassicalJoint> {
    let w = mass / support.count_ones() as f64;
    ClassicalJoint::new(bits, (0..64u64).filter(|x| support >> x & 1 == 1).map(|x| ((x, 0), w)))
}

fn max_distance(ext: &HashFamily, supports: &[u64], mass: f64) -> Result<f64> {
    let ds: Vec<f64> = supports.par_iter().map(|&s| measure_extractor_distance(ext, &flat(ext.in_len(), s, mass)?, DEFAULT_BUDGET)).collect::<Result<_>>()?;
    Ok(ds.into_iter().fold(0.0, f64::max))
}

fn extractor_audits(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::HashAudit };
    let spec = ExtractorSpec::new(HashFamily::toeplitz(4, 1)?, 1.0);
    let mut out = Vec::new();
    let eps = spec.error_at(2.0);
    let four: Vec<u64> = subsets(16, 4).collect();
    out.push(r.exhaustive("extractor/flat-hmin2", "max distance", max_distance(&spec.family, &four, 1.0)?, Comparison::AtMost, eps, cfg.tolerance));
    let lifted = 2.0 * eps;
    for (mass, size) in [(0.25, 2u32), (0.5, 4)] {
        // flat over 8·mass points: subnormalized H_min = 3
        let supports: Vec<u64> = subsets(16, size).collect();
        let d = max_distance(&spec.family, &supports, mass)?;
        out.push(r.exhaustive(&format!("extractor/lift-mass{mass}"), "max distance at k+1", d, Comparison::AtMost, lifted, cfg.tolerance));
    }
    Ok(out)
}

fn verification_soundness(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::HashAudit };
    let a = audit_universality(&HashFamily::gf(6, 3)?, DEFAULT_BUDGET)?;
    let frac = a.count as f64 / a.total as f64;
    Ok(vec![r.exhaustive("verification/t3", "max false-accept fraction", frac, Comparison::AtMost, 0.125, 0.0)])
}

/// Every leak pattern of n − k bits against a fixed set of offsets.
fn pipeline_bound(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Distill };
    let ec = EcParams::new(6, 2, 2, 1.0 / 6.0)?;
    let mut offsets = vec![0u64, 63];
    offsets.extend((0..6).map(|i| 1u64 << i));
    let mut out = Vec::new();
    for k in [5usize, 6] {
        let pa = PaParams::new(6, 1, k as f64 - 4.0, 0.0)?;
        let cases: Vec<(u64, u64)> = subsets(6, 6 - k as u32).flat_map(|l| offsets.iter().map(move |&o| (l, o))).collect();
        let ds: Vec<f64> = cases
            .par_iter()
            .map(|&(leak, o)| final_distance(&SourceModel::adversarial(6, leak, Noise::Offsets(vec![(o, 1.0)]))?, &ec, &pa, u128::MAX))
            .collect::<Result<_>>()?;
        let worst = ds.into_iter().fold(0.0, f64::max);
        out.push(r.exhaustive(&format!("pipeline-bound/k{k}"), "max final-key distance", worst, Comparison::AtMost, ec.eps_verif + pa.eps_pa(), cfg.tolerance));
    }
    Ok(out)
}

fn distill_config(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let Some(pc) = &cfg.distill else { return Ok(Vec::new()) };
    let r = Rec { cfg, suite: Suite::Distill };
    let (source, ec, pa) = pc.build()?;
    let d = final_distance(&source, &ec, &pa, DEFAULT_BUDGET)?;
    let bound = ec.eps_verif + pa.eps_pa() + 2.0 * pa.delta;
    Ok(vec![r.exhaustive("config/final-distance", "final-key distance", d, Comparison::AtMost, bound, cfg.tolerance)])
}

fn fs_n4(m_mac: usize) -> Result<FsParams> {
    FsParams::new(4, 1, LinearCode::parse(&["0000", "0011", "1100", "1111"])?, 2, m_mac, 0.25, None)
}

fn fs_robustness(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Fsauth };
    let p = fs_n4(2)?;
    let h = honest_exhaustive(&p, u128::MAX)?;
    let rob = robustness_exhaustive(&p, u128::MAX)?;
    let seed = seed_of(cfg, 7);
    let mc = robustness_mc(&p, cfg.trials, seed)?;
    Ok(vec![
        r.exhaustive("honest-completeness", "zero-noise accept rate", h.accept_rate, Comparison::Equal, 1.0, 0.0),
        r.exhaustive("robustness-exhaustive", "max reject rate within radius", rob.max_reject_rate, Comparison::AtMost, rob.eps_ss, 0.0),
        r.make(
            "robustness-mc",
            "reject rate within radius",
            Value::Real(mc.reject_rate),
            Comparison::AtMost,
            mc.eps_ss + mc.width,
            0.0,
            Provenance::MonteCarlo { trials: mc.trials, width: mc.width },
            seed,
        ),
    ])
}

fn fs_forgery(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Fsauth };
    [2usize, 3]
        .into_iter()
        .map(|m| {
            let a = impersonation_audit(&fs_n4(m)?, u128::MAX)?;
            Ok(r.exhaustive(&format!("forgery/m{m}"), "max forgery acceptance", a.max_accept, Comparison::AtMost, 2f64.powi(-(m as i32)), 0.0))
        })
        .collect()
}

fn fs_recycled(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Fsauth };
    let p = FsParams::new(2, 1, LinearCode::parse(&["00", "11"])?, 1, 2, 0.0, None)?;
    attack_library(&p)
        .par_iter()
        .map(|a| {
            let e = recycled_key_entropy(&p, a, u128::MAX)?;
            Ok(r.make(&format!("recycled-entropy/{}", e.attack), "accept-branch hmin(theta | view)", Value::Bracket(e.hmin), Comparison::AtLeast, e.k, 1e-6, Provenance::Exhaustive, cfg.seed))
        })
        .collect()
}

fn fs_config(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let Some(sc) = &cfg.fsauth else { return Ok(Vec::new()) };
    let r = Rec { cfg, suite: Suite::Fsauth };
    let (_, s) = run_sessions(sc)?;
    let width = hoeffding_width(s.trials);
    let prov = Provenance::MonteCarlo { trials: s.trials, width };
    let rec = match sc.strategy {
        AttackStrategy::None | AttackStrategy::Noise { .. } => {
            r.make("config/reject-rate", "reject rate", Value::Real(1.0 - s.accept_rate), Comparison::AtMost, s.eps_noise + width, 0.0, prov, sc.seed)
        }
        _ => r.make("config/forgery-rate", "forgery acceptance", Value::Real(s.forgery_rate), Comparison::AtMost, s.eps_adv + width, 0.0, prov, sc.seed),
    };
    Ok(vec![rec])
}

fn key_replacement(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Bounds };
    let a = audit_key_replace(3, 3)?;
    Ok(vec![
        r.exhaustive("key-replacement/pguess", "audited guessing probability", a.bound, Comparison::Equal, 0.25, 0.0),
        r.exhaustive("key-replacement/k-prime", "k'", a.k_prime, Comparison::Equal, 2.0, 0.0),
        r.exhaustive("key-replacement/realized", "realized output guessing probability", a.output_sup, Comparison::AtMost, a.bound, 0.0),
    ])
}

/// ε_adv and ε_noise dominate the exhaustive forgery and reject figures.
fn bound_dominance(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Bounds };
    let p = fs_n4(2)?;
    let b = BoundInputs::audited(&p, DEFAULT_BUDGET)?;
    let forged = impersonation_audit(&p, u128::MAX)?.max_accept;
    let reject = robustness_exhaustive(&p, u128::MAX)?.max_reject_rate;
    Ok(vec![
        r.exhaustive("dominance/eps-adv", "max forgery acceptance", forged, Comparison::AtMost, eps_adv(&p, &b)?, 0.0),
        r.exhaustive("dominance/eps-noise", "max reject rate", reject, Comparison::AtMost, eps_noise(0.0, &b)?, 0.0),
    ])
}

/// D̄ ≤ P ≤ √(2D̄) on random subnormalized pairs of dimension 2..=8.
fn distance_chain(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Lemmas };
    let seed = seed_of(cfg, 2);
    let tol = cfg.tolerance;
    let bad: usize = (0..cfg.fuzz)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let dim = rng.gen_range(2..=8);
            let (m1, m2) = (rng.gen_range(0.05..=1.0), rng.gen_range(0.05..=1.0));
            let (a, b) = (random_density(dim, m1, &mut rng), random_density(dim, m2, &mut rng));
            let d = generalized_trace_distance(&a, &b)?;
            let p = purified_distance(&a, &b)?;
            Ok((d > p + tol || p > (2.0 * d).sqrt() + tol) as usize)
        })
        .sum::<Result<usize>>()?;
    Ok(vec![r.make("distance-chain", "violations", Value::Real(bad as f64), Comparison::AtMost, 0.0, 0.0, Provenance::Exact, seed)])
}

/// Chain rule and event conditioning on random P_ABZ with |A|, |Z| ≤ 8.
fn conditioning_lemmas(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Lemmas };
    let seed = seed_of(cfg, 3);
    let tol = cfg.tolerance;
    let (chain, event): (usize, usize) = (0..cfg.fuzz)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let (a, b, z) = (rng.gen_range(2..=8), rng.gen_range(1..=4), rng.gen_range(1..=8));
            let mass = rng.gen_range(0.3..=1.0);
            let p = TripartiteJoint::random(&mut rng, a, b, z, mass);
            let delta = [0.0, 0.02, 0.1][i as usize % 3];
            let keep: u64 = rng.gen_range(1..1u64 << z);
            let c = check_chain_rule(&p, delta, tol)?;
            let e = check_event_conditioning(&p, move |zz| keep >> zz & 1 == 1, delta, tol)?;
            Ok::<_, crate::error::Error>(((!c.holds) as usize, (!e.holds) as usize))
        })
        .try_reduce(|| (0, 0), |x, y| Ok((x.0 + y.0, x.1 + y.1)))?;
    Ok(vec![
        r.make("chain-rule", "violations", Value::Real(chain as f64), Comparison::AtMost, 0.0, 0.0, Provenance::Exact, seed),
        r.make("event-conditioning", "violations", Value::Real(event as f64), Comparison::AtMost, 0.0, 0.0, Provenance::Exact, seed),
    ])
}

fn guessing_lemmas(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Lemmas };
    let checks = check_guessing_lemmas(&[1, 2], &[0.0, 0.5])?;
    let bad = checks.iter().filter(|c| !c.holds).count();
    let slack = checks.iter().map(|c| c.lhs.hi - c.rhs).fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        r.exhaustive("guessing/violations", "violations", bad as f64, Comparison::AtMost, 0.0, 0.0),
        r.exhaustive("guessing/max-excess", "max lhs.hi - rhs", slack, Comparison::AtMost, 0.0, 1e-9),
    ])
}

fn claim_record(r: &Rec, id: &str, chk: &ClaimCheck) -> ReportRecord {
    let b = Bracket { lo: chk.advantage.lo, hi: chk.advantage.lo, method: crate::entropy::Method::Helstrom };
    r.make(id, "distinguishing advantage", Value::Bracket(b), Comparison::AtMost, chk.epsilon, r.cfg.tolerance, Provenance::Exhaustive, r.cfg.seed)
}

fn composition_suite(cfg: &ExperimentConfig) -> Result<Vec<ReportRecord>> {
    let r = Rec { cfg, suite: Suite::Composition };
    let tol = cfg.tolerance;
    let mut out = Vec::new();
    let zero = Comb::emitting(&DensityOperator::basis(2, 0))?;
    let plus = Comb::emitting(&DensityOperator::from_matrix_unchecked(hadamard() * DensityOperator::basis(2, 0).matrix() * hadamard()))?;
    let d = distinguish_exact(&zero, &plus, &[Strategy::passive(1)], true)?;
    out.push(r.exact("helstrom-zero-vs-plus", "advantage", d.lo, Comparison::Equal, 0.5f64.sqrt()));

    let biased = fixtures::biased_key(0.1, 0.05)?;
    let debias = fixtures::debias(0.05)?;
    let leaky = fixtures::leaky(0.6)?;
    let trivial = fixtures::trivial()?;
    let claims: Vec<(&str, ConstructionClaim)> = vec![
        ("fixture/biased", biased.clone()),
        ("fixture/debias", debias.clone()),
        ("fixture/leaky", leaky.clone()),
        ("serial/biased-debias", compose_serial(&biased, &debias)?),
        ("serial/trivial-trivial", compose_serial(&trivial, &trivial)?),
        ("parallel/leaky-biased", compose_parallel(&leaky, &biased)?),
        ("parallel/leaky-trivial", compose_parallel(&leaky, &trivial)?),
        ("parallel/serial-leaky", compose_parallel(&compose_serial(&biased, &debias)?, &leaky)?),
    ];
    for (id, c) in &claims {
        out.push(claim_record(&r, id, &c.verify(tol)?));
    }
    let with_id = compose_parallel(&leaky, &trivial)?.verify(tol)?;
    out.push(r.exact("parallel/identity-keeps-error", "advantage", with_id.advantage.lo, Comparison::Equal, leaky.verify(tol)?.advantage.lo));

    let alice = compose_parallel(&leaky, &biased)?;
    let dev = commutation_deviation(
        &alice.protocol.alice,
        &Converter::new("dep", Interface::B, KrausChannel::depolarizing_qubit().tensor(&KrausChannel::identity(2))),
        &alice.real,
    )?;
    out.push(r.exact("commutation", "max entry deviation", dev, Comparison::AtMost, 1e-10));

    let broken = fixtures::broken(0.6)?.verify(tol)?;
    out.push(r.exact("negative-control", "broken fixture rejected", (!broken.pass) as u8 as f64, Comparison::Equal, 1.0));
    if cfg.plant_broken {
        out.push(claim_record(&r, "fixture/broken", &broken));
    }
    Ok(out)
}
