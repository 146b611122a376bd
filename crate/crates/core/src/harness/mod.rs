//! Resources, converters and construction claims with exact or sampled
//! distinguishing advantages, plus experiment orchestration.
//!
//! Systems are combs: ordered stages `X_i ⊗ M → M ⊗ Y_i` over a memory
//! register. A distinguisher strategy is itself a small comb that prepares
//! every `X_i` from its own register, absorbs every `Y_i`, and ends with a
//! binary measurement (or the Helstrom measurement when none is fixed).

mod report;
mod suites;

pub use report::*;

use crate::distill::hoeffding_width;
use crate::error::{invalid, Error, Result};
use crate::quantum::{
    apply_channel, c, herm_eig, kron, partial_trace, permute_subsystems, trace_distance, CMatrix, DensityOperator,
    KrausChannel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest joint dimension (distinguisher ⊗ memory) simulated densely.
pub const DIM_CAP: usize = 1 << 8;

/// One round `X ⊗ M → M ⊗ Y`.
#[derive(Clone, Debug)]
pub struct Stage {
    pub x_dim: usize,
    pub y_dim: usize,
    pub channel: KrausChannel,
}

#[derive(Clone, Debug)]
pub struct Comb {
    mem_dim: usize,
    init: DensityOperator,
    stages: Vec<Stage>,
}

impl Comb {
    pub fn new(init: DensityOperator, stages: Vec<Stage>) -> Result<Self> {
        let mem_dim = init.dim();
        for (i, s) in stages.iter().enumerate() {
            if s.channel.dim_in() != s.x_dim * mem_dim || s.channel.dim_out() != mem_dim * s.y_dim {
                return invalid(format!("stage {i} does not map X⊗M to M⊗Y"));
            }
        }
        Ok(Self { mem_dim, init, stages })
    }

    /// One round with no input that hands out `state`.
    pub fn emitting(state: &DensityOperator) -> Result<Self> {
        let (vals, vecs) = herm_eig(state.matrix());
        let d = state.dim();
        let ops: Vec<CMatrix> = vals
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 1e-15)
            .map(|(i, &l)| CMatrix::from_fn(d, 1, |r, _| vecs[(r, i)] * c(l.sqrt(), 0.0)))
            .collect();
        let ops = if ops.is_empty() { vec![CMatrix::zeros(d, 1)] } else { ops };
        Comb::new(DensityOperator::basis(1, 0), vec![Stage { x_dim: 1, y_dim: d, channel: KrausChannel::new(ops)? }])
    }

    pub fn rounds(&self) -> usize {
        self.stages.len()
    }

    pub fn mem_dim(&self) -> usize {
        self.mem_dim
    }

    fn interface(&self) -> Vec<(usize, usize)> {
        self.stages.iter().map(|s| (s.x_dim, s.y_dim)).collect()
    }
}

/// Interactive distinguisher: `preps[i]` maps its register D to D ⊗ X_i.
#[derive(Clone, Debug)]
pub struct Strategy {
    pub name: String,
    pub init: DensityOperator,
    pub preps: Vec<KrausChannel>,
    /// Effect for outcome 1 on the final register; `None` is Helstrom.
    pub effect: Option<CMatrix>,
}

impl Strategy {
    /// Reads every output without sending anything.
    pub fn passive(rounds: usize) -> Self {
        Self { name: "passive".into(), init: DensityOperator::basis(1, 0), preps: vec![KrausChannel::identity(1); rounds], effect: None }
    }
}

/// Final state on D ⊗ M and the dimension of D.
fn interact(comb: &Comb, s: &Strategy) -> Result<(DensityOperator, usize)> {
    if s.preps.len() != comb.rounds() {
        return invalid(format!("strategy {} has {} rounds, comb has {}", s.name, s.preps.len(), comb.rounds()));
    }
    let m = comb.mem_dim;
    let mut d = s.init.dim();
    let mut state = s.init.tensor(&comb.init);
    for (prep, stage) in s.preps.iter().zip(&comb.stages) {
        if prep.dim_in() != d || prep.dim_out() % stage.x_dim != 0 {
            return invalid(format!("strategy {} cannot feed a stage with |X| = {}", s.name, stage.x_dim));
        }
        let d_new = prep.dim_out() / stage.x_dim;
        if d_new * stage.y_dim * m > DIM_CAP {
            return Err(Error::BudgetExceeded { required: (d_new * stage.y_dim * m) as u128, budget: DIM_CAP as u128 });
        }
        state = apply_channel(&prep.tensor(&KrausChannel::identity(m)), &state)?;
        state = apply_channel(&KrausChannel::identity(d_new).tensor(&stage.channel), &state)?;
        let moved = permute_subsystems(state.matrix(), &[d_new, m, stage.y_dim], &[0, 2, 1])?;
        state = DensityOperator::from_matrix_unchecked(moved);
        d = d_new * stage.y_dim;
    }
    Ok((state, d))
}

fn outcome_one(rho: &DensityOperator, effect: &CMatrix) -> f64 {
    (effect * rho.matrix()).trace().re
}

/// Projector onto the positive part of ρ − σ.
fn helstrom_effect(rho: &DensityOperator, sigma: &DensityOperator) -> CMatrix {
    let diff = rho.matrix() - sigma.matrix();
    let (vals, vecs) = herm_eig(&diff);
    let d = diff.nrows();
    let mut p = CMatrix::zeros(d, d);
    for (i, &l) in vals.iter().enumerate() {
        if l > 0.0 {
            let v = vecs.column(i);
            p += &v * v.adjoint();
        }
    }
    p
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Distinguishing {
    pub lo: f64,
    pub hi: f64,
    pub best: String,
}

/// lo is the best advantage over `strategies`; hi is the trace distance of
/// the joint final states under the best strategy when `exhaustive`, else 1.
pub fn distinguish_exact(r1: &Comb, r2: &Comb, strategies: &[Strategy], exhaustive: bool) -> Result<Distinguishing> {
    if r1.interface() != r2.interface() {
        return invalid("resources expose different interfaces");
    }
    if strategies.is_empty() {
        return invalid("empty strategy set");
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for (i, s) in strategies.iter().enumerate() {
        let (j1, d1) = interact(r1, s)?;
        let (j2, _) = interact(r2, s)?;
        let keep_d = [true, false];
        let (a, b) = (partial_trace(&j1, &keep_d, &[d1, r1.mem_dim])?, partial_trace(&j2, &keep_d, &[d1, r2.mem_dim])?);
        let adv = match &s.effect {
            Some(e) => (outcome_one(&a, e) - outcome_one(&b, e)).abs(),
            None => trace_distance(&a, &b)?,
        };
        let joint = if r1.mem_dim == r2.mem_dim { trace_distance(&j1, &j2)? } else { 1.0 };
        if best.map_or(true, |(v, _, _)| adv > v) {
            best = Some((adv, i, joint));
        }
    }
    let (lo, i, joint) = best.expect("non-empty");
    Ok(Distinguishing { lo, hi: if exhaustive { joint.max(lo) } else { 1.0 }, best: strategies[i].name.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledAdvantage {
    pub estimate: f64,
    /// Two-sided 99% Hoeffding width of a difference of two empirical means.
    pub width: f64,
    pub trials: u64,
}

/// Samples the strategy's final measurement `trials` times on each resource.
pub fn distinguish_mc(r1: &Comb, r2: &Comb, strategy: &Strategy, trials: u64, seed: u64) -> Result<SampledAdvantage> {
    let trials = trials.max(1);
    let (j1, d1) = interact(r1, strategy)?;
    let (j2, _) = interact(r2, strategy)?;
    let keep_d = [true, false];
    let (a, b) = (partial_trace(&j1, &keep_d, &[d1, r1.mem_dim])?, partial_trace(&j2, &keep_d, &[d1, r2.mem_dim])?);
    let effect = strategy.effect.clone().unwrap_or_else(|| helstrom_effect(&a, &b));
    let (p1, p2) = (outcome_one(&a, &effect).clamp(0.0, 1.0), outcome_one(&b, &effect).clamp(0.0, 1.0));
    let diff: i64 = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            rng.gen_bool(p1) as i64 - rng.gen_bool(p2) as i64
        })
        .sum();
    Ok(SampledAdvantage { estimate: diff as f64 / trials as f64, width: 2.0 * hoeffding_width(trials), trials })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interface {
    A,
    B,
    E,
}

impl Interface {
    fn index(self) -> usize {
        self as usize
    }
}

/// One-shot resource handing out a state on A ⊗ B ⊗ E.
#[derive(Clone, Debug)]
pub struct Resource {
    pub name: String,
    pub dims: [usize; 3],
    pub state: DensityOperator,
}

impl Resource {
    pub fn new(name: impl Into<String>, dims: [usize; 3], state: DensityOperator) -> Result<Self> {
        if dims.iter().product::<usize>() != state.dim() {
            return invalid("state does not factor as A ⊗ B ⊗ E");
        }
        Ok(Self { name: name.into(), dims, state })
    }

    /// R₁ ∥ R₂ with each interface merged as (first, second).
    pub fn parallel(&self, other: &Resource) -> Result<Resource> {
        let [a1, b1, e1] = self.dims;
        let [a2, b2, e2] = other.dims;
        let joint = self.state.tensor(&other.state);
        let m = permute_subsystems(joint.matrix(), &[a1, b1, e1, a2, b2, e2], &[0, 3, 1, 4, 2, 5])?;
        Resource::new(
            format!("{} | {}", self.name, other.name),
            [a1 * a2, b1 * b2, e1 * e2],
            DensityOperator::from_matrix_unchecked(m),
        )
    }

    pub fn comb(&self) -> Result<Comb> {
        Comb::emitting(&self.state)
    }

    fn max_deviation(&self, other: &Resource) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        (self.state.matrix() - other.state.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Local channel at one interface.
#[derive(Clone, Debug)]
pub struct Converter {
    pub name: String,
    pub interface: Interface,
    pub channel: KrausChannel,
}

impl Converter {
    pub fn new(name: impl Into<String>, interface: Interface, channel: KrausChannel) -> Self {
        Self { name: name.into(), interface, channel }
    }

    pub fn identity(interface: Interface, dim: usize) -> Self {
        Self::new("id", interface, KrausChannel::identity(dim))
    }

    /// Prepares `state` at an interface that carries nothing.
    pub fn preparing(name: impl Into<String>, interface: Interface, state: &DensityOperator) -> Result<Self> {
        let comb = Comb::emitting(state)?;
        Ok(Self::new(name, interface, comb.stages[0].channel.clone()))
    }

    pub fn attach(&self, r: &Resource) -> Result<Resource> {
        let k = self.interface.index();
        if self.channel.dim_in() != r.dims[k] {
            return invalid(format!("converter {} expects dim {} at {:?}, resource has {}", self.name, self.channel.dim_in(), self.interface, r.dims[k]));
        }
        let before: usize = r.dims[..k].iter().product();
        let after: usize = r.dims[k + 1..].iter().product();
        let full = KrausChannel::identity(before).tensor(&self.channel).tensor(&KrausChannel::identity(after));
        let mut dims = r.dims;
        dims[k] = self.channel.dim_out();
        Resource::new(format!("{}·{}", self.name, r.name), dims, apply_channel(&full, &r.state)?)
    }

    /// `after` applied once `self` is done.
    pub fn then(&self, after: &Converter) -> Result<Converter> {
        if self.interface != after.interface {
            return invalid("sequential converters sit at different interfaces");
        }
        Ok(Converter::new(format!("{}∘{}", after.name, self.name), self.interface, after.channel.compose(&self.channel)?))
    }

    pub fn parallel(&self, other: &Converter) -> Result<Converter> {
        if self.interface != other.interface {
            return invalid("parallel converters sit at different interfaces");
        }
        Ok(Converter::new(format!("{}|{}", self.name, other.name), self.interface, self.channel.tensor(&other.channel)))
    }
}

/// Largest entry of β(α(R)) − α(β(R)) for converters at distinct interfaces.
pub fn commutation_deviation(alpha: &Converter, beta: &Converter, r: &Resource) -> Result<f64> {
    if alpha.interface == beta.interface {
        return invalid("commutation is only required across interfaces");
    }
    let one = beta.attach(&alpha.attach(r)?)?;
    let two = alpha.attach(&beta.attach(r)?)?;
    Ok(one.max_deviation(&two))
}

#[derive(Clone, Debug)]
pub struct Protocol {
    pub alice: Converter,
    pub bob: Converter,
}

impl Protocol {
    pub fn identity(r: &Resource) -> Self {
        Self { alice: Converter::identity(Interface::A, r.dims[0]), bob: Converter::identity(Interface::B, r.dims[1]) }
    }
}

/// π_B π_A R is ε-close to σ_E S.
#[derive(Clone, Debug)]
pub struct ConstructionClaim {
    pub name: String,
    pub protocol: Protocol,
    pub real: Resource,
    pub ideal: Resource,
    pub simulator: Converter,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClaimCheck {
    pub name: String,
    pub advantage: Distinguishing,
    pub epsilon: f64,
    pub pass: bool,
}

impl ConstructionClaim {
    pub fn new(name: impl Into<String>, protocol: Protocol, real: Resource, ideal: Resource, simulator: Converter, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return invalid("claimed epsilon must be non-negative");
        }
        if protocol.alice.interface != Interface::A || protocol.bob.interface != Interface::B || simulator.interface != Interface::E {
            return invalid("protocol converters belong at A and B, the simulator at E");
        }
        let claim = Self { name: name.into(), protocol, real, ideal, simulator, epsilon };
        if claim.real_side()?.dims != claim.ideal_side()?.dims {
            return invalid("real and simulated ideal systems expose different interfaces");
        }
        Ok(claim)
    }

    pub fn real_side(&self) -> Result<Resource> {
        self.protocol.bob.attach(&self.protocol.alice.attach(&self.real)?)
    }

    pub fn ideal_side(&self) -> Result<Resource> {
        self.simulator.attach(&self.ideal)
    }

    /// Helstrom on the whole one-shot output is optimal, so the passive
    /// strategy set is exhaustive here.
    pub fn verify(&self, tolerance: f64) -> Result<ClaimCheck> {
        let advantage = distinguish_exact(&self.real_side()?.comb()?, &self.ideal_side()?.comb()?, &[Strategy::passive(1)], true)?;
        Ok(ClaimCheck { name: self.name.clone(), pass: advantage.lo <= self.epsilon + tolerance, advantage, epsilon: self.epsilon })
    }
}

/// R → S (ε) and S → T (δ) give R → T (ε + δ).
pub fn compose_serial(c1: &ConstructionClaim, c2: &ConstructionClaim) -> Result<ConstructionClaim> {
    if c1.ideal.max_deviation(&c2.real) > 1e-12 {
        return invalid(format!("ideal of {} is not the real resource of {}", c1.name, c2.name));
    }
    let protocol = Protocol { alice: c1.protocol.alice.then(&c2.protocol.alice)?, bob: c1.protocol.bob.then(&c2.protocol.bob)? };
    ConstructionClaim::new(
        format!("{} ; {}", c1.name, c2.name),
        protocol,
        c1.real.clone(),
        c2.ideal.clone(),
        c2.simulator.then(&c1.simulator)?,
        c1.epsilon + c2.epsilon,
    )
}

/// R₁ ∥ R₂ → S₁ ∥ S₂ with ε₁ + ε₂.
pub fn compose_parallel(c1: &ConstructionClaim, c2: &ConstructionClaim) -> Result<ConstructionClaim> {
    let protocol = Protocol { alice: c1.protocol.alice.parallel(&c2.protocol.alice)?, bob: c1.protocol.bob.parallel(&c2.protocol.bob)? };
    ConstructionClaim::new(
        format!("{} | {}", c1.name, c2.name),
        protocol,
        c1.real.parallel(&c2.real)?,
        c1.ideal.parallel(&c2.ideal)?,
        c1.simulator.parallel(&c2.simulator)?,
        c1.epsilon + c2.epsilon,
    )
}

/// Toy claims whose exact advantages are known in closed form.
pub mod fixtures {
    use super::*;

    /// A and B hold equal bits with Pr[00] = ½ + bias; E holds nothing.
    pub fn shared_bit(bias: f64) -> Result<Resource> {
        let p = DensityOperator::diagonal(&[0.5 + bias, 0.0, 0.0, 0.5 - bias])?;
        Resource::new(format!("bit({bias})"), [2, 2, 1], p)
    }

    /// Uniform shared bit k, E holds |0⟩ for k = 0 and c|0⟩ + √(1−c²)|1⟩ for k = 1.
    pub fn leaky_key(overlap: f64) -> Result<Resource> {
        let psi = [leak_state(0, overlap), leak_state(1, overlap)];
        let mut m = CMatrix::zeros(8, 8);
        for (k, e) in psi.iter().enumerate() {
            let ab = CMatrix::from_fn(4, 4, |i, j| if i == j && i == 3 * k { c(0.5, 0.0) } else { c(0.0, 0.0) });
            m += kron(&ab, e.matrix());
        }
        Resource::new(format!("leaky({overlap})"), [2, 2, 2], DensityOperator::from_matrix_unchecked(m))
    }

    fn leak_state(k: usize, overlap: f64) -> DensityOperator {
        let v = if k == 0 { [1.0, 0.0] } else { [overlap, (1.0 - overlap * overlap).max(0.0).sqrt()] };
        DensityOperator::pure(&crate::quantum::CVector::from_fn(2, |i, _| c(v[i], 0.0)))
    }

    fn flip(interface: Interface) -> Converter {
        Converter::new("X", interface, KrausChannel::pauli_string("X"))
    }

    /// bit(−(ε+δ)) relabelled by X at both ends, against bit(δ): advantage ε.
    pub fn biased_key(eps: f64, delta: f64) -> Result<ConstructionClaim> {
        let real = shared_bit(-(eps + delta))?;
        let ideal = shared_bit(delta)?;
        ConstructionClaim::new(
            format!("biased({eps},{delta})"),
            Protocol { alice: flip(Interface::A), bob: flip(Interface::B) },
            real,
            ideal,
            Converter::identity(Interface::E, 1),
            eps,
        )
    }

    /// bit(δ) against a uniform bit: advantage δ.
    pub fn debias(delta: f64) -> Result<ConstructionClaim> {
        let real = shared_bit(delta)?;
        let protocol = Protocol::identity(&real);
        ConstructionClaim::new(format!("debias({delta})"), protocol, real, shared_bit(0.0)?, Converter::identity(Interface::E, 1), delta)
    }

    /// Simulator prepares the average leak; advantage ½√(1−c²).
    pub fn leaky(overlap: f64) -> Result<ConstructionClaim> {
        let real = leaky_key(overlap)?;
        let avg = leak_state(0, overlap).add(&leak_state(1, overlap))?.scale(0.5);
        let eps = 0.5 * (1.0 - overlap * overlap).sqrt();
        let protocol = Protocol::identity(&real);
        ConstructionClaim::new(format!("leaky({overlap})"), protocol, real, shared_bit(0.0)?, Converter::preparing("avg", Interface::E, &avg)?, eps)
    }

    /// Planted bug: the simulator prepares |1⟩ yet the claim keeps ½√(1−c²);
    /// the true advantage is ½(1 + c).
    pub fn broken(overlap: f64) -> Result<ConstructionClaim> {
        let mut claim = leaky(overlap)?;
        claim.name = format!("broken({overlap})");
        claim.simulator = Converter::preparing("one", Interface::E, &DensityOperator::basis(2, 1))?;
        Ok(claim)
    }

    /// The identity construction of a uniform shared bit.
    pub fn trivial() -> Result<ConstructionClaim> {
        let r = shared_bit(0.0)?;
        ConstructionClaim::new("trivial", Protocol::identity(&r), r.clone(), r, Converter::identity(Interface::E, 1), 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::quantum::hadamard;

    fn plus() -> DensityOperator {
        DensityOperator::from_matrix_unchecked(hadamard() * DensityOperator::basis(2, 0).matrix() * hadamard())
    }

    #[test]
    fn helstrom_example() {
        let (a, b) = (Comb::emitting(&DensityOperator::basis(2, 0)).unwrap(), Comb::emitting(&plus()).unwrap());
        let d = distinguish_exact(&a, &b, &[Strategy::passive(1)], true).unwrap();
        assert!((d.lo - 0.5f64.sqrt()).abs() < 1e-9 && (d.hi - d.lo).abs() < 1e-9);
        let same = distinguish_exact(&a, &a, &[Strategy::passive(1)], true).unwrap();
        assert!(same.lo.abs() < 1e-12 && same.hi.abs() < 1e-12);
        let loose = distinguish_exact(&a, &b, &[Strategy::passive(1)], false).unwrap();
        assert_eq!(loose.hi, 1.0);
    }

    #[test]
    fn interactive_memory_comb() {
        // each stage stores its input and releases the previous one; the
        // forgetful comb wipes memory before the second stage
        let store = Stage { x_dim: 2, y_dim: 2, channel: KrausChannel::identity(4) };
        let keep = Comb::new(DensityOperator::basis(2, 0), vec![store.clone(), store.clone()]).unwrap();
        let reset = KrausChannel::new(vec![
            CMatrix::from_fn(4, 4, |i, j| c((i == j && j % 2 == 0) as u8 as f64, 0.0)),
            CMatrix::from_fn(4, 4, |i, j| c((i + 1 == j && j % 2 == 1) as u8 as f64, 0.0)),
        ])
        .unwrap();
        let forget = Comb::new(DensityOperator::basis(2, 0), vec![store, Stage { x_dim: 2, y_dim: 2, channel: reset }]).unwrap();
        let probe = |bit: usize| Strategy {
            name: format!("send {bit}"),
            init: DensityOperator::basis(1, 0),
            preps: vec![
                KrausChannel::new(vec![CMatrix::from_fn(2, 1, |i, _| c((i == bit) as u8 as f64, 0.0))]).unwrap(),
                KrausChannel::new(vec![CMatrix::from_fn(4, 2, |i, j| c((i == j * 2) as u8 as f64, 0.0))]).unwrap(),
            ],
            effect: None,
        };
        let d = distinguish_exact(&keep, &forget, &[probe(0), probe(1)], false).unwrap();
        assert!((d.lo - 1.0).abs() < 1e-9);
        assert_eq!(d.best, "send 1");
    }

    #[test]
    fn sampled_advantage() {
        let (a, b) = (Comb::emitting(&DensityOperator::basis(2, 0)).unwrap(), Comb::emitting(&DensityOperator::basis(2, 1)).unwrap());
        let s = Strategy::passive(1);
        let far = distinguish_mc(&a, &b, &s, 2000, 1).unwrap();
        assert!((far.estimate - 1.0).abs() <= far.width);
        let same = distinguish_mc(&a, &a, &s, 2000, 1).unwrap();
        assert!(same.estimate.abs() <= same.width);
    }

    #[test]
    fn fixtures_hit_their_epsilons() {
        for claim in [biased_key(0.1, 0.05).unwrap(), debias(0.05).unwrap(), leaky(0.6).unwrap(), trivial().unwrap()] {
            let chk = claim.verify(1e-9).unwrap();
            assert!(chk.pass && (chk.advantage.lo - claim.epsilon).abs() < 1e-9, "{chk:?}");
        }
        let bad = broken(0.6).unwrap().verify(1e-9).unwrap();
        assert!(!bad.pass && (bad.advantage.lo - 0.8).abs() < 1e-9);
    }

    #[test]
    fn composition_accounting() {
        let s = compose_serial(&biased_key(0.1, 0.05).unwrap(), &debias(0.05).unwrap()).unwrap();
        let chk = s.verify(1e-9).unwrap();
        assert!(chk.pass && (s.epsilon - 0.15).abs() < 1e-15);
        assert!(compose_serial(&debias(0.05).unwrap(), &biased_key(0.1, 0.05).unwrap()).is_err());
        let p = compose_parallel(&leaky(0.6).unwrap(), &biased_key(0.1, 0.05).unwrap()).unwrap();
        assert!(p.verify(1e-9).unwrap().pass);
        let with_id = compose_parallel(&leaky(0.6).unwrap(), &trivial().unwrap()).unwrap();
        let chk = with_id.verify(1e-9).unwrap();
        assert!((chk.advantage.lo - leaky(0.6).unwrap().epsilon).abs() < 1e-9);
    }

    #[test]
    fn converters_commute() {
        let r = leaky_key(0.3).unwrap();
        let a = Converter::new("H", Interface::A, KrausChannel::unitary(hadamard()).unwrap());
        let b = Converter::new("dep", Interface::B, KrausChannel::depolarizing_qubit());
        assert!(commutation_deviation(&a, &b, &r).unwrap() <= 1e-10);
        assert!(commutation_deviation(&a, &a, &r).is_err());
    }
}
