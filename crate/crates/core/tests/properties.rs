use acw_core::bitlinalg::{binary_entropy, gf2_matvec, hamming, toeplitz_from_seed};
use acw_core::distill::{distill_pipeline, make_noisy_correlated_source, EcParams, PaParams};
use acw_core::entropy::{hmin, hmin_smooth_classical, pguess_cq, pguess_grid_qubit, TripartiteJoint};
use acw_core::harness::fixtures;
use acw_core::harness::{commutation_deviation, compose_parallel, compose_serial, Converter, Interface};
use acw_core::hashing::{audit_uniformity, key_private_hash, ExtractorSpec, HashFamily, DEFAULT_BUDGET};
use acw_core::quantum::{
    apply_channel, conjugate_code_state, measure_bb, purified_distance, random_density, random_unitary, trace_distance, CMatrix,
    CVector, CqState, DensityOperator, KrausChannel, Symbol,
};
use acw_core::{Bitstring, Gf2Matrix};
use nalgebra::Complex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits(v: &[bool]) -> Bitstring {
    Bitstring::from_bits(v.to_vec())
}

/// Random channel d → d with `k` Kraus operators: slices of an isometry.
fn random_channel(d: usize, k: usize, rng: &mut ChaCha8Rng) -> KrausChannel {
    let u = random_unitary(d * k, rng);
    let ops = (0..k).map(|j| u.view((j * d, 0), (d, d)).into_owned()).collect();
    KrausChannel::new(ops).unwrap()
}

fn random_pure(d: usize, rng: &mut ChaCha8Rng) -> DensityOperator {
    let v = CVector::from_fn(d, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let n = v.norm();
    DensityOperator::pure(&(v / Complex::new(n, 0.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matvec_is_linear(rows in 1usize..8, cols in 1usize..8, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Gf2Matrix::from_rows(&(0..rows).map(|_| (0..cols).map(|_| rng.gen()).collect()).collect::<Vec<_>>()).unwrap();
        let a = bits(&(0..cols).map(|_| rng.gen()).collect::<Vec<_>>());
        let b = bits(&(0..cols).map(|_| rng.gen()).collect::<Vec<_>>());
        let lhs = gf2_matvec(&m, &a.xor(&b).unwrap()).unwrap();
        let rhs = gf2_matvec(&m, &a).unwrap().xor(&gf2_matvec(&m, &b).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn toeplitz_constant_on_diagonals(rows in 1usize..6, cols in 1usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = bits(&(0..rows + cols - 1).map(|_| rng.gen()).collect::<Vec<_>>());
        let t = toeplitz_from_seed(&s, rows, cols).unwrap();
        for i in 1..rows {
            for j in 1..cols {
                prop_assert_eq!(t.get(i, j), t.get(i - 1, j - 1));
            }
        }
    }

    #[test]
    fn hamming_is_a_metric(x in prop::collection::vec(any::<bool>(), 6), y in prop::collection::vec(any::<bool>(), 6), z in prop::collection::vec(any::<bool>(), 6)) {
        let (x, y, z) = (bits(&x), bits(&y), bits(&z));
        prop_assert_eq!(hamming(&x, &y).unwrap(), hamming(&y, &x).unwrap());
        prop_assert_eq!(hamming(&x, &y).unwrap() == 0, x == y);
        prop_assert!(hamming(&x, &z).unwrap() <= hamming(&x, &y).unwrap() + hamming(&y, &z).unwrap());
    }

    #[test]
    fn binary_entropy_symmetric_and_concave(p in 0.0f64..=1.0, q in 0.0f64..=1.0, w in 0.0f64..=1.0) {
        let h = |v: f64| binary_entropy(v).unwrap();
        prop_assert!((h(p) - h(1.0 - p)).abs() <= 1e-12);
        prop_assert!(h(w * p + (1.0 - w) * q) + 1e-12 >= w * h(p) + (1.0 - w) * h(q));
    }

    #[test]
    fn pure_state_purified_distance_is_trace_distance(d in 2usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_pure(d, &mut rng), random_pure(d, &mut rng));
        prop_assert!((purified_distance(&a, &b).unwrap() - trace_distance(&a, &b).unwrap()).abs() <= 1e-7);
    }

    #[test]
    fn trace_distance_contracts(d in 2usize..5, k in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (random_density(d, 1.0, &mut rng), random_density(d, 1.0, &mut rng), random_density(d, 1.0, &mut rng));
        let td = |x: &DensityOperator, y: &DensityOperator| trace_distance(x, y).unwrap();
        prop_assert!(td(&a, &c) <= td(&a, &b) + td(&b, &c) + 1e-9);
        let ch = random_channel(d, k, &mut rng);
        prop_assert!(td(&apply_channel(&ch, &a).unwrap(), &apply_channel(&ch, &b).unwrap()) <= td(&a, &b) + 1e-9);
    }

    #[test]
    fn measurement_weights_sum_to_trace(n in 1usize..4, mass in 0.1f64..=1.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(1 << n, mass, &mut rng);
        let theta = Bitstring::from_u64(rng.gen_range(0..1u64 << n), n);
        let total: f64 = measure_bb(&rho, &theta).unwrap().iter().map(|(_, w)| w).sum();
        prop_assert!((total - rho.trace()).abs() <= 1e-10);
    }

    #[test]
    fn own_basis_measurement_recovers_x(n in 1usize..5, x: u64, theta: u64) {
        let (x, theta) = (Bitstring::from_u64(x % (1 << n), n), Bitstring::from_u64(theta % (1 << n), n));
        let out = measure_bb(&conjugate_code_state(&x, &theta).unwrap(), &theta).unwrap();
        let w = out.iter().find(|(v, _)| *v == x).unwrap().1;
        prop_assert!((w - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn hmin_never_drops_under_side_processing(d in 2usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<(Symbol, DensityOperator)> = (0..3u64).map(|x| (Symbol::Value(x), random_density(d, rng.gen_range(0.1..1.0), &mut rng))).collect();
        let total: f64 = parts.iter().map(|(_, r)| r.trace()).sum();
        let rho = CqState::from_unnormalized(d, parts.into_iter().map(|(s, r)| (s, r.scale(1.0 / total)))).unwrap();
        let ch = random_channel(d, 2, &mut rng);
        let before = hmin(&rho);
        let after = hmin(&rho.map_side(&ch).unwrap());
        prop_assert!(after.lo + 1e-6 >= before.lo.min(before.hi));
    }

    #[test]
    fn smoothing_is_monotone(a in 2u64..8, b in 1u64..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = TripartiteJoint::random(&mut rng, a, b, 1, 1.0).a_given_b().unwrap();
        let mut prev = f64::NEG_INFINITY;
        for delta in [0.0, 0.05, 0.1, 0.2] {
            let h = hmin_smooth_classical(&p, delta).unwrap();
            prop_assert!(h.lo + 1e-9 >= prev);
            prev = h.lo;
        }
    }

    #[test]
    fn key_private_hash_is_uniform(n in 2usize..6, m in 1usize..3) {
        prop_assume!(m <= n);
        let h = key_private_hash(&ExtractorSpec::new(HashFamily::toeplitz(n, m).unwrap(), 1.0));
        prop_assert!(audit_uniformity(&h, DEFAULT_BUDGET).unwrap());
    }

    #[test]
    fn pipeline_is_deterministic(seed: u64) {
        let source = make_noisy_correlated_source(6, 0.05, 5.0).unwrap();
        let ec = EcParams::new(6, 2, 2, 1.0 / 6.0).unwrap();
        let pa = PaParams::new(6, 1, 1.0, 0.0).unwrap();
        let a = distill_pipeline(&source, &ec, &pa, seed).unwrap();
        let b = distill_pipeline(&source, &ec, &pa, seed).unwrap();
        prop_assert_eq!(a.transcript, b.transcript);
        prop_assert_eq!(a.keys, b.keys);
    }

    #[test]
    fn converters_at_distinct_interfaces_commute(c in 0.0f64..1.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = fixtures::leaky_key(c).unwrap();
        let a = Converter::new("a", Interface::A, random_channel(2, 2, &mut rng));
        let b = Converter::new("b", Interface::B, random_channel(2, 3, &mut rng));
        let e = Converter::new("e", Interface::E, random_channel(2, 1, &mut rng));
        prop_assert!(commutation_deviation(&a, &b, &r).unwrap() <= 1e-10);
        prop_assert!(commutation_deviation(&b, &e, &r).unwrap() <= 1e-10);
    }

    #[test]
    fn composed_advantage_within_summed_epsilon(eps in 0.0f64..0.2, delta in 0.0f64..0.2, c in 0.0f64..1.0) {
        let (c1, c2, c3) = (fixtures::biased_key(eps, delta).unwrap(), fixtures::debias(delta).unwrap(), fixtures::leaky(c).unwrap());
        let serial = compose_serial(&c1, &c2).unwrap();
        prop_assert!(serial.verify(1e-9).unwrap().pass);
        let par = compose_parallel(&serial, &c3).unwrap();
        let chk = par.verify(1e-9).unwrap();
        prop_assert!(chk.pass && chk.advantage.lo <= eps + delta + c3.epsilon + 1e-9);
    }
}

/// Brute-force qubit measurement search never beats the certified bracket.
#[test]
fn pguess_bracket_contains_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let w: f64 = rng.gen_range(0.2..0.8);
        let (a, b) = (random_density(2, w, &mut rng), random_density(2, 1.0 - w, &mut rng));
        let ops: Vec<CMatrix> = vec![a.matrix().clone(), b.matrix().clone()];
        let rho = CqState::from_unnormalized(2, [(Symbol::Value(0), a), (Symbol::Value(1), b)]).unwrap();
        let bracket = pguess_cq(&rho);
        let grid = pguess_grid_qubit(&ops, 100);
        assert!(grid <= bracket.hi + 1e-9, "{grid} above {bracket:?}");
        assert!(bracket.lo <= grid + 2e-3, "grid {grid} far below {bracket:?}");
    }
}
