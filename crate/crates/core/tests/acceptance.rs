//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `cargo test --test acceptance -- --nocapture` to see
//! them). Every bound is exact; there are no tolerances anywhere.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fairdiv_core::bivalued::{self, BiValuedInstance};
use fairdiv_core::fairness::{self, ParetoFracVerdict};
use fairdiv_core::graphs::{edge_coloring, BipartiteMultigraph};
use fairdiv_core::harness::{self, MechanismId, MisreportFamily};
use fairdiv_core::numeric::{rat, Rational};
use fairdiv_core::realize::{self, Realization};
use fairdiv_core::{marginals, mech_n, mech_three, mech_two};
use fairdiv_core::{FractionalAllocation, Instance, IntegralAllocation};

fn r(n: i64) -> Rational {
    Rational::from_int(n)
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Instance {
    Instance::new(
        (0..n)
            .map(|_| (0..m).map(|_| rat(rng.gen_range(0..8), rng.gen_range(1..4))).collect())
            .collect(),
    )
    .unwrap()
}

fn random_bivalued(rng: &mut ChaCha8Rng, n: usize, m: usize) -> BiValuedInstance {
    let q = r(rng.gen_range(1..3));
    let p = &q + &r(rng.gen_range(1..4));
    let values: Vec<Vec<Rational>> = (0..n)
        .map(|_| (0..m).map(|_| if rng.gen_bool(0.5) { p.clone() } else { q.clone() }).collect())
        .collect();
    BiValuedInstance::new(Instance::new(values).unwrap(), p, q).unwrap()
}

/// Criterion 1: the known three-agent instance refutes realizability of the
/// equal division over envy-free-up-to-one-item allocations with an exactly
/// verifying certificate, and becomes realizable at the (1, 1) budget.
#[test]
fn criterion_01_equal_division_refutation_and_relaxation() {
    let started = Instant::now();
    let inst = harness::not_ef1_realizable_instance();
    let x = FractionalAllocation::equal_division(3, 4);

    let ef1_support =
        realize::enumerate_allocations(&inst, realize::ef_uv_predicate(&inst, 0, 1)).unwrap();
    match realize::decompose_or_refute(&x, &ef1_support).unwrap() {
        Realization::Refuted(cert) => assert!(cert.verify(&x, &ef1_support)),
        Realization::Lottery(_) => panic!("equal division must be refuted at (0, 1)"),
    }

    let relaxed_support =
        realize::enumerate_allocations(&inst, realize::ef_uv_predicate(&inst, 1, 1)).unwrap();
    match realize::decompose_or_refute(&x, &relaxed_support).unwrap() {
        Realization::Lottery(lottery) => {
            assert_eq!(marginals(&lottery).unwrap(), x);
        }
        Realization::Refuted(_) => panic!("equal division is realizable at (1, 1)"),
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget is 5 s");
    println!("[acceptance] criterion 1 (refutation + relaxation, < 5 s): PASS ({elapsed:?})");
}

/// Criterion 2: 500 random two-agent instances; both support allocations
/// are envy-free up to one item in both orientations and every marginal is
/// exactly one half.
#[test]
fn criterion_02_two_agent_property_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1D_0002);
    let half = rat(1, 2);
    for _ in 0..500 {
        let m = rng.gen_range(1..=12usize);
        let inst = random_instance(&mut rng, 2, m);
        let lottery = mech_two::run(&inst).unwrap();
        assert_eq!(lottery.entries.len(), 2);
        for entry in &lottery.entries {
            assert!(fairness::check_ef1(&inst, &entry.allocation()).unwrap().satisfied);
        }
        let x = marginals(&lottery).unwrap();
        assert!(x.shares.iter().all(|row| row.iter().all(|v| *v == half)));
    }
    println!("[acceptance] criterion 2 (500 two-agent instances, exact): PASS");
}

/// Criterion 3: 500 random three-agent instances; every support allocation
/// withstands the one-added/one-removed envy check, marginals equal the
/// fractional rule exactly, and agent 3's marginal is exactly one third.
#[test]
fn criterion_03_three_agent_property_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1D_0003);
    let third = rat(1, 3);
    for _ in 0..500 {
        let m = rng.gen_range(1..=12usize);
        let inst = random_instance(&mut rng, 3, m);
        let lottery = mech_three::run(&inst).unwrap();
        assert_eq!(lottery.entries.len(), 3);
        for entry in &lottery.entries {
            assert!(
                fairness::check_ef_uv(&inst, &entry.allocation(), 1, 1).unwrap().satisfied,
                "support breaks the envy budget on {inst:?}"
            );
        }
        let x = marginals(&lottery).unwrap();
        let rule = mech_three::fractional_rule(&inst, mech_three::TieBreaking::Careful).unwrap();
        assert_eq!(x, rule);
        assert!(x.shares[2].iter().all(|v| *v == third));
    }
    println!("[acceptance] criterion 3 (500 three-agent instances, exact): PASS");
}

/// Criterion 4: on the tie-subtlety instance, index-order tie-breaking
/// admits a strictly beneficial misreport while the careful selection shows
/// a gain of exactly zero on the same family.
#[test]
fn criterion_04_tie_breaking_discrimination() {
    let inst = harness::tie_subtlety_instance();
    let family = MisreportFamily::Explicit(vec![
        vec![r(1), r(2), r(1)],
        vec![r(1), r(2), r(2)],
        vec![r(2), r(1), r(2)],
        vec![r(2), r(2), r(2)],
    ]);
    let naive =
        harness::test_truthfulness(&MechanismId::ThreeIndexTies, &inst, &family).unwrap();
    assert!(naive.agents[0].max_gain.is_positive(), "naive ties must be manipulable");

    let careful = harness::test_truthfulness(&MechanismId::Three, &inst, &family).unwrap();
    assert!(careful.max_gain().is_zero(), "careful ties must show zero gain");
    println!("[acceptance] criterion 4 (tie-breaking discrimination): PASS");
}

/// Criterion 5: for three and four agents, the consensus partition gives
/// every agent exactly a 1/n value of every part with at most n(n-1)
/// fractional items, and every permutation support passes the
/// ((n-1)^2, n-1) envy check.
#[test]
fn criterion_05_consensus_partition_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1D_0005);
    for n in [3usize, 4] {
        for _ in 0..100 {
            let m = rng.gen_range(n..=10usize);
            let inst = random_instance(&mut rng, n, m);
            let parts = mech_n::consensus_partition(&inst).unwrap();
            let n_rat = r(n as i64);
            for part in &parts {
                for agent in 0..n {
                    let value: Rational =
                        part.iter().zip(&inst.values[agent]).map(|(x, v)| x * v).sum();
                    assert_eq!(value, inst.total_value(agent) / &n_rat);
                }
            }
            assert!(mech_n::fractional_items(&parts).len() <= n * (n - 1));

            let lottery = mech_n::ef_run(&inst).unwrap();
            let (u, v) = ((n - 1) * (n - 1), n - 1);
            for entry in &lottery.entries {
                assert!(
                    fairness::check_ef_uv(&inst, &entry.allocation(), u, v).unwrap().satisfied
                );
            }
        }
    }
    println!("[acceptance] criterion 5 (consensus suite, n = 3 and 4, 200 instances): PASS");
}

/// Criterion 6: for two and three agents, every support of the
/// group-matching mechanism is proportional up to one item and worth at
/// least a 1/n fraction of the exact maximin share.
#[test]
fn criterion_06_prop1_and_maximin_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1D_0006);
    for n in [2usize, 3] {
        for _ in 0..100 {
            let m = rng.gen_range(1..=12usize);
            let inst = random_instance(&mut rng, n, m);
            let lottery = mech_n::prop1_mms_run(&inst).unwrap();
            let shares: Vec<Rational> =
                (0..n).map(|i| fairness::mms_value(&inst, i).unwrap()).collect();
            for entry in &lottery.entries {
                let alloc = entry.allocation();
                assert!(fairness::check_prop1(&inst, &alloc).unwrap().satisfied);
                for agent in 0..n {
                    let own = inst.bundle_value(agent, &alloc.bundles[agent]);
                    assert!(
                        r(n as i64) * own >= shares[agent],
                        "support below 1/n of the exact maximin share"
                    );
                }
            }
        }
    }
    println!("[acceptance] criterion 6 (share-based suite, n = 2 and 3, exact): PASS");
}

/// Criterion 7: on the two-level instance, the integral welfare baseline
/// returns the known allocations before and after the misreport (a true
/// gain of one unit), while the two-level rule gives the same misreport a
/// gain of exactly zero and a truthful expected utility of five.
#[test]
fn criterion_07_bivalued_reproduction() {
    let truthful = harness::mnw_bivalued_instance();
    let best = bivalued::mnw_integral_baseline(&truthful).unwrap();
    assert_eq!(best.bundles[0], [0usize, 1].into_iter().collect::<BTreeSet<_>>());
    assert_eq!(best.bundles[1], [2usize, 3, 4, 5].into_iter().collect::<BTreeSet<_>>());

    let mut misreported = truthful.clone();
    misreported.values[0][2] = r(2);
    let lied = bivalued::mnw_integral_baseline(&misreported).unwrap();
    assert_eq!(lied.bundles[0], [0usize, 1, 2].into_iter().collect::<BTreeSet<_>>());
    let gain = truthful.bundle_value(0, &lied.bundles[0])
        - truthful.bundle_value(0, &best.bundles[0]);
    assert_eq!(gain, r(1));

    // The rule: truthful expected utility is exactly 5 (independent
    // hand-trace: two high items kept whole plus a quarter of each of the
    // four remaining units), and the same misreport gains nothing.
    let mech = MechanismId::Bivalued { p: r(2), q: r(1) };
    let x = harness::fractional_rule(&mech, &truthful).unwrap();
    let utility: Rational =
        (0..6).map(|g| &truthful.values[0][g] * &x.shares[0][g]).sum();
    assert_eq!(utility, r(5));
    let family = MisreportFamily::Explicit(vec![misreported.values[0].clone()]);
    let report = harness::test_truthfulness(&mech, &truthful, &family).unwrap();
    assert!(report.max_gain().is_zero());
    println!("[acceptance] criterion 7 (two-level reproduction, gains 1 vs 0): PASS");
}

/// Criterion 8: 300 random bi-valued instances; the market certificate
/// verifies all equilibrium conditions exactly, and a 30-instance subsample
/// confirms fractional Pareto optimality independently.
#[test]
fn criterion_08_market_certificates() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1D_0008);
    for trial in 0..300 {
        let n = rng.gen_range(2..=4usize);
        let m = rng.gen_range(1..=12usize);
        let bvi = random_bivalued(&mut rng, n, m);
        let (x, trace) = bivalued::rule(&bvi).unwrap();
        bivalued::market_certificate(&bvi, &trace, &x)
            .expect("equilibrium conditions must verify exactly");
        if trial % 10 == 0 {
            assert_eq!(
                fairness::check_pareto_fractional(&bvi.inst, &x).unwrap(),
                ParetoFracVerdict::Optimal,
                "certificate and direct check must agree"
            );
        }
    }
    println!("[acceptance] criterion 8 (300 market certificates + 30 direct checks): PASS");
}

/// Criterion 9: 100 random bi-valued instances small enough to enumerate;
/// the rule's output always decomposes into envy-free-up-to-one-item
/// allocations with exact marginals.
#[test]
fn criterion_09_bivalued_realizability() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1D_0009);
    for _ in 0..100 {
        let (n, m) = if rng.gen_bool(0.5) {
            (2usize, rng.gen_range(1..=10usize))
        } else {
            (3usize, rng.gen_range(1..=8usize))
        };
        assert!((n as u64).pow(m as u32) <= 100_000);
        let bvi = random_bivalued(&mut rng, n, m);
        let (x, _) = bivalued::rule(&bvi).unwrap();
        let lottery = bivalued::decompose(&bvi, &x).expect("rule outputs are realizable");
        assert_eq!(marginals(&lottery).unwrap(), x);
        for entry in &lottery.entries {
            assert!(fairness::check_ef1(&bvi.inst, &entry.allocation()).unwrap().satisfied);
        }
    }
    println!("[acceptance] criterion 9 (100 decompositions, all supports fair): PASS");
}

/// Criterion 10: greedy envy verdicts match exhaustive subset search over
/// 200 random instances with up to six items and every (u, v) in {0,1,2}^2.
#[test]
fn criterion_10_greedy_matches_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1D_0010);
    for _ in 0..200 {
        let n = rng.gen_range(2..=3usize);
        let m = rng.gen_range(1..=6usize);
        let inst = random_instance(&mut rng, n, m);
        let owners: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
        let alloc = IntegralAllocation::from_owners(n, &owners);
        for u in 0..=2usize {
            for v in 0..=2usize {
                let fast = fairness::check_ef_uv(&inst, &alloc, u, v).unwrap().satisfied;
                let slow = exhaustive_ef_uv(&inst, &alloc, u, v);
                assert_eq!(fast, slow, "disagreement at u={u}, v={v} on {inst:?}");
            }
        }
    }
    println!("[acceptance] criterion 10 (greedy = exhaustive over 200 x 9 checks): PASS");
}

/// Criterion 11: 100 random k-regular bipartite multigraphs split into k
/// edge-disjoint perfect matchings covering every edge.
#[test]
fn criterion_11_edge_coloring_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFA1D_0011);
    for _ in 0..100 {
        let side = rng.gen_range(2..=20usize);
        let k = rng.gen_range(1..=5usize);
        let mut edges = Vec::new();
        for _ in 0..k {
            let mut perm: Vec<usize> = (0..side).collect();
            perm.shuffle(&mut rng);
            for (l, &r) in perm.iter().enumerate() {
                edges.push((l, r));
            }
        }
        let graph = BipartiteMultigraph::new(side, side, edges.clone()).unwrap();
        let colors = edge_coloring(&graph, k).unwrap();
        assert_eq!(colors.len(), k);
        let mut seen = vec![false; edges.len()];
        for matching in &colors {
            assert_eq!(matching.len(), side);
            let mut left = vec![false; side];
            let mut right = vec![false; side];
            for &e in matching {
                assert!(!seen[e]);
                seen[e] = true;
                let (l, r) = edges[e];
                assert!(!left[l] && !right[r]);
                left[l] = true;
                right[r] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }
    println!("[acceptance] criterion 11 (100 regular multigraph decompositions): PASS");
}

/// Independent oracle for criterion 10: quantify over all witness subsets.
fn exhaustive_ef_uv(inst: &Instance, alloc: &IntegralAllocation, u: usize, v: usize) -> bool {
    for i in 0..inst.n {
        for j in 0..inst.n {
            if i == j {
                continue;
            }
            let outside: Vec<usize> =
                (0..inst.m).filter(|g| !alloc.bundles[i].contains(g)).collect();
            let inside: Vec<usize> = alloc.bundles[j].iter().copied().collect();
            let mut pair_ok = false;
            'outer: for add in 0u32..(1 << outside.len()) {
                if (add.count_ones() as usize) > u {
                    continue;
                }
                for rem in 0u32..(1 << inside.len()) {
                    if (rem.count_ones() as usize) > v {
                        continue;
                    }
                    let mut lhs = inst.bundle_value(i, &alloc.bundles[i]);
                    for (b, g) in outside.iter().enumerate() {
                        if add >> b & 1 == 1 {
                            lhs += &inst.values[i][*g];
                        }
                    }
                    let mut rhs = inst.bundle_value(i, &alloc.bundles[j]);
                    for (b, g) in inside.iter().enumerate() {
                        if rem >> b & 1 == 1 {
                            rhs -= &inst.values[i][*g];
                        }
                    }
                    if lhs >= rhs {
                        pair_ok = true;
                        break 'outer;
                    }
                }
            }
            if !pair_ok {
                return false;
            }
        }
    }
    true
}
