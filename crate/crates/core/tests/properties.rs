//! Cross-module invariants: serialization round-trips, lottery
//! normalization, padding round-trips, and the agreement between every
//! mechanism's lottery and the realizability checker.

use proptest::prelude::*;

use fairdiv_core::bivalued::{self, BiValuedInstance};
use fairdiv_core::harness::{self, MechanismId};
use fairdiv_core::numeric::{rat, Rational};
use fairdiv_core::realize::{decompose_or_refute, Realization};
use fairdiv_core::{
    marginals, pad_to_multiple, strip, FractionalAllocation, Instance, IntegralAllocation,
    Lottery,
};

fn rational_strategy() -> impl Strategy<Value = Rational> {
    (0i64..50, 1i64..12).prop_map(|(n, d)| rat(n, d))
}

fn instance_strategy(n: usize, max_m: usize) -> impl Strategy<Value = Instance> {
    (1..=max_m).prop_flat_map(move |m| {
        proptest::collection::vec(proptest::collection::vec(rational_strategy(), m), n)
            .prop_map(|values| Instance::new(values).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn instance_serde_round_trip(inst in instance_strategy(3, 6)) {
        let back = Instance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn lottery_serde_round_trip(owners_a in proptest::collection::vec(0usize..2, 1..6)) {
        let m = owners_a.len();
        let a = IntegralAllocation::from_owners(2, &owners_a);
        let b = IntegralAllocation::from_owners(2, &owners_a.iter().map(|o| 1 - o).collect::<Vec<_>>());
        let lottery = Lottery::new(vec![(rat(1, 3), a), (rat(2, 3), b)]);
        let back = Lottery::from_json(&lottery.to_json()).unwrap();
        prop_assert_eq!(back, lottery);
        let _ = m;
    }

    #[test]
    fn pad_strip_round_trip(owners in proptest::collection::vec(0usize..3, 1..8), k in 1usize..5) {
        let m = owners.len();
        let inst = Instance::new(vec![vec![Rational::one(); m]; 3]).unwrap();
        let (padded, pad) = pad_to_multiple(&inst, k);
        prop_assert_eq!(padded.m % k, 0);
        // Extend the allocation arbitrarily over dummies, then strip.
        let mut padded_owners = owners.clone();
        padded_owners.resize(padded.m, 0);
        let alloc = IntegralAllocation::from_owners(3, &padded_owners);
        let stripped = strip(&alloc, &pad);
        prop_assert!(stripped.is_partition_of(m));
        for (g, &owner) in owners.iter().enumerate() {
            prop_assert_eq!(stripped.owner_of(g), Some(owner));
        }
    }

    #[test]
    fn normalization_preserves_marginals(owners in proptest::collection::vec(0usize..2, 1..6)) {
        let a = IntegralAllocation::from_owners(2, &owners);
        // Duplicate entries are legal; merging them must not move marginals.
        let lottery = Lottery::new(vec![
            (rat(1, 4), a.clone()),
            (rat(1, 4), a.clone()),
            (rat(1, 2), a),
        ]);
        let merged = lottery.normalized();
        prop_assert_eq!(merged.entries.len(), 1);
        prop_assert_eq!(marginals(&merged).unwrap(), marginals(&lottery).unwrap());
    }
}

/// Every mechanism's lottery re-verifies through the decomposition checker:
/// its own support realizes its own marginals.
#[test]
fn mechanism_lotteries_reverify_through_decomposition() {
    let two = Instance::from_ints(&[vec![4, 3, 2, 1], vec![1, 2, 3, 4]]).unwrap();
    let three = harness::not_ef1_realizable_instance();
    let bi = harness::mnw_bivalued_instance();
    let cases: Vec<(MechanismId, Instance)> = vec![
        (MechanismId::Two, two.clone()),
        (MechanismId::Three, three),
        (MechanismId::NEf, two.clone()),
        (MechanismId::Prop1Mms, two),
        (
            MechanismId::Bivalued { p: Rational::from_int(2), q: Rational::one() },
            bi,
        ),
    ];
    for (mech, inst) in cases {
        let lottery = harness::run_mechanism(&mech, &inst).unwrap();
        let x = marginals(&lottery).unwrap();
        let support: Vec<IntegralAllocation> = lottery
            .normalized()
            .entries
            .iter()
            .map(|e| e.allocation())
            .collect();
        match decompose_or_refute(&x, &support).unwrap() {
            Realization::Lottery(back) => {
                assert_eq!(marginals(&back).unwrap(), x, "{mech:?} marginals drifted");
            }
            Realization::Refuted(_) => panic!("{mech:?} lottery must realize its own marginals"),
        }
    }
}

/// The bi-valued rule's fractional output stays Pareto-undominated even
/// against integral rivals on tiny instances (sanity bridge between the
/// market certificate and the enumeration-based check).
#[test]
fn bivalued_rule_not_dominated_by_integral_allocations() {
    let inst = Instance::from_ints(&[vec![2, 1, 2], vec![1, 2, 2]]).unwrap();
    let bvi = BiValuedInstance::new(inst.clone(), Rational::from_int(2), Rational::one()).unwrap();
    let (x, _) = bivalued::rule(&bvi).unwrap();
    let base: Vec<Rational> = (0..2)
        .map(|i| {
            x.shares[i]
                .iter()
                .zip(&inst.values[i])
                .map(|(s, v)| s * v)
                .sum()
        })
        .collect();
    let all = fairdiv_core::realize::enumerate_allocations(&inst, |_| true).unwrap();
    for alloc in all {
        let utilities: Vec<Rational> =
            (0..2).map(|i| inst.bundle_value(i, &alloc.bundles[i])).collect();
        let weakly = utilities.iter().zip(&base).all(|(u, b)| u >= b);
        let strictly = utilities.iter().zip(&base).any(|(u, b)| u > b);
        assert!(!(weakly && strictly), "integral allocation dominates the rule output");
    }
}

/// The two-level rule's output on the benchmark instance is fractionally
/// Pareto-optimal by the direct slack check, agreeing with its market
/// certificate.
#[test]
fn bivalued_benchmark_output_is_pareto_optimal() {
    let inst = harness::mnw_bivalued_instance();
    let bvi = BiValuedInstance::new(inst.clone(), Rational::from_int(2), Rational::one()).unwrap();
    let (x, trace) = bivalued::rule(&bvi).unwrap();
    bivalued::market_certificate(&bvi, &trace, &x).unwrap();
    assert_eq!(
        fairdiv_core::fairness::check_pareto_fractional(&inst, &x).unwrap(),
        fairdiv_core::fairness::ParetoFracVerdict::Optimal
    );
}

/// Equal division on any two-agent instance realizes over the mechanism's
/// own pair of supports — the matrix form of the half/half coin flip.
#[test]
fn equal_division_realizes_over_balanced_pairs() {
    let inst = Instance::from_ints(&[vec![7, 1, 3, 3, 2], vec![2, 2, 2, 2, 2]]).unwrap();
    let lottery = fairdiv_core::mech_two::run(&inst).unwrap();
    let x = FractionalAllocation::equal_division(2, 5);
    assert_eq!(marginals(&lottery).unwrap(), x);
}
