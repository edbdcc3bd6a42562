//! Randomized truthfulness sweeps: no mechanism may admit a beneficial
//! misreport in any generated family. Counts scale with the
//! `FAIRDIV_FUZZ_ROUNDS` environment variable (default 40 per target).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fairdiv_core::harness::{test_truthfulness, MechanismId, MisreportFamily};
use fairdiv_core::numeric::{rat, Rational};
use fairdiv_core::Instance;

fn rounds() -> usize {
    std::env::var("FAIRDIV_FUZZ_ROUNDS").ok().and_then(|s| s.parse().ok()).unwrap_or(40)
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, max_num: i64) -> Instance {
    Instance::new(
        (0..n)
            .map(|_| (0..m).map(|_| rat(rng.gen_range(0..max_num), 1)).collect())
            .collect(),
    )
    .unwrap()
}

/// The three-agent rule: permutations and swaps of true rows never help.
/// Small value ranges force plenty of ties, stressing the selection cases.
#[test]
fn three_agent_rule_resists_misreports() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    for round in 0..rounds() {
        let m = rng.gen_range(1..=7usize);
        let max = if round % 2 == 0 { 3 } else { 8 };
        let inst = random_instance(&mut rng, 3, m, max);
        for family in [MisreportFamily::ValuePermutations, MisreportFamily::PairwiseSwaps] {
            let report = test_truthfulness(&MechanismId::Three, &inst, &family).unwrap();
            assert!(
                !report.max_gain().is_positive(),
                "beneficial misreport found on {inst:?}: {report:?}"
            );
        }
    }
}

/// The two-level rule: every level pattern is a possible report; none may
/// beat the truth.
#[test]
fn bivalued_rule_resists_level_misreports() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF023);
    for _ in 0..rounds() {
        let n = rng.gen_range(2..=3usize);
        let m = rng.gen_range(1..=6usize);
        let q = Rational::from_int(rng.gen_range(1..3));
        let p = &q + &Rational::from_int(rng.gen_range(1..4));
        let values: Vec<Vec<Rational>> = (0..n)
            .map(|_| {
                (0..m).map(|_| if rng.gen_bool(0.5) { p.clone() } else { q.clone() }).collect()
            })
            .collect();
        let inst = Instance::new(values).unwrap();
        let mech = MechanismId::Bivalued { p: p.clone(), q: q.clone() };
        let family = MisreportFamily::LevelPatterns { p, q };
        let report = test_truthfulness(&mech, &inst, &family).unwrap();
        assert!(
            !report.max_gain().is_positive(),
            "beneficial misreport found on {inst:?}: {report:?}"
        );
    }
}

/// Scaling a report never moves any rule that only compares values.
#[test]
fn scale_invariant_rules_ignore_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF024);
    let factors = MisreportFamily::ScalarRescalings {
        factors: vec![rat(1, 2), Rational::from_int(2), Rational::from_int(5)],
    };
    for _ in 0..rounds() {
        let m = rng.gen_range(1..=8usize);
        let inst = random_instance(&mut rng, 3, m, 8);
        let report = test_truthfulness(&MechanismId::Three, &inst, &factors).unwrap();
        assert!(!report.max_gain().is_positive());
    }
}
