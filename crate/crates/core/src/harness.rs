//! Brute-force truthfulness testing, the library of named benchmark
//! instances, and the mechanism dispatch used by the command-line front end.

use serde::{Deserialize, Serialize};

use crate::bivalued::{self, BiValuedInstance};
use crate::error::{Error, Result};
use crate::fairness;
use crate::model::{
    expected_utility, marginals, FractionalAllocation, Instance, IntegralAllocation, Lottery,
};
use crate::numeric::{rat, Rational};
use crate::{mech_n, mech_three, mech_two};

/// Every mechanism the harness can drive. The index-ties variant of the
/// three-agent rule and the integral welfare-maximizing baseline exist only
/// to demonstrate manipulability; the others are the real mechanisms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MechanismId {
    Two,
    Three,
    ThreeIndexTies,
    NEf,
    Prop1Mms,
    Bivalued { p: Rational, q: Rational },
    MnwBaseline,
}

impl MechanismId {
    pub fn parse(name: &str, p: Option<Rational>, q: Option<Rational>) -> Result<MechanismId> {
        match name {
            "two" => Ok(MechanismId::Two),
            "three" => Ok(MechanismId::Three),
            "three_index_ties" => Ok(MechanismId::ThreeIndexTies),
            "n_ef" => Ok(MechanismId::NEf),
            "prop1_mms" => Ok(MechanismId::Prop1Mms),
            "bivalued" => match (p, q) {
                (Some(p), Some(q)) => Ok(MechanismId::Bivalued { p, q }),
                _ => Err(Error::MalformedInput(
                    "the bivalued mechanism needs --p and --q levels".into(),
                )),
            },
            "mnw_baseline" => Ok(MechanismId::MnwBaseline),
            other => Err(Error::MalformedInput(format!("unknown mechanism {other:?}"))),
        }
    }
}

/// The fractional rule of a mechanism: everything truthfulness depends on.
pub fn fractional_rule(mech: &MechanismId, inst: &Instance) -> Result<FractionalAllocation> {
    match mech {
        MechanismId::Two => mech_two::fractional_rule(inst),
        MechanismId::Three => mech_three::fractional_rule(inst, mech_three::TieBreaking::Careful),
        MechanismId::ThreeIndexTies => {
            mech_three::fractional_rule(inst, mech_three::TieBreaking::IndexOrder)
        }
        MechanismId::NEf | MechanismId::Prop1Mms => mech_n::fractional_rule(inst),
        MechanismId::Bivalued { p, q } => {
            let bvi = BiValuedInstance::new(inst.clone(), p.clone(), q.clone())?;
            Ok(bivalued::rule(&bvi)?.0)
        }
        MechanismId::MnwBaseline => {
            let alloc = bivalued::mnw_integral_baseline(inst)?;
            Ok(FractionalAllocation::indicator(&alloc, inst.m))
        }
    }
}

/// Runs a mechanism end to end, producing its lottery.
pub fn run_mechanism(mech: &MechanismId, inst: &Instance) -> Result<Lottery> {
    match mech {
        MechanismId::Two => mech_two::run(inst),
        MechanismId::Three => mech_three::run(inst),
        MechanismId::ThreeIndexTies => Err(Error::MalformedInput(
            "the index-ties variant exposes only its fractional rule".into(),
        )),
        MechanismId::NEf => mech_n::ef_run(inst),
        MechanismId::Prop1Mms => mech_n::prop1_mms_run(inst),
        MechanismId::Bivalued { p, q } => {
            let bvi = BiValuedInstance::new(inst.clone(), p.clone(), q.clone())?;
            let (x, _) = bivalued::rule(&bvi)?;
            bivalued::decompose(&bvi, &x)
        }
        MechanismId::MnwBaseline => {
            let alloc = bivalued::mnw_integral_baseline(inst)?;
            Ok(Lottery::new(vec![(Rational::one(), alloc)]))
        }
    }
}

/// One audited property of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditLine {
    pub what: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    pub lines: Vec<AuditLine>,
}

/// Verifies a produced lottery against the mechanism's contract: the
/// fairness property of every support and the exact match between the
/// lottery's marginals and the fractional rule.
pub fn audit(mech: &MechanismId, inst: &Instance, lottery: &Lottery) -> Result<AuditReport> {
    let mut lines = Vec::new();
    let mut push = |what: &str, passed: bool| lines.push(AuditLine { what: what.into(), passed });

    let rule = fractional_rule(mech, inst)?;
    let margins = marginals(lottery)?;
    push("marginals equal the fractional rule exactly", margins == rule);

    let supports: Vec<IntegralAllocation> =
        lottery.entries.iter().map(|e| e.allocation()).collect();
    match mech {
        MechanismId::Two => {
            let ok = supports
                .iter()
                .map(|a| fairness::check_ef1(inst, a).map(|r| r.satisfied))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .all(|b| b);
            push("every support is envy-free up to one item", ok);
        }
        MechanismId::Three | MechanismId::ThreeIndexTies => {
            let ok = supports
                .iter()
                .map(|a| fairness::check_ef_uv(inst, a, 1, 1).map(|r| r.satisfied))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .all(|b| b);
            push("every support is envy-free up to one added and one removed item", ok);
            let thirds = margins.shares[2].iter().all(|v| *v == rat(1, 3));
            push("agent 3 holds exactly a third of every item", thirds);
        }
        MechanismId::NEf => {
            let u = (inst.n - 1) * (inst.n - 1);
            let v = inst.n - 1;
            let ok = supports
                .iter()
                .map(|a| fairness::check_ef_uv(inst, a, u, v).map(|r| r.satisfied))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .all(|b| b);
            push(
                &format!("every support is envy-free up to {u} added and {v} removed items"),
                ok,
            );
        }
        MechanismId::Prop1Mms => {
            let prop1 = supports
                .iter()
                .map(|a| fairness::check_prop1(inst, a).map(|r| r.satisfied))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .all(|b| b);
            push("every support is proportional up to one item", prop1);
            let alpha = Rational::one() / Rational::from_int(inst.n as i64);
            match supports
                .iter()
                .map(|a| fairness::check_alpha_mms(inst, a, &alpha).map(|r| r.satisfied))
                .collect::<Result<Vec<bool>>>()
            {
                Ok(flags) => push(
                    "every support reaches a 1/n fraction of the maximin share",
                    flags.into_iter().all(|b| b),
                ),
                Err(Error::TooLarge(_)) => {
                    push("maximin-share audit skipped (instance beyond exact solver scale)", true)
                }
                Err(e) => return Err(e),
            }
        }
        MechanismId::Bivalued { .. } | MechanismId::MnwBaseline => {
            let ok = supports
                .iter()
                .map(|a| fairness::check_ef1(inst, a).map(|r| r.satisfied))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .all(|b| b);
            push("every support is envy-free up to one item", ok);
        }
    }
    let passed = lines.iter().all(|l| l.passed);
    Ok(AuditReport { passed, lines })
}

/// Finite families of alternative reports for one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MisreportFamily {
    /// All distinct permutations of the agent's true row.
    ValuePermutations,
    /// The true row with every single pair of entries swapped.
    PairwiseSwaps,
    /// Every high/low pattern over the given two levels.
    LevelPatterns { p: Rational, q: Rational },
    /// The true row scaled by each factor.
    ScalarRescalings { factors: Vec<Rational> },
    /// An explicit list of rows.
    Explicit(Vec<Vec<Rational>>),
}

impl MisreportFamily {
    /// Generates the reports, capped by `budget`; the flag says whether the
    /// cap truncated the family.
    pub fn generate(&self, true_row: &[Rational], budget: u64) -> (Vec<Vec<Rational>>, bool) {
        let m = true_row.len();
        match self {
            MisreportFamily::ValuePermutations => {
                let mut row: Vec<Rational> = true_row.to_vec();
                row.sort();
                let mut out = vec![row.clone()];
                while next_permutation(&mut row) {
                    if out.len() as u64 >= budget {
                        return (out, true);
                    }
                    out.push(row.clone());
                }
                (out, false)
            }
            MisreportFamily::PairwiseSwaps => {
                let mut out = Vec::new();
                for i in 0..m {
                    for j in i + 1..m {
                        if out.len() as u64 >= budget {
                            return (out, true);
                        }
                        let mut row = true_row.to_vec();
                        row.swap(i, j);
                        out.push(row);
                    }
                }
                (out, false)
            }
            MisreportFamily::LevelPatterns { p, q } => {
                if m >= 63 || (1u64 << m) > budget {
                    // enumerate what fits
                    let cap = budget.min(if m >= 63 { u64::MAX } else { 1 << m });
                    let out = (0..cap).map(|mask| level_row(mask, m, p, q)).collect();
                    return (out, true);
                }
                let out = (0..(1u64 << m)).map(|mask| level_row(mask, m, p, q)).collect();
                (out, false)
            }
            MisreportFamily::ScalarRescalings { factors } => {
                let out = factors
                    .iter()
                    .filter(|f| f.is_positive())
                    .take(budget as usize)
                    .map(|f| true_row.iter().map(|v| v * f).collect())
                    .collect();
                (out, false)
            }
            MisreportFamily::Explicit(rows) => {
                let truncated = rows.len() as u64 > budget;
                (rows.iter().take(budget as usize).cloned().collect(), truncated)
            }
        }
    }
}

fn level_row(mask: u64, m: usize, p: &Rational, q: &Rational) -> Vec<Rational> {
    (0..m).map(|g| if mask >> g & 1 == 1 { p.clone() } else { q.clone() }).collect()
}

/// Lexicographic successor in place; false once the row is the last one.
fn next_permutation(row: &mut [Rational]) -> bool {
    if row.len() < 2 {
        return false;
    }
    let mut i = row.len() - 1;
    while i > 0 && row[i - 1] >= row[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = row.len() - 1;
    while row[j] <= row[i - 1] {
        j -= 1;
    }
    row.swap(i - 1, j);
    row[i..].reverse();
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentGain {
    pub agent: usize,
    /// Largest exact expected-utility gain over the family (may be <= 0).
    pub max_gain: Rational,
    /// A report achieving a strictly positive gain, when one exists.
    pub witness: Option<Vec<Rational>>,
    /// Reports the mechanism refused (outside its report space).
    pub rejected: usize,
}

/// Exact truthfulness evaluation over a finite report family. A zero gain
/// means "no counterexample found in this family", never a proof.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthfulnessReport {
    pub agents: Vec<AgentGain>,
    pub family_truncated: bool,
}

impl TruthfulnessReport {
    pub fn max_gain(&self) -> Rational {
        self.agents.iter().map(|a| a.max_gain.clone()).max().unwrap_or_else(Rational::zero)
    }
}

/// Evaluates every report in the family for every agent, comparing expected
/// true utility under the mechanism's fractional rule with truth-telling.
pub fn test_truthfulness(
    mech: &MechanismId,
    inst: &Instance,
    family: &MisreportFamily,
) -> Result<TruthfulnessReport> {
    let budget = crate::enumeration_budget();
    let truthful = fractional_rule(mech, inst)?;
    let mut agents = Vec::new();
    let mut truncated = false;
    for agent in 0..inst.n {
        let base = expected_utility(&inst.values[agent], &truthful.shares[agent])?;
        let (reports, cut) = family.generate(&inst.values[agent], budget);
        truncated |= cut;
        let mut max_gain: Option<Rational> = None;
        let mut witness = None;
        let mut rejected = 0usize;
        for report in reports {
            if report.iter().any(Rational::is_negative) {
                rejected += 1;
                continue;
            }
            let mut reported = inst.clone();
            reported.values[agent] = report.clone();
            let outcome = match fractional_rule(mech, &reported) {
                Ok(x) => x,
                Err(Error::MalformedInput(_)) => {
                    rejected += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let utility = expected_utility(&inst.values[agent], &outcome.shares[agent])?;
            let gain = &utility - &base;
            if max_gain.as_ref().is_none_or(|mg| gain > *mg) {
                if gain.is_positive() {
                    witness = Some(report);
                }
                max_gain = Some(gain);
            }
        }
        agents.push(AgentGain {
            agent,
            max_gain: max_gain.unwrap_or_else(Rational::zero),
            witness,
            rejected,
        });
    }
    Ok(TruthfulnessReport { agents, family_truncated: truncated })
}

/// The named benchmark instances.
pub fn instance_library() -> Vec<(String, Instance)> {
    let mut out = vec![
        ("THM6".to_string(), not_ef1_realizable_instance()),
        ("MNW_BIVALUED".to_string(), mnw_bivalued_instance()),
        ("APPENDIX_C".to_string(), tie_subtlety_instance()),
        ("APPENDIX_A".to_string(), picking_exchange_instance()),
    ];
    for (idx, inst) in tri_valued_chain(0, 1).into_iter().enumerate() {
        out.push((format!("THM9_CHAIN_{}", idx + 1), inst));
    }
    out
}

pub fn lookup_instance(name: &str) -> Option<Instance> {
    instance_library().into_iter().find(|(n, _)| n == name).map(|(_, inst)| inst)
}

/// Three agents, four items: equal division is not realizable as a mixture
/// of allocations that are envy-free up to one item.
pub fn not_ef1_realizable_instance() -> Instance {
    Instance::from_ints(&[vec![2, 1, 4, 4], vec![1, 2, 4, 4], vec![4, 4, 2, 1]]).unwrap()
}

/// Two agents, six items, levels 2 and 1: the integral welfare-maximizing
/// baseline is manipulable here while the bi-valued rule is not.
pub fn mnw_bivalued_instance() -> Instance {
    Instance::from_ints(&[vec![2, 2, 1, 1, 1, 1], vec![1, 1, 1, 1, 1, 1]]).unwrap()
}

/// Three items with top-value ties: agent 1 ties items 1 and 2, agent 2
/// ties items 2 and 3. Index-order tie-breaking is manipulable here.
pub fn tie_subtlety_instance() -> Instance {
    Instance::from_ints(&[vec![2, 2, 1], vec![1, 2, 2], vec![1, 1, 1]]).unwrap()
}

/// Two-agent instance over the four blocks of a picking-exchange split
/// (three picking items per side, two exchange items per side), with the
/// scale separation 1 >> 1/10 >> 1/1000 >> 1/100000.
pub fn picking_exchange_instance() -> Instance {
    let one = Rational::one();
    let eps = rat(1, 10);
    let delta = rat(1, 1000);
    let mu = rat(1, 100_000);
    let v1 = vec![
        &one + &eps,
        one.clone(),
        one.clone(),
        one.clone(),
        delta.clone(),
        delta.clone(),
        mu.clone(),
        mu.clone(),
        mu.clone(),
        mu.clone(),
    ];
    let v2 = vec![
        one.clone(),
        delta.clone(),
        delta.clone(),
        &one + &eps,
        one.clone(),
        one.clone(),
        mu.clone(),
        mu.clone(),
        mu.clone(),
        mu,
    ];
    Instance::new(vec![v1, v2]).unwrap()
}

/// The five two-agent tri-valued instances (levels 1, 1/50, 0) over halves
/// of an item set of size 200(u+v); together they pin down any claimed
/// efficient truthful mechanism step by step.
pub fn tri_valued_chain(u: usize, v: usize) -> Vec<Instance> {
    let m = 200 * (u + v).max(1);
    let half = m / 2;
    let hi = Rational::one();
    let mid = rat(1, 50);
    let lo = Rational::zero();
    let row = |first: &Rational, second: &Rational| -> Vec<Rational> {
        (0..m).map(|g| if g < half { first.clone() } else { second.clone() }).collect()
    };
    vec![
        Instance::new(vec![row(&hi, &lo), row(&hi, &lo)]).unwrap(),
        Instance::new(vec![row(&hi, &mid), row(&hi, &lo)]).unwrap(),
        Instance::new(vec![row(&mid, &hi), row(&hi, &lo)]).unwrap(),
        Instance::new(vec![row(&lo, &hi), row(&hi, &mid)]).unwrap(),
        Instance::new(vec![row(&mid, &hi), row(&hi, &mid)]).unwrap(),
    ]
}
