//! Truthful, envy-free-up-to-one-item, ex-ante Pareto-optimal division rule
//! for bi-valued valuations (every value is `p` or `q` with `p > q >= 0`).
//!
//! The rule runs in three phases: an iterative min-ratio group procedure
//! computing the binarized maximum-Nash-welfare shares, a truncation of
//! oversized bundles to the common length `m/n`, and a uniform fill of the
//! remainder. Pareto optimality is certified through an explicit market
//! equilibrium, and the output decomposes into a lottery of allocations
//! that are envy-free up to one item.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::check_ef1;
use crate::model::{FractionalAllocation, Instance, IntegralAllocation, Lottery};
use crate::numeric::{solve_vertex, LinearSystem, LpStatus, Rational};
use crate::realize;

/// An instance together with its two value levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiValuedInstance {
    pub inst: Instance,
    pub p: Rational,
    pub q: Rational,
}

impl BiValuedInstance {
    pub fn new(inst: Instance, p: Rational, q: Rational) -> Result<Self> {
        inst.validate()?;
        if p <= q || q.is_negative() {
            return Err(Error::MalformedInput(format!("levels need p > q >= 0, got p={p}, q={q}")));
        }
        for row in &inst.values {
            for v in row {
                if *v != p && *v != q {
                    return Err(Error::MalformedInput(format!(
                        "value {v} is neither p={p} nor q={q}"
                    )));
                }
            }
        }
        Ok(BiValuedInstance { inst, p, q })
    }

    /// Infers the two levels from the instance. A constant-valued instance
    /// is treated as all-`q` with a synthetic `p` one above it.
    pub fn infer(inst: Instance) -> Result<Self> {
        let mut levels: BTreeSet<Rational> = inst.values.iter().flatten().cloned().collect();
        match levels.len() {
            0 => BiValuedInstance::new(inst, Rational::one(), Rational::zero()),
            1 => {
                let q = levels.pop_first().unwrap();
                let p = &q + &Rational::one();
                BiValuedInstance::new(inst, p, q)
            }
            2 => {
                let q = levels.pop_first().unwrap();
                let p = levels.pop_first().unwrap();
                BiValuedInstance::new(inst, p, q)
            }
            k => Err(Error::MalformedInput(format!("instance carries {k} value levels, not 2"))),
        }
    }

    pub fn is_high(&self, agent: usize, item: usize) -> bool {
        self.inst.values[agent][item] == self.p
    }
}

/// One iteration of the min-ratio procedure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStep {
    pub agents: Vec<usize>,
    pub items: Vec<usize>,
    pub ratio: Rational,
}

/// Full record of the three phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub steps: Vec<PhaseStep>,
    /// Shares after phase one (only high-valued items, lengths = ratios).
    pub phase1_shares: Vec<Vec<Rational>>,
    /// Shares after truncation to the common length.
    pub truncated_shares: Vec<Vec<Rational>>,
    /// Agents whose phase-one bundles were truncated.
    pub truncated_agents: Vec<usize>,
    /// Fill coefficients, one per agent; zero when nothing was unallocated.
    pub alphas: Vec<Rational>,
    /// Total unallocated length after truncation.
    pub unallocated: Rational,
}

const PHASE1_MAX_AGENTS: usize = 12;

/// Phase one: iteratively pick the agent group minimizing the ratio of
/// jointly-high-valued unallocated items to group size (ties: smaller ratio,
/// then smaller group, then lexicographic), and spread those items inside
/// the group so each member receives exactly the ratio in length, only over
/// items she values high. Group minimization is exhaustive over subsets.
pub fn phase1_mnw_binary(bvi: &BiValuedInstance) -> Result<PhaseTrace> {
    let n = bvi.inst.n;
    let m = bvi.inst.m;
    if n > PHASE1_MAX_AGENTS {
        return Err(Error::TooLarge(format!(
            "subset minimization handles n <= {PHASE1_MAX_AGENTS}, got {n}"
        )));
    }
    let mut unallocated: BTreeSet<usize> = (0..m).collect();
    let mut served = vec![false; n];
    let mut shares = vec![vec![Rational::zero(); m]; n];
    let mut steps = Vec::new();

    loop {
        let hungry: Vec<usize> = (0..n)
            .filter(|&i| !served[i] && unallocated.iter().any(|&g| bvi.is_high(i, g)))
            .collect();
        if hungry.is_empty() {
            break;
        }
        let pool = |mask: u32| -> Vec<usize> {
            unallocated
                .iter()
                .copied()
                .filter(|&g| {
                    hungry
                        .iter()
                        .enumerate()
                        .any(|(b, &i)| mask >> b & 1 == 1 && bvi.is_high(i, g))
                })
                .collect()
        };
        let mut best: Option<(Rational, usize, u32)> = None; // (ratio, |S|, mask)
        for mask in 1u32..(1 << hungry.len()) {
            let size = mask.count_ones() as usize;
            let ratio =
                Rational::from_int(pool(mask).len() as i64) / Rational::from_int(size as i64);
            let better = match &best {
                None => true,
                Some((r, s, m0)) => {
                    ratio < *r || (ratio == *r && (size < *s || (size == *s && mask < *m0)))
                }
            };
            if better {
                best = Some((ratio, size, mask));
            }
        }
        let (ratio, _, mask) = best.expect("some nonempty group exists");
        let group: Vec<usize> = hungry
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &i)| i)
            .collect();
        let items = pool(mask);

        spread_within_group(bvi, &group, &items, &ratio, &mut shares)?;
        for &i in &group {
            served[i] = true;
        }
        for &g in &items {
            unallocated.remove(&g);
        }
        steps.push(PhaseStep { agents: group, items, ratio });
    }

    Ok(PhaseTrace {
        steps,
        phase1_shares: shares,
        truncated_shares: Vec::new(),
        truncated_agents: Vec::new(),
        alphas: Vec::new(),
        unallocated: Rational::zero(),
    })
}

/// Exact transportation split: each group member receives `ratio` in length
/// over items she values high; each pool item is fully consumed. Feasible by
/// the minimality of the chosen group.
fn spread_within_group(
    bvi: &BiValuedInstance,
    group: &[usize],
    items: &[usize],
    ratio: &Rational,
    shares: &mut [Vec<Rational>],
) -> Result<()> {
    let arcs: Vec<(usize, usize)> = group
        .iter()
        .flat_map(|&i| items.iter().filter(move |&&g| bvi.is_high(i, g)).map(move |&g| (i, g)))
        .collect();
    let mut sys = LinearSystem::new(arcs.len());
    for &i in group {
        let row: Vec<Rational> = arcs
            .iter()
            .map(|&(ai, _)| if ai == i { Rational::one() } else { Rational::zero() })
            .collect();
        sys.add_equality(row, ratio.clone());
    }
    for &g in items {
        let row: Vec<Rational> = arcs
            .iter()
            .map(|&(_, ag)| if ag == g { Rational::one() } else { Rational::zero() })
            .collect();
        sys.add_equality(row, Rational::one());
    }
    let out = solve_vertex(&sys)?;
    if out.status == LpStatus::Infeasible {
        return Err(Error::InternalInvariant(
            "group split infeasible despite ratio minimality".into(),
        ));
    }
    for (flow, &(i, g)) in out.vertex().iter().zip(&arcs) {
        shares[i][g] = &shares[i][g] + flow;
    }
    Ok(())
}

/// Phases two and three: truncate bundles above the common length `m/n`
/// (dropping fractions from the highest item index down) and spread the
/// unallocated remainder so every agent ends at exactly that length.
pub fn truncate_and_fill(
    bvi: &BiValuedInstance,
    trace: &mut PhaseTrace,
) -> Result<FractionalAllocation> {
    let n = bvi.inst.n;
    let m = bvi.inst.m;
    let length = Rational::from_int(m as i64) / Rational::from_int(n as i64);
    let mut truncated = trace.phase1_shares.clone();
    let mut truncated_agents = Vec::new();
    for i in 0..n {
        let mut excess = truncated[i].iter().sum::<Rational>() - length.clone();
        if !excess.is_positive() {
            continue;
        }
        truncated_agents.push(i);
        for g in (0..m).rev() {
            if !excess.is_positive() {
                break;
            }
            let cut = truncated[i][g].clone().min(excess.clone());
            truncated[i][g] = &truncated[i][g] - &cut;
            excess -= cut;
        }
    }
    let allocated: Rational = truncated.iter().flatten().sum();
    let unallocated = Rational::from_int(m as i64) - allocated;
    let alphas: Vec<Rational> = (0..n)
        .map(|i| {
            if unallocated.is_zero() {
                Rational::zero()
            } else {
                (&length - &truncated[i].iter().sum::<Rational>()) / &unallocated
            }
        })
        .collect();

    let mut shares = truncated.clone();
    if !unallocated.is_zero() {
        for g in 0..m {
            let column: Rational = truncated.iter().map(|row| row[g].clone()).sum();
            let leftover = Rational::one() - column;
            if leftover.is_zero() {
                continue;
            }
            for i in 0..n {
                shares[i][g] = &shares[i][g] + &(&alphas[i] * &leftover);
            }
        }
    }

    trace.truncated_shares = truncated;
    trace.truncated_agents = truncated_agents;
    trace.alphas = alphas;
    trace.unallocated = unallocated;

    let x = FractionalAllocation { shares };
    if m > 0 {
        x.validate()?;
        for row in &x.shares {
            if row.iter().sum::<Rational>() != length {
                return Err(Error::InternalInvariant("row length drifted from m/n".into()));
            }
        }
    }
    Ok(x)
}

/// The full division rule.
pub fn rule(bvi: &BiValuedInstance) -> Result<(FractionalAllocation, PhaseTrace)> {
    let mut trace = phase1_mnw_binary(bvi)?;
    let x = truncate_and_fill(bvi, &mut trace)?;
    Ok((x, trace))
}

/// A Fisher-market equilibrium certifying ex-ante Pareto optimality of the
/// rule's output (first welfare theorem): item prices at the two levels,
/// budgets exactly spent, and all purchases at each agent's best
/// value-per-price ratio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketCertificate {
    pub prices: Vec<Rational>,
    pub budgets: Vec<Rational>,
    pub bang_per_buck: Vec<Rational>,
}

/// Builds and exactly verifies the equilibrium for a rule output. Fails
/// with an internal-invariant error if any condition is violated (that
/// signals a bug, not a bad input). Requires `q > 0` so all prices are
/// positive.
pub fn market_certificate(
    bvi: &BiValuedInstance,
    trace: &PhaseTrace,
    x: &FractionalAllocation,
) -> Result<MarketCertificate> {
    if !bvi.q.is_positive() {
        return Err(Error::MalformedInput(
            "market certificate needs q > 0; at q = 0 some items would be free".into(),
        ));
    }
    let n = bvi.inst.n;
    let m = bvi.inst.m;
    let length = Rational::from_int(m as i64) / Rational::from_int(n as i64);
    let in_z = |i: usize| trace.truncated_agents.contains(&i);

    let prices: Vec<Rational> = (0..m)
        .map(|g| {
            let touched_by_kept = (0..n).any(|i| !in_z(i) && trace.phase1_shares[i][g].is_positive());
            if touched_by_kept {
                bvi.p.clone()
            } else {
                bvi.q.clone()
            }
        })
        .collect();
    let budgets: Vec<Rational> = (0..n)
        .map(|i| {
            if in_z(i) {
                &bvi.q * &length
            } else {
                let held: Rational = trace.phase1_shares[i].iter().sum();
                &bvi.p * &held + &bvi.q * &(&length - &held)
            }
        })
        .collect();
    let bang_per_buck: Vec<Rational> = (0..n)
        .map(|i| {
            (0..m)
                .map(|g| &bvi.inst.values[i][g] / &prices[g])
                .max()
                .unwrap_or_else(Rational::one)
        })
        .collect();

    // Condition 1: positively priced items fully allocated.
    for g in 0..m {
        let sold: Rational = x.shares.iter().map(|row| row[g].clone()).sum();
        if sold != Rational::one() {
            return Err(Error::InternalInvariant(format!("item {g} not fully sold")));
        }
    }
    // Condition 2: budgets exactly spent.
    for i in 0..n {
        let spent: Rational = (0..m).map(|g| &prices[g] * &x.shares[i][g]).sum();
        if spent != budgets[i] {
            return Err(Error::InternalInvariant(format!(
                "agent {i} spends {spent}, budget is {}",
                budgets[i]
            )));
        }
    }
    // Condition 3: purchases only at the best value-per-price ratio.
    for i in 0..n {
        for g in 0..m {
            if x.shares[i][g].is_positive()
                && &bvi.inst.values[i][g] / &prices[g] != bang_per_buck[i]
            {
                return Err(Error::InternalInvariant(format!(
                    "agent {i} buys item {g} below her best ratio"
                )));
            }
        }
    }
    Ok(MarketCertificate { prices, budgets, bang_per_buck })
}

/// Decomposes a rule output into a lottery over allocations that are all
/// envy-free up to one item. Feasibility is guaranteed for rule outputs;
/// a refutation therefore signals a bug.
pub fn decompose(bvi: &BiValuedInstance, x: &FractionalAllocation) -> Result<Lottery> {
    let support = realize::enumerate_allocations(&bvi.inst, |alloc| {
        check_ef1(&bvi.inst, alloc).map(|r| r.satisfied).unwrap_or(false)
    })?;
    match realize::decompose_or_refute(x, &support)? {
        realize::Realization::Lottery(lottery) => Ok(lottery),
        realize::Realization::Refuted(_) => Err(Error::InternalInvariant(
            "rule output must mix over envy-free-up-to-one-item allocations".into(),
        )),
    }
}

/// Brute-force integral maximum-Nash-welfare baseline (kept only to exhibit
/// its manipulability). Ties break leximax on the ascending utility vector,
/// then by enumeration order.
pub fn mnw_integral_baseline(inst: &Instance) -> Result<IntegralAllocation> {
    inst.validate()?;
    let all = realize::enumerate_allocations(inst, |_| true)?;
    let mut best: Option<(Rational, Vec<Rational>, IntegralAllocation)> = None;
    for alloc in all {
        let mut utilities: Vec<Rational> =
            (0..inst.n).map(|i| inst.bundle_value(i, &alloc.bundles[i])).collect();
        let product = utilities.iter().fold(Rational::one(), |acc, u| acc * u);
        utilities.sort();
        let better = match &best {
            None => true,
            Some((bp, bu, _)) => product > *bp || (product == *bp && utilities > *bu),
        };
        if better {
            best = Some((product, utilities, alloc));
        }
    }
    Ok(best.expect("at least one allocation exists").2)
}
