//! Mechanisms for any number of agents, both built on the equal division
//! rule (hence truthful): a consensus-partition mechanism whose supports
//! keep envy within (n-1)^2 added and n-1 removed items, and a
//! group-matching mechanism whose supports are proportional up to one item
//! and worth at least a 1/n fraction of each agent's maximin share.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graphs::{edge_coloring, BipartiteMultigraph};
use crate::model::{
    pad_to_multiple, strip, FractionalAllocation, Instance, IntegralAllocation, Lottery,
};
use crate::numeric::{solve_vertex, LinearSystem, LpStatus, Rational};

fn require_multiple_agents(inst: &Instance) -> Result<()> {
    if inst.n < 2 {
        return Err(Error::MalformedInput(format!(
            "general-n mechanisms need n >= 2, got {}",
            inst.n
        )));
    }
    inst.validate()
}

/// A fractional partition where every agent values every part at exactly
/// `v_i(M)/n`, with at most `n(n-1)` fractionally split items. Built by
/// `n-1` successive LP vertex solves, each introducing at most `n` new
/// fractional items; the last part is the remainder.
pub fn consensus_partition(inst: &Instance) -> Result<Vec<Vec<Rational>>> {
    require_multiple_agents(inst)?;
    let n = inst.n;
    let m = inst.m;
    let n_rat = Rational::from_int(n as i64);
    let mut remaining = vec![Rational::one(); m];
    let mut parts: Vec<Vec<Rational>> = Vec::with_capacity(n);
    for _ in 0..n - 1 {
        let mut sys = LinearSystem::new(m);
        sys.upper = remaining.iter().map(|a| Some(a.clone())).collect();
        for agent in 0..n {
            sys.add_equality(
                inst.values[agent].clone(),
                inst.total_value(agent) / &n_rat,
            );
        }
        let out = solve_vertex(&sys)?;
        if out.status == LpStatus::Infeasible {
            return Err(Error::InternalInvariant(
                "even split of the remainder is always feasible".into(),
            ));
        }
        let part = out.vertex().to_vec();
        for (rem, x) in remaining.iter_mut().zip(&part) {
            *rem -= x;
        }
        parts.push(part);
    }
    parts.push(remaining);
    Ok(parts)
}

/// Items split across parts (no part holds a full unit of them).
pub fn fractional_items(parts: &[Vec<Rational>]) -> Vec<usize> {
    let m = parts.first().map_or(0, Vec::len);
    let one = Rational::one();
    (0..m)
        .filter(|&g| !parts.iter().any(|p| p[g] == one))
        .collect()
}

/// The integral bundles behind the consensus mechanism: each part keeps its
/// whole items and the split items are dealt round-robin, at most `n-1` per
/// bundle.
pub fn consensus_bundles(inst: &Instance, parts: &[Vec<Rational>]) -> Vec<BTreeSet<usize>> {
    let n = inst.n;
    let one = Rational::one();
    let split = fractional_items(parts);
    let mut bundles: Vec<BTreeSet<usize>> = parts
        .iter()
        .map(|p| {
            (0..inst.m)
                .filter(|&g| p[g] == one)
                .collect()
        })
        .collect();
    for (idx, &g) in split.iter().enumerate() {
        bundles[idx % n].insert(g);
    }
    bundles
}

const EXPLICIT_LOTTERY_MAX_AGENTS: usize = 5;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for shorter in permutations(n - 1) {
        for at in 0..n {
            let mut perm = shorter.clone();
            perm.insert(at, n - 1);
            out.push(perm);
        }
    }
    out.sort();
    out
}

/// The consensus-partition mechanism: a uniform lottery over all `n!`
/// assignments of the bundles to the agents. Marginals are exactly `1/n`
/// everywhere, and every support keeps envy within `(n-1)^2` added and
/// `n-1` removed items. Explicit lotteries are limited to `n <= 5`; larger
/// instances should sample instead.
pub fn ef_run(inst: &Instance) -> Result<Lottery> {
    require_multiple_agents(inst)?;
    if inst.n > EXPLICIT_LOTTERY_MAX_AGENTS {
        return Err(Error::TooLarge(format!(
            "explicit n! lottery capped at n = {EXPLICIT_LOTTERY_MAX_AGENTS}; use sampling"
        )));
    }
    let parts = consensus_partition(inst)?;
    let bundles = consensus_bundles(inst, &parts);
    let perms = permutations(inst.n);
    let p = Rational::one() / Rational::from_int(perms.len() as i64);
    let entries: Vec<(Rational, IntegralAllocation)> = perms
        .iter()
        .map(|perm| {
            let alloc = IntegralAllocation {
                bundles: (0..inst.n).map(|agent| bundles[perm[agent]].clone()).collect(),
            };
            (p.clone(), alloc)
        })
        .collect();
    let lottery = Lottery::new(entries);
    lottery.validate()?;
    Ok(lottery)
}

/// One draw from the consensus mechanism without materializing `n!`
/// entries; the permutation comes from the supplied generator.
pub fn ef_sample<R: rand::Rng>(inst: &Instance, rng: &mut R) -> Result<IntegralAllocation> {
    require_multiple_agents(inst)?;
    let parts = consensus_partition(inst)?;
    let bundles = consensus_bundles(inst, &parts);
    let mut order: Vec<usize> = (0..inst.n).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    Ok(IntegralAllocation {
        bundles: (0..inst.n).map(|agent| bundles[order[agent]].clone()).collect(),
    })
}

/// The group-matching mechanism: per-agent descending groups of `n` items
/// feed an n-regular bipartite graph whose n perfect matchings are the
/// support; each is proportional up to one item and `1/n`-maximin-share.
/// Marginals are exactly `1/n` everywhere.
pub fn prop1_mms_run(inst: &Instance) -> Result<Lottery> {
    require_multiple_agents(inst)?;
    let (padded, pad) = pad_to_multiple(inst, inst.n);
    let n = inst.n;
    let m = padded.m;
    if m == 0 {
        let p = Rational::one() / Rational::from_int(n as i64);
        let entries = (0..n).map(|_| (p.clone(), IntegralAllocation::empty(n))).collect();
        return Ok(Lottery::new(entries));
    }

    // Left vertices: group slot `agent * (m/n) + j`; right vertices: items.
    let per_agent = m / n;
    let mut edges = Vec::with_capacity(n * m / n * n);
    for agent in 0..n {
        let groups = crate::mech_two::descending_groups(&padded.values[agent], n);
        for (j, group) in groups.iter().enumerate() {
            for &item in group {
                edges.push((agent * per_agent + j, item));
            }
        }
    }
    let graph = BipartiteMultigraph::new(m, m, edges.clone())?;
    let matchings = edge_coloring(&graph, n)?;

    let p = Rational::one() / Rational::from_int(n as i64);
    let entries: Vec<(Rational, IntegralAllocation)> = matchings
        .iter()
        .map(|matching| {
            let mut alloc = IntegralAllocation::empty(n);
            for &edge in matching {
                let (slot, item) = edges[edge];
                alloc.bundles[slot / per_agent].insert(item);
            }
            (p.clone(), strip(&alloc, &pad))
        })
        .collect();
    let lottery = Lottery::new(entries);
    lottery.validate()?;
    Ok(lottery)
}

/// Equal division: the fractional rule behind both mechanisms.
pub fn fractional_rule(inst: &Instance) -> Result<FractionalAllocation> {
    require_multiple_agents(inst)?;
    Ok(FractionalAllocation::equal_division(inst.n, inst.m))
}
