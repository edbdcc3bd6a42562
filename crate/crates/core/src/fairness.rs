//! Exact verifiers for the fairness and efficiency predicates used by the
//! mechanisms: envy-freeness up to adding/removing items, proportionality up
//! to one item, maximin share, Pareto optimality (integral and fractional),
//! and the one-item-per-group regularity property.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FractionalAllocation, Instance, IntegralAllocation};
use crate::numeric::{linalg, solve_vertex, LinearSystem, Rational};

/// Outcome of one ordered bundle-to-bundle comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationReport {
    pub satisfied: bool,
    /// Items added to the envier's side (at most `u`, disjoint from it).
    pub witness_add: Vec<usize>,
    /// Items removed from the envied bundle (at most `v`).
    pub witness_remove: Vec<usize>,
    /// How far the inequality fails; zero when satisfied.
    pub deficit: Rational,
}

/// Greedy witnesses are exact under additive valuations: the `u` most
/// valuable items outside `from` maximize the left side and the `v` most
/// valuable items of `to` minimize the right side, independently. Ties break
/// toward the lowest item index.
pub fn ef_relation(
    values: &[Rational],
    universe: &BTreeSet<usize>,
    from: &BTreeSet<usize>,
    to: &BTreeSet<usize>,
    u: usize,
    v: usize,
) -> RelationReport {
    let top = |pool: Vec<usize>, take: usize| -> Vec<usize> {
        let mut pool = pool;
        pool.sort_by(|&a, &b| values[b].cmp(&values[a]).then(a.cmp(&b)));
        pool.truncate(take);
        pool
    };
    let witness_add = top(universe.iter().copied().filter(|g| !from.contains(g)).collect(), u);
    let witness_remove = top(to.iter().copied().collect(), v);

    let mut lhs: Rational = from.iter().map(|&g| values[g].clone()).sum();
    lhs += witness_add.iter().map(|&g| values[g].clone()).sum::<Rational>();
    let mut rhs: Rational = to.iter().map(|&g| values[g].clone()).sum();
    rhs -= witness_remove.iter().map(|&g| values[g].clone()).sum::<Rational>();

    let satisfied = lhs >= rhs;
    RelationReport {
        satisfied,
        witness_add,
        witness_remove,
        deficit: if satisfied { Rational::zero() } else { rhs - lhs },
    }
}

/// One ordered agent pair inside an envy report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairReport {
    pub envier: usize,
    pub envied: usize,
    #[serde(flatten)]
    pub relation: RelationReport,
}

/// Envy report for a whole allocation at a given `(u, v)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvyReport {
    pub u: usize,
    pub v: usize,
    pub satisfied: bool,
    pub pairs: Vec<PairReport>,
}

impl EnvyReport {
    pub fn failing_pairs(&self) -> impl Iterator<Item = &PairReport> {
        self.pairs.iter().filter(|p| !p.relation.satisfied)
    }
}

/// Checks the allocation is envy-free up to adding `u` items to the envier
/// and removing `v` items from the envied bundle, for every ordered pair.
pub fn check_ef_uv(
    inst: &Instance,
    alloc: &IntegralAllocation,
    u: usize,
    v: usize,
) -> Result<EnvyReport> {
    if alloc.n() != inst.n || !alloc.is_partition_of(inst.m) {
        return Err(Error::MalformedInput(
            "allocation is not a partition of the instance's items".into(),
        ));
    }
    let universe: BTreeSet<usize> = (0..inst.m).collect();
    let mut pairs = Vec::new();
    for i in 0..inst.n {
        for j in 0..inst.n {
            if i == j {
                continue;
            }
            let relation = ef_relation(
                &inst.values[i],
                &universe,
                &alloc.bundles[i],
                &alloc.bundles[j],
                u,
                v,
            );
            pairs.push(PairReport { envier: i, envied: j, relation });
        }
    }
    let satisfied = pairs.iter().all(|p| p.relation.satisfied);
    Ok(EnvyReport { u, v, satisfied, pairs })
}

/// Envy-freeness up to one removed item.
pub fn check_ef1(inst: &Instance, alloc: &IntegralAllocation) -> Result<EnvyReport> {
    check_ef_uv(inst, alloc, 0, 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub satisfied: bool,
    /// Per agent: (satisfied, witness item added if one was needed).
    pub agents: Vec<(bool, Option<usize>)>,
}

/// Proportionality up to one item: each agent reaches `v_i(M)/n` after
/// adding her best outside item (no addition needed when already there).
pub fn check_prop1(inst: &Instance, alloc: &IntegralAllocation) -> Result<Prop1Report> {
    if alloc.n() != inst.n || !alloc.is_partition_of(inst.m) {
        return Err(Error::MalformedInput(
            "allocation is not a partition of the instance's items".into(),
        ));
    }
    let n = Rational::from_int(inst.n as i64);
    let mut agents = Vec::new();
    for i in 0..inst.n {
        let own = inst.bundle_value(i, &alloc.bundles[i]);
        let threshold = inst.total_value(i) / &n;
        if own >= threshold {
            agents.push((true, None));
            continue;
        }
        let best_outside = (0..inst.m)
            .filter(|g| !alloc.bundles[i].contains(g))
            .max_by(|&a, &b| inst.values[i][a].cmp(&inst.values[i][b]).then(b.cmp(&a)));
        match best_outside {
            Some(g) if &own + &inst.values[i][g] >= threshold => agents.push((true, Some(g))),
            _ => agents.push((false, best_outside)),
        }
    }
    let satisfied = agents.iter().all(|(ok, _)| *ok);
    Ok(Prop1Report { satisfied, agents })
}

const MMS_MAX_AGENTS: usize = 5;
const MMS_MAX_ITEMS: usize = 14;

/// Exact maximin share of an agent: the best achievable minimum bundle value
/// over all n-partitions. Solved by binary search over subset sums with a
/// backtracking cover test; desk scale only.
pub fn mms_value(inst: &Instance, agent: usize) -> Result<Rational> {
    if agent >= inst.n {
        return Err(Error::DimensionMismatch(format!("agent {agent} of {}", inst.n)));
    }
    if inst.n > MMS_MAX_AGENTS || inst.m > MMS_MAX_ITEMS {
        return Err(Error::TooLarge(format!(
            "maximin share solver handles n <= {MMS_MAX_AGENTS}, m <= {MMS_MAX_ITEMS}; got n = {}, m = {}",
            inst.n, inst.m
        )));
    }
    let values = &inst.values[agent];
    if inst.n == 1 {
        return Ok(inst.total_value(agent));
    }
    if inst.m < inst.n {
        return Ok(Rational::zero());
    }

    // Candidate thresholds: subset sums not exceeding the proportional share.
    let cap = inst.total_value(agent) / Rational::from_int(inst.n as i64);
    let mut sums: BTreeSet<Rational> = BTreeSet::new();
    sums.insert(Rational::zero());
    for v in values {
        let extended: Vec<Rational> =
            sums.iter().map(|s| s + v).filter(|s| *s <= cap).collect();
        sums.extend(extended);
    }
    let candidates: Vec<Rational> = sums.into_iter().collect();

    let mut sorted: Vec<Rational> = values.clone();
    sorted.sort_by(|a, b| b.cmp(a));
    // Largest feasible candidate by binary search; feasibility is monotone.
    let mut lo = 0usize;
    let mut hi = candidates.len() - 1;
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if can_cover(&sorted, inst.n, &candidates[mid]) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(candidates[lo].clone())
}

/// Can the items be split into `n` bundles each worth at least `target`?
fn can_cover(sorted_desc: &[Rational], n: usize, target: &Rational) -> bool {
    if !target.is_positive() {
        return true;
    }
    let suffix_total: Vec<Rational> = {
        let mut acc = Rational::zero();
        let mut totals = vec![Rational::zero(); sorted_desc.len() + 1];
        for (i, v) in sorted_desc.iter().enumerate().rev() {
            acc += v;
            totals[i] = acc.clone();
        }
        totals
    };

    fn dfs(
        idx: usize,
        bundles: &mut Vec<Rational>,
        sorted_desc: &[Rational],
        suffix_total: &[Rational],
        target: &Rational,
    ) -> bool {
        if bundles.iter().all(|b| b >= target) {
            return true;
        }
        if idx == sorted_desc.len() {
            return false;
        }
        let deficit: Rational = bundles
            .iter()
            .filter(|b| *b < target)
            .map(|b| target - b)
            .sum();
        if deficit > suffix_total[idx] {
            return false;
        }
        let mut tried: Vec<Rational> = Vec::new();
        for b in 0..bundles.len() {
            if &bundles[b] >= target || tried.contains(&bundles[b]) {
                continue; // only open bundles; equal sums are symmetric
            }
            tried.push(bundles[b].clone());
            bundles[b] += &sorted_desc[idx];
            if dfs(idx + 1, bundles, sorted_desc, suffix_total, target) {
                bundles[b] -= &sorted_desc[idx];
                return true;
            }
            bundles[b] -= &sorted_desc[idx];
        }
        false
    }

    let mut bundles = vec![Rational::zero(); n];
    dfs(0, &mut bundles, sorted_desc, &suffix_total, target)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmsReport {
    pub alpha: Rational,
    pub satisfied: bool,
    /// Per agent: (own value, alpha * MMS_i).
    pub agents: Vec<(Rational, Rational)>,
}

/// Checks `v_i(A_i) >= alpha * MMS_i` for every agent, exactly.
pub fn check_alpha_mms(
    inst: &Instance,
    alloc: &IntegralAllocation,
    alpha: &Rational,
) -> Result<MmsReport> {
    if alloc.n() != inst.n || !alloc.is_partition_of(inst.m) {
        return Err(Error::MalformedInput(
            "allocation is not a partition of the instance's items".into(),
        ));
    }
    let mut agents = Vec::new();
    for i in 0..inst.n {
        let own = inst.bundle_value(i, &alloc.bundles[i]);
        let share = alpha * &mms_value(inst, i)?;
        agents.push((own, share));
    }
    let satisfied = agents.iter().all(|(own, share)| own >= share);
    Ok(MmsReport { alpha: alpha.clone(), satisfied, agents })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParetoVerdict {
    Optimal,
    Dominated { witness: IntegralAllocation },
}

/// Exhaustive Pareto check over all `n^m` integral allocations.
pub fn check_pareto_integral(inst: &Instance, alloc: &IntegralAllocation) -> Result<ParetoVerdict> {
    if alloc.n() != inst.n || !alloc.is_partition_of(inst.m) {
        return Err(Error::MalformedInput(
            "allocation is not a partition of the instance's items".into(),
        ));
    }
    let budget = crate::enumeration_budget();
    let count = (inst.n as u64).checked_pow(inst.m as u32);
    if count.is_none() || count.unwrap() > budget {
        return Err(Error::TooLarge(format!(
            "Pareto enumeration needs n^m <= {budget}"
        )));
    }
    let base: Vec<Rational> =
        (0..inst.n).map(|i| inst.bundle_value(i, &alloc.bundles[i])).collect();
    let mut owners = vec![0usize; inst.m];
    loop {
        let candidate = IntegralAllocation::from_owners(inst.n, &owners);
        let utilities: Vec<Rational> =
            (0..inst.n).map(|i| inst.bundle_value(i, &candidate.bundles[i])).collect();
        let weakly_better = utilities.iter().zip(&base).all(|(u, b)| u >= b);
        let strictly = utilities.iter().zip(&base).any(|(u, b)| u > b);
        if weakly_better && strictly {
            return Ok(ParetoVerdict::Dominated { witness: candidate });
        }
        // next assignment in mixed-radix order
        let mut pos = 0;
        loop {
            if pos == inst.m {
                return Ok(ParetoVerdict::Optimal);
            }
            owners[pos] += 1;
            if owners[pos] < inst.n {
                break;
            }
            owners[pos] = 0;
            pos += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParetoFracVerdict {
    Optimal,
    Improvable {
        direction: FractionalAllocation,
        gains: Vec<Rational>,
    },
}

/// Fractional Pareto check by exact LP: maximize the total utility slack
/// subject to every agent weakly improving and items staying fully
/// allocated. The allocation is optimal iff the maximum slack is zero.
pub fn check_pareto_fractional(
    inst: &Instance,
    x: &FractionalAllocation,
) -> Result<ParetoFracVerdict> {
    x.validate()?;
    if x.n() != inst.n || x.m() != inst.m {
        return Err(Error::DimensionMismatch(
            "fractional allocation does not match the instance".into(),
        ));
    }
    let n = inst.n;
    let m = inst.m;
    let vars = n * m + n; // shares then one slack per agent
    let mut sys = LinearSystem::new(vars);
    for g in 0..m {
        let mut row = vec![Rational::zero(); vars];
        for i in 0..n {
            row[i * m + g] = Rational::one();
        }
        sys.add_equality(row, Rational::one());
    }
    for i in 0..n {
        let mut row = vec![Rational::zero(); vars];
        for g in 0..m {
            row[i * m + g] = inst.values[i][g].clone();
        }
        row[n * m + i] = -Rational::one();
        let current = linalg::dot(&inst.values[i], &x.shares[i]);
        sys.add_equality(row, current);
    }
    let mut objective = vec![Rational::zero(); vars];
    for s in objective.iter_mut().skip(n * m) {
        *s = Rational::one();
    }
    sys.objective = Some(objective);

    let out = solve_vertex(&sys)?;
    let total_gain = out.objective_value.clone().ok_or_else(|| {
        Error::InternalInvariant("slack LP must be feasible at the current allocation".into())
    })?;
    if total_gain.is_zero() {
        return Ok(ParetoFracVerdict::Optimal);
    }
    let point = out.vertex();
    let direction = FractionalAllocation {
        shares: (0..n).map(|i| point[i * m..(i + 1) * m].to_vec()).collect(),
    };
    let gains = point[n * m..].to_vec();
    Ok(ParetoFracVerdict::Improvable { direction, gains })
}

/// True iff every bundle holds exactly one item from every group.
pub fn check_regular(alloc: &IntegralAllocation, groups: &[Vec<usize>]) -> bool {
    groups.iter().all(|group| {
        alloc
            .bundles
            .iter()
            .all(|bundle| group.iter().filter(|g| bundle.contains(g)).count() == 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rat;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(n: i64) -> Rational {
        Rational::from_int(n)
    }

    fn not_realizable_instance() -> Instance {
        Instance::from_ints(&[vec![2, 1, 4, 4], vec![1, 2, 4, 4], vec![4, 4, 2, 1]]).unwrap()
    }

    /// Exhaustive oracle over all subset pairs (S, T), the defining
    /// quantifier of the envy relaxation.
    fn ef_uv_exhaustive(
        inst: &Instance,
        alloc: &IntegralAllocation,
        u: usize,
        v: usize,
    ) -> bool {
        for i in 0..inst.n {
            for j in 0..inst.n {
                if i == j {
                    continue;
                }
                let outside: Vec<usize> =
                    (0..inst.m).filter(|g| !alloc.bundles[i].contains(g)).collect();
                let inside: Vec<usize> = alloc.bundles[j].iter().copied().collect();
                let mut pair_ok = false;
                'search: for add_mask in 0u32..(1 << outside.len()) {
                    if (add_mask.count_ones() as usize) > u {
                        continue;
                    }
                    for rem_mask in 0u32..(1 << inside.len()) {
                        if (rem_mask.count_ones() as usize) > v {
                            continue;
                        }
                        let mut lhs = inst.bundle_value(i, &alloc.bundles[i]);
                        for (b, g) in outside.iter().enumerate() {
                            if add_mask >> b & 1 == 1 {
                                lhs += &inst.values[i][*g];
                            }
                        }
                        let mut rhs = inst.bundle_value(i, &alloc.bundles[j]);
                        for (b, g) in inside.iter().enumerate() {
                            if rem_mask >> b & 1 == 1 {
                                rhs -= &inst.values[i][*g];
                            }
                        }
                        if lhs >= rhs {
                            pair_ok = true;
                            break 'search;
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

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Instance {
        Instance::new(
            (0..n)
                .map(|_| (0..m).map(|_| rat(rng.gen_range(0..8), rng.gen_range(1..4))).collect())
                .collect(),
        )
        .unwrap()
    }

    fn random_allocation(rng: &mut ChaCha8Rng, n: usize, m: usize) -> IntegralAllocation {
        let owners: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
        IntegralAllocation::from_owners(n, &owners)
    }

    #[test]
    fn known_ef1_violation() {
        // Allocation ({g2, g4}, {g1}, {g3}) on the 3x4 instance: agent 2
        // holds value 1 and still envies agent 1 after removing one item.
        let inst = not_realizable_instance();
        let alloc = IntegralAllocation {
            bundles: vec![
                [1usize, 3].into_iter().collect(),
                [0usize].into_iter().collect(),
                [2usize].into_iter().collect(),
            ],
        };
        let report = check_ef1(&inst, &alloc).unwrap();
        let pair = report
            .pairs
            .iter()
            .find(|p| p.envier == 1 && p.envied == 0)
            .unwrap();
        assert!(!pair.relation.satisfied);
        assert_eq!(pair.relation.deficit, r(1)); // 2 - 1
    }

    #[test]
    fn empty_item_set_is_envy_free() {
        let inst = Instance::new(vec![vec![], vec![]]).unwrap();
        let alloc = IntegralAllocation::empty(2);
        let report = check_ef_uv(&inst, &alloc, 0, 0).unwrap();
        assert!(report.satisfied);
    }

    #[test]
    fn greedy_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..40 {
            let inst = random_instance(&mut rng, 2, 5);
            let alloc = random_allocation(&mut rng, 2, 5);
            for u in 0..3 {
                for v in 0..3 {
                    let fast = check_ef_uv(&inst, &alloc, u, v).unwrap().satisfied;
                    let slow = ef_uv_exhaustive(&inst, &alloc, u, v);
                    assert_eq!(fast, slow, "u={u} v={v}");
                }
            }
        }
    }

    #[test]
    fn monotone_in_u_and_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let inst = random_instance(&mut rng, 3, 6);
            let alloc = random_allocation(&mut rng, 3, 6);
            for u in 0..3 {
                for v in 0..3 {
                    if check_ef_uv(&inst, &alloc, u, v).unwrap().satisfied {
                        assert!(check_ef_uv(&inst, &alloc, u + 1, v).unwrap().satisfied);
                        assert!(check_ef_uv(&inst, &alloc, u, v + 1).unwrap().satisfied);
                    }
                }
            }
        }
    }

    #[test]
    fn remove_only_envy_transfers_to_added_items() {
        // EF^{+0}_{-v} implies EF^{+w}_{-(v-w)} for any 0 <= w <= v.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let inst = random_instance(&mut rng, 2, 6);
            let alloc = random_allocation(&mut rng, 2, 6);
            for v in 0..4 {
                if check_ef_uv(&inst, &alloc, 0, v).unwrap().satisfied {
                    for w in 0..=v {
                        assert!(check_ef_uv(&inst, &alloc, w, v - w).unwrap().satisfied);
                    }
                }
            }
        }
    }

    #[test]
    fn single_agent_trivially_fair() {
        let inst = Instance::from_ints(&[vec![5, 3]]).unwrap();
        let alloc = IntegralAllocation::from_owners(1, &[0, 0]);
        assert!(check_ef1(&inst, &alloc).unwrap().satisfied);
        assert!(check_prop1(&inst, &alloc).unwrap().satisfied);
    }

    #[test]
    fn prop1_tight_on_unit_diagonal() {
        // All values 1, m = n, one item each: exactly proportional.
        let rows: Vec<Vec<i64>> = (0..3).map(|_| vec![1, 1, 1]).collect();
        let inst = Instance::from_ints(&rows).unwrap();
        let alloc = IntegralAllocation::from_owners(3, &[0, 1, 2]);
        let report = check_prop1(&inst, &alloc).unwrap();
        assert!(report.satisfied);
        assert!(report.agents.iter().all(|(ok, witness)| *ok && witness.is_none()));
    }

    #[test]
    fn mms_two_agents_four_items() {
        let inst = Instance::from_ints(&[vec![4, 3, 2, 1], vec![4, 3, 2, 1]]).unwrap();
        // Oracle: enumerate all 2-partitions directly.
        let mut best = Rational::zero();
        for mask in 0u32..16 {
            let a: Rational = (0..4).filter(|g| mask >> g & 1 == 1).map(|g| inst.values[0][g].clone()).sum();
            let b = &inst.total_value(0) - &a;
            let low = a.min(b);
            if low > best {
                best = low;
            }
        }
        assert_eq!(best, r(5));
        assert_eq!(mms_value(&inst, 0).unwrap(), r(5));
    }

    #[test]
    fn mms_degenerate_cases() {
        let inst = Instance::from_ints(&[vec![7, 2], vec![1, 1], vec![1, 1]]).unwrap();
        assert_eq!(mms_value(&inst, 0).unwrap(), Rational::zero()); // m < n

        let single = Instance::from_ints(&[vec![7, 2]]).unwrap();
        assert_eq!(mms_value(&single, 0).unwrap(), r(9)); // n = 1

        let big = Instance::from_ints(&[vec![1; 20], vec![1; 20]]).unwrap();
        assert!(matches!(mms_value(&big, 0), Err(Error::TooLarge(_))));
    }

    #[test]
    fn mms_matches_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..15 {
            let n = rng.gen_range(2..4usize);
            let m = rng.gen_range(n..7usize);
            let inst = random_instance(&mut rng, n, m);
            // Oracle: enumerate all n^m partitions.
            let mut best = Rational::zero();
            let mut owners = vec![0usize; m];
            loop {
                let alloc = IntegralAllocation::from_owners(n, &owners);
                let low = (0..n)
                    .map(|i| inst.bundle_value(0, &alloc.bundles[i]))
                    .min()
                    .unwrap();
                if low > best {
                    best = low;
                }
                let mut pos = 0;
                loop {
                    if pos == m {
                        break;
                    }
                    owners[pos] += 1;
                    if owners[pos] < n {
                        break;
                    }
                    owners[pos] = 0;
                    pos += 1;
                }
                if pos == m {
                    break;
                }
            }
            assert_eq!(mms_value(&inst, 0).unwrap(), best);
        }
    }

    #[test]
    fn alpha_mms_composes_with_solver() {
        let inst = Instance::from_ints(&[vec![4, 3, 2, 1], vec![1, 2, 3, 4]]).unwrap();
        let alloc = IntegralAllocation::from_owners(2, &[0, 0, 1, 1]);
        let full = check_alpha_mms(&inst, &alloc, &r(1)).unwrap();
        assert!(full.satisfied); // each side worth 7 >= 5
        let half = check_alpha_mms(&inst, &alloc, &rat(1, 2)).unwrap();
        assert!(half.satisfied);
    }

    #[test]
    fn pareto_integral_finds_obvious_swap() {
        let inst = Instance::from_ints(&[vec![1, 0], vec![0, 1]]).unwrap();
        let bad = IntegralAllocation::from_owners(2, &[1, 0]);
        match check_pareto_integral(&inst, &bad).unwrap() {
            ParetoVerdict::Dominated { witness } => {
                // The witness really dominates: weak improvement for all,
                // strict for someone.
                let before: Vec<Rational> =
                    (0..2).map(|i| inst.bundle_value(i, &bad.bundles[i])).collect();
                let after: Vec<Rational> =
                    (0..2).map(|i| inst.bundle_value(i, &witness.bundles[i])).collect();
                assert!(after.iter().zip(&before).all(|(a, b)| a >= b));
                assert!(after.iter().zip(&before).any(|(a, b)| a > b));
            }
            ParetoVerdict::Optimal => panic!("swap improves both agents"),
        }
        let good = IntegralAllocation::from_owners(2, &[0, 1]);
        assert_eq!(check_pareto_integral(&inst, &good).unwrap(), ParetoVerdict::Optimal);
    }

    #[test]
    fn tri_valued_fragment_forces_the_high_block() {
        // Desk-scale fragment of the tri-valued chain's last step: items
        // 0..2 are agent 2's high block, items 2..4 agent 1's. An agent
        // holding part of her low block while missing high-block items is
        // dominated (a swap improves someone and hurts nobody).
        let inst = Instance::new(vec![
            vec![rat(1, 50), rat(1, 50), r(1), r(1)],
            vec![r(1), r(1), rat(1, 50), rat(1, 50)],
        ])
        .unwrap();
        // Agent 2 holds one low-block item (3) but misses a high-block one.
        let alloc = IntegralAllocation::from_owners(2, &[0, 1, 0, 1]);
        match check_pareto_integral(&inst, &alloc).unwrap() {
            ParetoVerdict::Dominated { witness } => {
                let before: Vec<Rational> =
                    (0..2).map(|i| inst.bundle_value(i, &alloc.bundles[i])).collect();
                let after: Vec<Rational> =
                    (0..2).map(|i| inst.bundle_value(i, &witness.bundles[i])).collect();
                assert!(after.iter().zip(&before).all(|(a, b)| a >= b));
                assert!(after.iter().zip(&before).any(|(a, b)| a > b));
            }
            ParetoVerdict::Optimal => panic!("blocks must be swapped to their fans"),
        }
        // The block-aligned allocation is optimal.
        let aligned = IntegralAllocation::from_owners(2, &[1, 1, 0, 0]);
        assert_eq!(check_pareto_integral(&inst, &aligned).unwrap(), ParetoVerdict::Optimal);
    }

    #[test]
    fn all_zero_values_every_allocation_optimal() {
        let inst = Instance::from_ints(&[vec![0, 0], vec![0, 0]]).unwrap();
        let alloc = IntegralAllocation::from_owners(2, &[0, 0]);
        assert_eq!(check_pareto_integral(&inst, &alloc).unwrap(), ParetoVerdict::Optimal);
    }

    #[test]
    fn fractional_pareto_flags_equal_division_when_tastes_differ() {
        let inst = not_realizable_instance();
        let x = FractionalAllocation::equal_division(3, 4);
        match check_pareto_fractional(&inst, &x).unwrap() {
            ParetoFracVerdict::Improvable { direction, gains } => {
                direction.validate().unwrap();
                let total: Rational = gains.iter().sum();
                assert!(total.is_positive());
                for i in 0..3 {
                    let before = linalg::dot(&inst.values[i], &x.shares[i]);
                    let after = linalg::dot(&inst.values[i], &direction.shares[i]);
                    assert!(after >= before);
                }
            }
            ParetoFracVerdict::Optimal => panic!("agents rank items differently"),
        }
    }

    #[test]
    fn fractional_pareto_single_agent_always_optimal() {
        let inst = Instance::from_ints(&[vec![3, 1]]).unwrap();
        let x = FractionalAllocation::equal_division(1, 2);
        assert_eq!(check_pareto_fractional(&inst, &x).unwrap(), ParetoFracVerdict::Optimal);
    }

    #[test]
    fn integral_and_fractional_pareto_agree_on_integral_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 2, 4);
            let alloc = random_allocation(&mut rng, 2, 4);
            let integral = check_pareto_integral(&inst, &alloc).unwrap();
            let fractional =
                check_pareto_fractional(&inst, &FractionalAllocation::indicator(&alloc, 4))
                    .unwrap();
            // Fractional dominance is weaker, so fractional-optimal implies
            // integral-optimal.
            if fractional == ParetoFracVerdict::Optimal {
                assert_eq!(integral, ParetoVerdict::Optimal);
            }
        }
    }

    #[test]
    fn regularity_checks_one_item_per_group() {
        let groups = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let regular = IntegralAllocation::from_owners(3, &[0, 1, 2, 2, 0, 1]);
        assert!(check_regular(&regular, &groups));
        // Permuting bundles preserves regularity.
        let permuted = IntegralAllocation {
            bundles: vec![
                regular.bundles[2].clone(),
                regular.bundles[0].clone(),
                regular.bundles[1].clone(),
            ],
        };
        assert!(check_regular(&permuted, &groups));
        let lopsided = IntegralAllocation::from_owners(3, &[0, 0, 2, 2, 1, 1]);
        assert!(!check_regular(&lopsided, &groups));
    }
}
