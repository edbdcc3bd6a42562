//! Two-agent truthful mechanism: the fractional rule is equal division
//! (report-independent, hence truthful) and the decomposition flips a fair
//! coin between a balanced partition and its swap. Both orientations of the
//! partition are envy-free up to one item.

use crate::error::{Error, Result};
use crate::graphs::{edge_coloring, BipartiteMultigraph};
use crate::model::{pad_to_multiple, strip, Instance, IntegralAllocation, Lottery};
use crate::numeric::{rat, Rational};

fn require_two_agents(inst: &Instance) -> Result<()> {
    if inst.n != 2 {
        return Err(Error::MalformedInput(format!(
            "two-agent mechanism got n = {}",
            inst.n
        )));
    }
    inst.validate()
}

/// Items sorted by one agent's value, descending, ties toward the lower
/// index, then chunked into consecutive groups of `width`.
pub(crate) fn descending_groups(values: &[Rational], width: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].cmp(&values[a]).then(a.cmp(&b)));
    order.chunks(width).map(<[usize]>::to_vec).collect()
}

/// Builds a partition (X, Y) with one item of every agent-sorted pair on
/// each side, via a 2-coloring of the 2-regular pair/item graph. Both
/// (X, Y) and (Y, X) are EF1 allocations.
pub fn balanced_pair(inst: &Instance) -> Result<(Vec<usize>, Vec<usize>)> {
    require_two_agents(inst)?;
    let (padded, pad) = pad_to_multiple(inst, 2);
    let groups1 = descending_groups(&padded.values[0], 2);
    let groups2 = descending_groups(&padded.values[1], 2);
    let pairs = groups1.len();

    // Edge g connects agent 1's pair containing g to agent 2's.
    let locate = |groups: &[Vec<usize>], item: usize| {
        groups.iter().position(|g| g.contains(&item)).expect("item is grouped")
    };
    let edges: Vec<(usize, usize)> = (0..padded.m)
        .map(|g| (locate(&groups1, g), locate(&groups2, g)))
        .collect();
    let graph = BipartiteMultigraph::new(pairs, pairs, edges)?;
    let colors = edge_coloring(&graph, 2)?;

    let mut x: Vec<usize> = colors[0].iter().copied().filter(|g| !pad.is_dummy(*g)).collect();
    let mut y: Vec<usize> = colors[1].iter().copied().filter(|g| !pad.is_dummy(*g)).collect();
    x.sort_unstable();
    y.sort_unstable();
    Ok((x, y))
}

/// The full mechanism: equal-division marginals realized as the lottery
/// {(1/2, (X, Y)), (1/2, (Y, X))}.
pub fn run(inst: &Instance) -> Result<Lottery> {
    let (x, y) = balanced_pair(inst)?;
    let forward = IntegralAllocation {
        bundles: vec![x.iter().copied().collect(), y.iter().copied().collect()],
    };
    let backward = IntegralAllocation {
        bundles: vec![forward.bundles[1].clone(), forward.bundles[0].clone()],
    };
    let lottery = Lottery::new(vec![(rat(1, 2), forward), (rat(1, 2), backward)]);
    lottery.validate()?;
    Ok(lottery)
}

/// The fractional rule behind the mechanism: every share is exactly 1/2,
/// independent of the reports.
pub fn fractional_rule(inst: &Instance) -> Result<crate::model::FractionalAllocation> {
    require_two_agents(inst)?;
    Ok(crate::model::FractionalAllocation::equal_division(2, inst.m))
}

/// Strips dummy items from a padded allocation; exposed for tests.
#[allow(dead_code)]
pub(crate) fn strip_allocation(
    alloc: &IntegralAllocation,
    pad: &crate::model::DummyPad,
) -> IntegralAllocation {
    strip(alloc, pad)
}
