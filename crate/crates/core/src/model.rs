//! Core domain objects: valuation instances, integral and fractional
//! allocations, lotteries, and the dummy-item padding used by mechanisms
//! that need the item count to be a multiple of the agent count.
//!
//! Rationals serialize as `"a/b"` strings inside JSON documents so exactness
//! survives I/O; both file formats below are bit-exact contracts of the CLI.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Rational;

/// A fair-division instance: `n` agents, `m` items, nonnegative additive
/// valuations `values[agent][item]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    pub values: Vec<Vec<Rational>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<Vec<String>>,
}

impl Instance {
    pub fn new(values: Vec<Vec<Rational>>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::MalformedInput("instance needs at least one agent".into()));
        }
        let m = values[0].len();
        let inst = Instance { n, m, values, labels: None };
        inst.validate()?;
        Ok(inst)
    }

    pub fn from_ints(values: &[Vec<i64>]) -> Result<Self> {
        Instance::new(
            values
                .iter()
                .map(|row| row.iter().map(|&v| Rational::from_int(v)).collect())
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::MalformedInput("instance needs at least one agent".into()));
        }
        if self.values.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} value rows for {} agents",
                self.values.len(),
                self.n
            )));
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != self.m {
                return Err(Error::DimensionMismatch(format!(
                    "agent {i} has {} values for {} items",
                    row.len(),
                    self.m
                )));
            }
            if row.iter().any(Rational::is_negative) {
                return Err(Error::MalformedInput(format!("agent {i} has a negative value")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.m {
                return Err(Error::DimensionMismatch("label count differs from item count".into()));
            }
        }
        Ok(())
    }

    pub fn value(&self, agent: usize, item: usize) -> &Rational {
        &self.values[agent][item]
    }

    /// `v_i(S)` for a set of items.
    pub fn bundle_value<'a, I>(&self, agent: usize, items: I) -> Rational
    where
        I: IntoIterator<Item = &'a usize>,
    {
        items.into_iter().map(|&g| self.values[agent][g].clone()).sum()
    }

    /// `v_i(M)`, the agent's value for everything.
    pub fn total_value(&self, agent: usize) -> Rational {
        self.values[agent].iter().sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text)
            .map_err(|e| Error::MalformedInput(format!("instance JSON: {e}")))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

/// A partition of the items into one bundle per agent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntegralAllocation {
    pub bundles: Vec<BTreeSet<usize>>,
}

impl IntegralAllocation {
    pub fn empty(n: usize) -> Self {
        IntegralAllocation { bundles: vec![BTreeSet::new(); n] }
    }

    /// Builds from an owner vector: `owners[item] = agent`.
    pub fn from_owners(n: usize, owners: &[usize]) -> Self {
        let mut bundles = vec![BTreeSet::new(); n];
        for (item, &agent) in owners.iter().enumerate() {
            bundles[agent].insert(item);
        }
        IntegralAllocation { bundles }
    }

    pub fn n(&self) -> usize {
        self.bundles.len()
    }

    /// Checks the bundles are disjoint and cover `0..m` exactly.
    pub fn is_partition_of(&self, m: usize) -> bool {
        let mut seen = vec![false; m];
        for bundle in &self.bundles {
            for &g in bundle {
                if g >= m || seen[g] {
                    return false;
                }
                seen[g] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn owner_of(&self, item: usize) -> Option<usize> {
        self.bundles.iter().position(|b| b.contains(&item))
    }
}

/// An `n x m` matrix of exact item fractions with unit column sums.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionalAllocation {
    pub shares: Vec<Vec<Rational>>,
}

impl FractionalAllocation {
    pub fn equal_division(n: usize, m: usize) -> Self {
        let share = Rational::one() / Rational::from_int(n as i64);
        FractionalAllocation { shares: vec![vec![share; m]; n] }
    }

    pub fn indicator(alloc: &IntegralAllocation, m: usize) -> Self {
        let mut shares = vec![vec![Rational::zero(); m]; alloc.n()];
        for (agent, bundle) in alloc.bundles.iter().enumerate() {
            for &g in bundle {
                shares[agent][g] = Rational::one();
            }
        }
        FractionalAllocation { shares }
    }

    pub fn n(&self) -> usize {
        self.shares.len()
    }

    pub fn m(&self) -> usize {
        self.shares.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        for row in &self.shares {
            if row.len() != m {
                return Err(Error::DimensionMismatch("ragged share matrix".into()));
            }
            for x in row {
                if x.is_negative() || *x > Rational::one() {
                    return Err(Error::MalformedInput(
                        "share outside [0, 1] in fractional allocation".into(),
                    ));
                }
            }
        }
        for g in 0..m {
            let col: Rational = self.shares.iter().map(|row| &row[g]).sum();
            if col != Rational::one() {
                return Err(Error::MalformedInput(format!(
                    "column {g} sums to {col}, expected 1/1"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let x: FractionalAllocation = serde_json::from_str(text)
            .map_err(|e| Error::MalformedInput(format!("fractional allocation JSON: {e}")))?;
        x.validate()?;
        Ok(x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fractional allocation serializes")
    }
}

/// One lottery entry: an allocation drawn with probability `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotteryEntry {
    pub p: Rational,
    pub bundles: Vec<BTreeSet<usize>>,
}

impl LotteryEntry {
    pub fn allocation(&self) -> IntegralAllocation {
        IntegralAllocation { bundles: self.bundles.clone() }
    }
}

/// A finite probability distribution over integral allocations. Duplicate
/// allocations are permitted; `normalized` merges them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lottery {
    pub entries: Vec<LotteryEntry>,
}

impl Lottery {
    pub fn new(entries: Vec<(Rational, IntegralAllocation)>) -> Self {
        Lottery {
            entries: entries
                .into_iter()
                .map(|(p, a)| LotteryEntry { p, bundles: a.bundles })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::MalformedInput("lottery has no entries".into()));
        }
        let n = self.entries[0].bundles.len();
        let mut total = Rational::zero();
        for entry in &self.entries {
            if entry.bundles.len() != n {
                return Err(Error::DimensionMismatch(
                    "lottery entries disagree on agent count".into(),
                ));
            }
            if !entry.p.is_positive() {
                return Err(Error::MalformedInput("lottery probabilities must be positive".into()));
            }
            total += &entry.p;
        }
        if total != Rational::one() {
            return Err(Error::MalformedInput(format!(
                "lottery probabilities sum to {total}, expected 1/1"
            )));
        }
        Ok(())
    }

    /// Merges duplicate allocations, summing their probabilities.
    pub fn normalized(&self) -> Lottery {
        let mut merged: Vec<LotteryEntry> = Vec::new();
        for entry in &self.entries {
            match merged.iter_mut().find(|e| e.bundles == entry.bundles) {
                Some(existing) => existing.p += &entry.p,
                None => merged.push(entry.clone()),
            }
        }
        Lottery { entries: merged }
    }

    /// Draws one allocation with the entry probabilities, using the supplied
    /// generator. The draw compares an exact dyadic rational in [0, 1)
    /// against the cumulative distribution, so equal seeds give equal draws.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> IntegralAllocation {
        let ticket = Rational::new(0, 1)
            + Rational::from_int(rng.gen::<u32>() as i64) / Rational::from_int(1i64 << 32);
        let mut acc = Rational::zero();
        for entry in &self.entries {
            acc += &entry.p;
            if ticket < acc {
                return entry.allocation();
            }
        }
        self.entries.last().expect("lottery nonempty").allocation()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lot: Lottery = serde_json::from_str(text)
            .map_err(|e| Error::MalformedInput(format!("lottery JSON: {e}")))?;
        lot.validate()?;
        Ok(lot)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lottery serializes")
    }
}

/// Exact marginal matrix of a lottery: entry `(i, g)` is the probability
/// that item `g` goes to agent `i`. Columns sum to one.
pub fn marginals(lottery: &Lottery) -> Result<FractionalAllocation> {
    lottery.validate()?;
    let n = lottery.entries[0].bundles.len();
    let m = lottery
        .entries
        .iter()
        .flat_map(|e| e.bundles.iter().flat_map(|b| b.iter().map(|&g| g + 1)))
        .max()
        .unwrap_or(0);
    let mut shares = vec![vec![Rational::zero(); m]; n];
    for entry in &lottery.entries {
        let alloc = entry.allocation();
        if !alloc.is_partition_of(m) {
            return Err(Error::MalformedInput(
                "lottery entry is not a partition of the item set".into(),
            ));
        }
        for (agent, bundle) in entry.bundles.iter().enumerate() {
            for &g in bundle {
                shares[agent][g] += &entry.p;
            }
        }
    }
    let x = FractionalAllocation { shares };
    x.validate()?;
    Ok(x)
}

/// `v_i(X) = sum_g v_ig x_ig` for one agent's share row.
pub fn expected_utility(valuations: &[Rational], shares: &[Rational]) -> Result<Rational> {
    if valuations.len() != shares.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} valuations against {} shares",
            valuations.len(),
            shares.len()
        )));
    }
    Ok(valuations.iter().zip(shares).map(|(v, x)| v * x).sum())
}

/// Record of dummy zero-value items appended to make `m` a multiple of `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DummyPad {
    pub original_m: usize,
    pub padded_m: usize,
}

impl DummyPad {
    pub fn dummy_items(&self) -> std::ops::Range<usize> {
        self.original_m..self.padded_m
    }

    pub fn is_dummy(&self, item: usize) -> bool {
        item >= self.original_m
    }
}

/// Appends zero-value dummy items until `m` is a multiple of `k`.
pub fn pad_to_multiple(inst: &Instance, k: usize) -> (Instance, DummyPad) {
    assert!(k >= 1, "padding needs k >= 1");
    let original_m = inst.m;
    let remainder = original_m % k;
    let padded_m = if remainder == 0 { original_m } else { original_m + k - remainder };
    let mut padded = inst.clone();
    for row in &mut padded.values {
        row.resize(padded_m, Rational::zero());
    }
    padded.m = padded_m;
    if let Some(labels) = &mut padded.labels {
        for extra in original_m..padded_m {
            labels.push(format!("dummy{extra}"));
        }
    }
    (padded, DummyPad { original_m, padded_m })
}

/// Removes dummy items from an allocation over the padded instance,
/// restoring a partition of the original items.
pub fn strip(alloc: &IntegralAllocation, pad: &DummyPad) -> IntegralAllocation {
    IntegralAllocation {
        bundles: alloc
            .bundles
            .iter()
            .map(|b| b.iter().copied().filter(|&g| !pad.is_dummy(g)).collect())
            .collect(),
    }
}

/// Drops the dummy columns of a share matrix over the padded instance.
pub fn strip_fractional(x: &FractionalAllocation, pad: &DummyPad) -> FractionalAllocation {
    FractionalAllocation {
        shares: x.shares.iter().map(|row| row[..pad.original_m].to_vec()).collect(),
    }
}
