//! Realizability of fractional allocations: decompose a share matrix into a
//! lottery over integral allocations that all satisfy a fairness predicate,
//! or refute with an exact separating certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness;
use crate::model::{marginals, FractionalAllocation, Instance, IntegralAllocation, Lottery};
use crate::numeric::{solve_vertex, FarkasCertificate, LinearSystem, LpStatus, Rational};

/// All integral allocations of the instance that satisfy `predicate`,
/// in deterministic mixed-radix enumeration order. Guarded by the global
/// enumeration budget (`n^m` candidates).
pub fn enumerate_allocations<F>(inst: &Instance, predicate: F) -> Result<Vec<IntegralAllocation>>
where
    F: Fn(&IntegralAllocation) -> bool,
{
    let budget = crate::enumeration_budget();
    let count = (inst.n as u64).checked_pow(inst.m as u32);
    if count.is_none() || count.unwrap() > budget {
        return Err(Error::BudgetExceeded(format!(
            "allocation enumeration needs n^m <= {budget}"
        )));
    }
    let mut out = Vec::new();
    let mut owners = vec![0usize; inst.m];
    loop {
        let alloc = IntegralAllocation::from_owners(inst.n, &owners);
        if predicate(&alloc) {
            out.push(alloc);
        }
        let mut pos = 0;
        loop {
            if pos == inst.m {
                return Ok(out);
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

/// Convenience predicate builder for the common envy checks.
pub fn ef_uv_predicate(inst: &Instance, u: usize, v: usize) -> impl Fn(&IntegralAllocation) -> bool + '_ {
    move |alloc| {
        fairness::check_ef_uv(inst, alloc, u, v)
            .map(|r| r.satisfied)
            .unwrap_or(false)
    }
}

/// A hyperplane separating the target shares from the convex hull of the
/// support's indicator matrices. `offset` multiplies the probability-mass
/// row; `coefficients[i][g]` multiplies the (agent, item) marginal rows.
/// For every support allocation the combined column value is <= 0 while the
/// target evaluates > 0, so no mixture of the support can reach the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparatingCertificate {
    pub offset: Rational,
    pub coefficients: Vec<Vec<Rational>>,
}

impl SeparatingCertificate {
    fn evaluate_allocation(&self, alloc: &IntegralAllocation) -> Rational {
        let mut total = self.offset.clone();
        for (agent, bundle) in alloc.bundles.iter().enumerate() {
            for &g in bundle {
                total += &self.coefficients[agent][g];
            }
        }
        total
    }

    fn evaluate_target(&self, x: &FractionalAllocation) -> Rational {
        let mut total = self.offset.clone();
        for (row, xs) in self.coefficients.iter().zip(&x.shares) {
            for (c, v) in row.iter().zip(xs) {
                total += c * v;
            }
        }
        total
    }

    /// Exact verification against the support it was issued for.
    pub fn verify(&self, x: &FractionalAllocation, support: &[IntegralAllocation]) -> bool {
        self.evaluate_target(x).is_positive()
            && support
                .iter()
                .all(|alloc| !self.evaluate_allocation(alloc).is_positive())
    }
}

#[derive(Debug, Clone)]
pub enum Realization {
    Lottery(Lottery),
    Refuted(SeparatingCertificate),
}

/// Writes `x` as a probability mixture of the support allocations with
/// exactly matching marginals, or produces a separating certificate showing
/// that no such mixture exists. The mixture comes from a vertex of the
/// weight polytope, so at most `n*m + 1` support points carry weight.
pub fn decompose_or_refute(
    x: &FractionalAllocation,
    support: &[IntegralAllocation],
) -> Result<Realization> {
    x.validate()?;
    let n = x.n();
    let m = x.m();
    for alloc in support {
        if alloc.n() != n || !alloc.is_partition_of(m) {
            return Err(Error::DimensionMismatch(
                "support allocation does not partition the item set".into(),
            ));
        }
    }

    let mut sys = LinearSystem::new(support.len());
    sys.add_equality(vec![Rational::one(); support.len()], Rational::one());
    for i in 0..n {
        for g in 0..m {
            let row: Vec<Rational> = support
                .iter()
                .map(|alloc| {
                    if alloc.bundles[i].contains(&g) {
                        Rational::one()
                    } else {
                        Rational::zero()
                    }
                })
                .collect();
            sys.add_equality(row, x.shares[i][g].clone());
        }
    }

    let out = solve_vertex(&sys)?;
    match out.status {
        LpStatus::Infeasible => {
            let cert = farkas_to_separator(&out.certificate.expect("infeasible has certificate"), n, m);
            if !cert.verify(x, support) {
                return Err(Error::InternalInvariant(
                    "separating certificate failed exact verification".into(),
                ));
            }
            Ok(Realization::Refuted(cert))
        }
        _ => {
            let weights = out.vertex();
            let entries: Vec<(Rational, IntegralAllocation)> = weights
                .iter()
                .zip(support)
                .filter(|(w, _)| w.is_positive())
                .map(|(w, alloc)| (w.clone(), alloc.clone()))
                .collect();
            let lottery = Lottery::new(entries);
            lottery.validate()?;
            if marginals(&lottery)? != pad_shares(x, m) {
                return Err(Error::InternalInvariant(
                    "decomposition marginals drifted from the target".into(),
                ));
            }
            Ok(Realization::Lottery(lottery))
        }
    }
}

/// `marginals` infers the item count from the support; re-shape the target
/// to the same width for the exactness check (relevant only when m = 0).
fn pad_shares(x: &FractionalAllocation, m: usize) -> FractionalAllocation {
    let mut shares = x.shares.clone();
    for row in &mut shares {
        row.truncate(m);
    }
    FractionalAllocation { shares }
}

/// The LP's dual multipliers are one per equality row: the mass row first,
/// then the (agent, item) marginal rows. With weight variables bounded below
/// by zero, the phase-one dual already satisfies y·column <= 0 per support
/// column and y·target > 0, which is exactly the separator orientation.
fn farkas_to_separator(cert: &FarkasCertificate, n: usize, m: usize) -> SeparatingCertificate {
    let y = &cert.row_multipliers;
    debug_assert_eq!(y.len(), 1 + n * m);
    SeparatingCertificate {
        offset: y[0].clone(),
        coefficients: (0..n)
            .map(|i| (0..m).map(|g| y[1 + i * m + g].clone()).collect())
            .collect(),
    }
}

/// Realizability verdicts for the `(u, v)` grid up to the given caps; the
/// minimal feasible pairs are the ones with no feasible pair below them.
/// Exposed as a search device; nothing stronger is promised.
pub fn search_feasible_uv(
    inst: &Instance,
    x: &FractionalAllocation,
    max_u: usize,
    max_v: usize,
) -> Result<Vec<(usize, usize, bool)>> {
    let mut grid = Vec::new();
    for u in 0..=max_u {
        for v in 0..=max_v {
            let support = enumerate_allocations(inst, ef_uv_predicate(inst, u, v))?;
            let feasible = matches!(decompose_or_refute(x, &support)?, Realization::Lottery(_));
            grid.push((u, v, feasible));
        }
    }
    Ok(grid)
}
