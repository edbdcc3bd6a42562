//! Exact linear programming over rationals.
//!
//! Solves systems of equality rows with per-variable box bounds, returning a
//! vertex of the feasible polytope (a basic feasible solution), an exact
//! Farkas-style infeasibility certificate, or an exact optimum when an
//! objective is present. Everything is deterministic: Bland's rule picks the
//! lowest eligible index for both entering and leaving variables, which also
//! rules out cycling.

use serde::{Deserialize, Serialize};

use super::linalg;
use super::rational::Rational;
use crate::error::{Error, Result};

/// Equality constraints `A x = b` with box bounds `lower <= x <= upper`.
/// Every variable needs a finite lower bound; upper bounds are optional.
/// The objective, when present, is maximized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSystem {
    pub num_vars: usize,
    pub equalities: Vec<(Vec<Rational>, Rational)>,
    pub lower: Vec<Rational>,
    pub upper: Vec<Option<Rational>>,
    pub objective: Option<Vec<Rational>>,
}

impl LinearSystem {
    /// Fresh system with bounds `0 <= x` and no objective.
    pub fn new(num_vars: usize) -> Self {
        LinearSystem {
            num_vars,
            equalities: Vec::new(),
            lower: vec![Rational::zero(); num_vars],
            upper: vec![None; num_vars],
            objective: None,
        }
    }

    pub fn add_equality(&mut self, coefficients: Vec<Rational>, rhs: Rational) {
        self.equalities.push((coefficients, rhs));
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.num_vars || self.upper.len() != self.num_vars {
            return Err(Error::DimensionMismatch(format!(
                "bounds cover {} variables, system has {}",
                self.lower.len().min(self.upper.len()),
                self.num_vars
            )));
        }
        for (row, _) in &self.equalities {
            if row.len() != self.num_vars {
                return Err(Error::DimensionMismatch(format!(
                    "equality row has {} coefficients, system has {} variables",
                    row.len(),
                    self.num_vars
                )));
            }
        }
        if let Some(obj) = &self.objective {
            if obj.len() != self.num_vars {
                return Err(Error::DimensionMismatch(
                    "objective length differs from variable count".into(),
                ));
            }
        }
        for (j, up) in self.upper.iter().enumerate() {
            if let Some(u) = up {
                if *u < self.lower[j] {
                    return Err(Error::MalformedInput(format!(
                        "variable {j} has upper bound below lower bound"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exact feasibility check of a candidate point.
    pub fn is_feasible(&self, x: &[Rational]) -> bool {
        if x.len() != self.num_vars {
            return false;
        }
        for (row, rhs) in &self.equalities {
            if linalg::dot(row, x) != *rhs {
                return false;
            }
        }
        x.iter().enumerate().all(|(j, v)| {
            *v >= self.lower[j] && self.upper[j].as_ref().is_none_or(|u| v <= u)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// A variable bound that holds with equality at a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TightBound {
    pub var: usize,
    pub side: BoundSide,
}

/// Row multipliers proving `A x = b` unsatisfiable over the box: combining
/// the equality rows with these weights bounds `y·Ax` strictly away from
/// `y·b` for every point of the box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarkasCertificate {
    pub row_multipliers: Vec<Rational>,
}

impl FarkasCertificate {
    /// Exact verification. Accepts either orientation of the separating
    /// combination.
    pub fn verify(&self, sys: &LinearSystem) -> bool {
        let y = &self.row_multipliers;
        if y.len() != sys.equalities.len() {
            return false;
        }
        let mut value = Rational::zero();
        let mut combined = vec![Rational::zero(); sys.num_vars];
        for (mult, (row, rhs)) in y.iter().zip(&sys.equalities) {
            value += mult * rhs;
            for (c, coeff) in combined.iter_mut().zip(row) {
                *c += mult * coeff;
            }
        }
        // Range of y·Ax over the box; None marks an infinite end.
        let mut max_sum = Some(Rational::zero());
        let mut min_sum = Some(Rational::zero());
        for (j, c) in combined.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let at_lower = c * &sys.lower[j];
            let at_upper = sys.upper[j].as_ref().map(|u| c * u);
            let (lo, hi) = if c.is_positive() {
                (Some(at_lower), at_upper)
            } else {
                (at_upper, Some(at_lower))
            };
            max_sum = match (max_sum, hi) {
                (Some(m), Some(h)) => Some(m + h),
                _ => None,
            };
            min_sum = match (min_sum, lo) {
                (Some(m), Some(l)) => Some(m + l),
                _ => None,
            };
        }
        max_sum.is_some_and(|m| m < value) || min_sum.is_some_and(|m| m > value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    FeasibleVertex,
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub vertex: Option<Vec<Rational>>,
    pub objective_value: Option<Rational>,
    /// Variable bounds tight at the vertex; equality rows are always tight.
    pub tight: Vec<TightBound>,
    pub certificate: Option<FarkasCertificate>,
}

impl LpOutcome {
    pub fn vertex(&self) -> &[Rational] {
        self.vertex.as_deref().expect("outcome has no vertex")
    }
}

fn tight_bounds(sys: &LinearSystem, x: &[Rational]) -> Vec<TightBound> {
    let mut tight = Vec::new();
    for j in 0..sys.num_vars {
        if x[j] == sys.lower[j] {
            tight.push(TightBound { var: j, side: BoundSide::Lower });
        }
        if sys.upper[j].as_ref() == Some(&x[j]) {
            tight.push(TightBound { var: j, side: BoundSide::Upper });
        }
    }
    tight
}

/// Finds a vertex of the feasible region, or an exact infeasibility
/// certificate. With an objective the vertex maximizing it is returned.
pub fn solve_vertex(sys: &LinearSystem) -> Result<LpOutcome> {
    sys.validate()?;
    let mut tab = Tableau::phase_one(sys);
    tab.run()?;
    let infeasibility = tab.objective_value();
    if infeasibility.is_positive() {
        let certificate = FarkasCertificate { row_multipliers: tab.dual() };
        if !certificate.verify(sys) {
            return Err(Error::InternalInvariant(
                "phase-one dual does not certify infeasibility".into(),
            ));
        }
        return Ok(LpOutcome {
            status: LpStatus::Infeasible,
            vertex: None,
            objective_value: None,
            tight: Vec::new(),
            certificate: Some(certificate),
        });
    }
    tab.seal_artificials();

    let (status, objective_value) = match &sys.objective {
        None => (LpStatus::FeasibleVertex, None),
        Some(obj) => {
            tab.set_objective(obj);
            tab.run()?;
            (LpStatus::Optimal, Some(-tab.objective_value()))
        }
    };
    let x: Vec<Rational> = tab.x[..sys.num_vars].to_vec();
    debug_assert!(sys.is_feasible(&x));
    Ok(LpOutcome {
        status,
        vertex: Some(x.clone()),
        objective_value,
        tight: tight_bounds(sys, &x),
        certificate: None,
    })
}

/// Walks from a vertex along the edge obtained by relaxing one tight bound
/// of variable `relax` (the sign of `direction` says which way to move) while
/// keeping every other tight bound tight, until another bound becomes tight.
/// Returns the new vertex and the bound that stopped the walk.
pub fn move_to_adjacent_vertex(
    sys: &LinearSystem,
    at: &LpOutcome,
    relax: usize,
    direction: &Rational,
) -> Result<(LpOutcome, TightBound)> {
    sys.validate()?;
    if relax >= sys.num_vars {
        return Err(Error::DimensionMismatch(format!(
            "relax index {relax} out of range for {} variables",
            sys.num_vars
        )));
    }
    if direction.is_zero() {
        return Err(Error::MalformedInput("direction sign must be nonzero".into()));
    }
    let x = at
        .vertex
        .as_ref()
        .ok_or_else(|| Error::MalformedInput("outcome carries no vertex".into()))?;
    if !sys.is_feasible(x) {
        return Err(Error::MalformedInput("vertex does not satisfy the system".into()));
    }

    let at_lower = x[relax] == sys.lower[relax];
    let at_upper = sys.upper[relax].as_ref() == Some(&x[relax]);
    if !at_lower && !at_upper {
        return Err(Error::NotTightBound(relax));
    }
    let increasing = direction.is_positive();
    // Moving out of the box is blocked immediately.
    if (at_lower && at_upper) || (at_lower && !increasing) || (at_upper && increasing) {
        return Err(Error::BlockedEdge);
    }

    // Direction: null space of every remaining tight constraint, with the
    // relaxed coordinate pinned to the requested sign.
    let mut rows: Vec<Vec<Rational>> = sys.equalities.iter().map(|(r, _)| r.clone()).collect();
    for j in 0..sys.num_vars {
        if j == relax {
            continue;
        }
        let tight = x[j] == sys.lower[j] || sys.upper[j].as_ref() == Some(&x[j]);
        if tight {
            let mut unit = vec![Rational::zero(); sys.num_vars];
            unit[j] = Rational::one();
            rows.push(unit);
        }
    }
    let sign = if increasing { Rational::one() } else { -Rational::one() };
    let reduced: Vec<Vec<Rational>> = rows
        .iter()
        .map(|r| {
            let mut row = r.clone();
            row.remove(relax);
            row
        })
        .collect();
    let rhs: Vec<Rational> = rows.iter().map(|r| -(&sign * &r[relax])).collect();
    let Some(partial) = linalg::solve(&reduced, &rhs) else {
        return Err(Error::BlockedEdge);
    };
    let mut delta = partial;
    delta.insert(relax, sign);

    // Ratio test: first bound hit along x + t*delta.
    let mut best: Option<(Rational, TightBound)> = None;
    for (j, d) in delta.iter().enumerate() {
        if d.is_zero() {
            continue;
        }
        let candidate = if d.is_negative() {
            Some(((&x[j] - &sys.lower[j]) / &-d.clone(), BoundSide::Lower))
        } else {
            sys.upper[j].as_ref().map(|u| ((u - &x[j]) / d, BoundSide::Upper))
        };
        if let Some((t, side)) = candidate {
            let replace = match &best {
                None => true,
                Some((bt, _)) => t < *bt,
            };
            if replace {
                best = Some((t, TightBound { var: j, side }));
            }
        }
    }
    let Some((step, stopped_by)) = best else {
        return Err(Error::UnboundedEdge);
    };
    let new_x: Vec<Rational> = x
        .iter()
        .zip(&delta)
        .map(|(xi, di)| xi + &(di * &step))
        .collect();
    debug_assert!(sys.is_feasible(&new_x));
    let outcome = LpOutcome {
        status: LpStatus::FeasibleVertex,
        vertex: Some(new_x.clone()),
        objective_value: None,
        tight: tight_bounds(sys, &new_x),
        certificate: None,
    };
    Ok((outcome, stopped_by))
}

/// Dense bounded-variable simplex tableau. Columns `0..n_real` are the
/// system's variables, the rest are phase-one artificials.
struct Tableau {
    rows: usize,
    n_real: usize,
    a: Vec<Vec<Rational>>,
    lower: Vec<Rational>,
    upper: Vec<Option<Rational>>,
    cost: Vec<Rational>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    x: Vec<Rational>,
}

impl Tableau {
    fn phase_one(sys: &LinearSystem) -> Self {
        let rows = sys.equalities.len();
        let n = sys.num_vars;
        let cols = n + rows;
        let mut a = vec![vec![Rational::zero(); cols]; rows];
        let b: Vec<Rational> = sys.equalities.iter().map(|(_, rhs)| rhs.clone()).collect();
        for (i, (row, _)) in sys.equalities.iter().enumerate() {
            a[i][..n].clone_from_slice(row);
        }
        let mut lower = sys.lower.clone();
        let mut upper = sys.upper.clone();
        lower.extend(std::iter::repeat_with(Rational::zero).take(rows));
        upper.extend(std::iter::repeat_with(|| None).take(rows));
        let mut cost = vec![Rational::zero(); cols];
        let mut x = vec![Rational::zero(); cols];
        x[..n].clone_from_slice(&sys.lower);

        let mut basis = Vec::with_capacity(rows);
        let mut in_basis = vec![false; cols];
        for i in 0..rows {
            let residual = &b[i] - &linalg::dot(&a[i][..n], &x[..n]);
            a[i][n + i] = if residual.is_negative() { -Rational::one() } else { Rational::one() };
            x[n + i] = residual.abs();
            cost[n + i] = Rational::one();
            basis.push(n + i);
            in_basis[n + i] = true;
        }
        Tableau { rows, n_real: n, a, lower, upper, cost, basis, in_basis, x }
    }

    fn objective_value(&self) -> Rational {
        linalg::dot(&self.cost, &self.x)
    }

    /// `y` with `y^T B = c_B^T` for the current basis.
    fn dual(&self) -> Vec<Rational> {
        let bt: Vec<Vec<Rational>> = self
            .basis
            .iter()
            .map(|&col| (0..self.rows).map(|i| self.a[i][col].clone()).collect())
            .collect();
        let c_b: Vec<Rational> = self.basis.iter().map(|&col| self.cost[col].clone()).collect();
        linalg::solve(&bt, &c_b).expect("basis matrix is invertible")
    }

    /// Clamp artificial columns to zero so phase two can never revive them.
    fn seal_artificials(&mut self) {
        for j in self.n_real..self.lower.len() {
            self.upper[j] = Some(Rational::zero());
        }
    }

    fn set_objective(&mut self, maximize: &[Rational]) {
        for j in 0..self.lower.len() {
            self.cost[j] =
                if j < self.n_real { -maximize[j].clone() } else { Rational::zero() };
        }
    }

    fn column(&self, j: usize) -> Vec<Rational> {
        (0..self.rows).map(|i| self.a[i][j].clone()).collect()
    }

    /// Minimizes the current cost with Bland's rule until optimal.
    fn run(&mut self) -> Result<()> {
        loop {
            let y = self.dual();
            let mut entering = None;
            for j in 0..self.lower.len() {
                if self.in_basis[j] || self.upper[j].as_ref() == Some(&self.lower[j]) {
                    continue;
                }
                let reduced = &self.cost[j] - &linalg::dot(&y, &self.column(j));
                let at_upper = self.upper[j].as_ref() == Some(&self.x[j]);
                if !at_upper && reduced.is_negative() {
                    entering = Some((j, true));
                    break;
                }
                if at_upper && reduced.is_positive() {
                    entering = Some((j, false));
                    break;
                }
            }
            let Some((j, increasing)) = entering else {
                return Ok(());
            };
            self.pivot(j, increasing)?;
        }
    }

    fn pivot(&mut self, entering: usize, increasing: bool) -> Result<()> {
        let bt: Vec<Vec<Rational>> = (0..self.rows)
            .map(|i| self.basis.iter().map(|&col| self.a[i][col].clone()).collect())
            .collect();
        let w = linalg::solve(&bt, &self.column(entering)).expect("basis matrix is invertible");
        let sigma = if increasing { Rational::one() } else { -Rational::one() };

        // Smallest variable index among the tightest limits (Bland).
        let mut best: Option<(Rational, usize, bool)> = None; // (t, var, is_flip)
        let mut consider = |t: Rational, var: usize, is_flip: bool| {
            let replace = match &best {
                None => true,
                Some((bt, bvar, _)) => t < *bt || (t == *bt && var < *bvar),
            };
            if replace {
                best = Some((t, var, is_flip));
            }
        };
        if let Some(u) = &self.upper[entering] {
            consider(u - &self.lower[entering], entering, true);
        }
        for (k, wk) in w.iter().enumerate() {
            if wk.is_zero() {
                continue;
            }
            let var = self.basis[k];
            let change = -(&sigma * wk);
            if change.is_negative() {
                consider((&self.x[var] - &self.lower[var]) / change.abs(), var, false);
            } else if let Some(u) = &self.upper[var] {
                consider((u - &self.x[var]) / &change, var, false);
            }
        }
        let Some((t, leaving_var, is_flip)) = best else {
            return Err(Error::UnboundedObjective);
        };

        self.x[entering] = &self.x[entering] + &(&sigma * &t);
        for (k, wk) in w.iter().enumerate() {
            let var = self.basis[k];
            let change = -(&sigma * &(wk * &t));
            self.x[var] = &self.x[var] + &change;
        }
        if !is_flip {
            let row = self
                .basis
                .iter()
                .position(|&v| v == leaving_var)
                .expect("leaving variable is basic");
            self.in_basis[leaving_var] = false;
            self.in_basis[entering] = true;
            self.basis[row] = entering;
        }
        Ok(())
    }
}
