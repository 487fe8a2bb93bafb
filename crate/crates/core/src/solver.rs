//! Howard policy iteration for `rho v - H(x, Dv, D^2 v) = 0` on a truncated
//! 1-D grid.
//!
//! The generator is discretized with an upwind first difference for the drift
//! (forward where `b >= 0`, backward where `b < 0`) and a central second
//! difference for the diffusion. Every interior row of `rho I - L` then has a
//! positive diagonal, non-positive off-diagonals and a dominance gap of exactly
//! `rho`. The two end nodes carry a homogeneous Neumann closure
//! (`v_0 = v_1`, `v_{N-1} = v_{N-2}`), folded into the first and last interior
//! rows before the tridiagonal solve.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::grid::{FeedbackPolicy, SpatialGrid, ValueField};
use crate::problem::{ControlGrid, ControlProblem};
use crate::tridiag::solve_tridiagonal;

/// One interior row of `(rho I - L_u) v = l_u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub diag: f64,
    pub lower: f64,
    pub upper: f64,
    pub rhs: f64,
}

impl Row {
    /// `diag v_i + lower v_{i-1} + upper v_{i+1}`.
    #[inline]
    pub fn apply(&self, v_prev: f64, v: f64, v_next: f64) -> f64 {
        self.diag * v + self.lower * v_prev + self.upper * v_next
    }

    /// Dominance gap `diag - |lower| - |upper|`.
    pub fn gap(&self) -> f64 {
        self.diag - self.lower.abs() - self.upper.abs()
    }
}

pub fn discretize_row(
    problem: &ControlProblem,
    grid: &SpatialGrid,
    i: usize,
    u: f64,
) -> Result<Row, SolveError> {
    if i == 0 || i + 1 >= grid.len() {
        return Err(SolveError::input("node", format!("{i} is not an interior node")));
    }
    let x = grid.node(i);
    let (b, s, l) = problem.coefficients(x, u)?;
    Ok(assemble(problem.rho, grid.spacing(), b, s, l))
}

#[inline]
fn assemble(rho: f64, h: f64, b: f64, s: f64, l: f64) -> Row {
    let d = 0.5 * s * s / (h * h);
    let fwd = b.max(0.0) / h;
    let bwd = (-b).max(0.0) / h;
    Row { diag: rho + 2.0 * d + fwd + bwd, lower: -d - bwd, upper: -d - fwd, rhs: l }
}

/// Rows for every (interior node, control) pair, assembled once per solve.
struct RowTable {
    k: usize,
    rows: Vec<Row>,
}

impl RowTable {
    fn build(problem: &ControlProblem, grid: &SpatialGrid, controls: &ControlGrid) -> Result<Self, SolveError> {
        let k = controls.len();
        let mut rows = Vec::with_capacity(grid.len() * k);
        for i in 0..grid.len() {
            for &u in controls.points() {
                if i == 0 || i + 1 == grid.len() {
                    rows.push(Row { diag: 1.0, lower: 0.0, upper: 0.0, rhs: 0.0 });
                } else {
                    rows.push(discretize_row(problem, grid, i, u)?);
                }
            }
        }
        Ok(RowTable { k, rows })
    }

    #[inline]
    fn row(&self, i: usize, j: usize) -> &Row {
        &self.rows[i * self.k + j]
    }

    fn evaluate(&self, grid: &SpatialGrid, indices: &[usize]) -> Result<Vec<f64>, SolveError> {
        let rows: Vec<Row> = (1..grid.len() - 1).map(|i| *self.row(i, indices[i])).collect();
        evaluate_rows(grid, rows)
    }

    fn improve(&self, v: &[f64], indices: &mut [usize]) {
        let n = v.len();
        for i in 1..n - 1 {
            indices[i] = argmin_at(v, i, (0..self.k).map(|j| self.row(i, j)));
        }
        indices[0] = indices[1];
        indices[n - 1] = indices[n - 2];
    }

    fn min_discrete_h(&self, rho: f64, v: &[f64], i: usize) -> f64 {
        (0..self.k)
            .map(|j| discrete_hamiltonian(rho, self.row(i, j), v, i))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Discretized current value Hamiltonian `(L_u v)_i + l_u`.
#[inline]
fn discrete_hamiltonian(rho: f64, row: &Row, v: &[f64], i: usize) -> f64 {
    rho * v[i] - row.apply(v[i - 1], v[i], v[i + 1]) + row.rhs
}

/// Smallest index minimizing the discretized Hamiltonian at node `i`.
#[inline]
fn argmin_at<'a>(v: &[f64], i: usize, rows: impl Iterator<Item = &'a Row>) -> usize {
    // rho v_i is common to all controls and dropped
    let mut best = (f64::INFINITY, 0);
    for (j, row) in rows.enumerate() {
        let h = row.rhs - row.apply(v[i - 1], v[i], v[i + 1]);
        if h < best.0 {
            best = (h, j);
        }
    }
    best.1
}

/// Solves the interior system with the Neumann closure folded in.
fn evaluate_rows(grid: &SpatialGrid, rows: Vec<Row>) -> Result<Vec<f64>, SolveError> {
    let m = rows.len();
    let mut lower: Vec<f64> = rows.iter().map(|r| r.lower).collect();
    let mut diag: Vec<f64> = rows.iter().map(|r| r.diag).collect();
    let mut upper: Vec<f64> = rows.iter().map(|r| r.upper).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.rhs).collect();
    diag[0] += lower[0];
    lower[0] = 0.0;
    diag[m - 1] += upper[m - 1];
    upper[m - 1] = 0.0;
    let inner = solve_tridiagonal(&lower, &diag, &upper, &rhs).map_err(|e| match e {
        SolveError::Singular { row } => SolveError::Singular { row: row + 1 },
        other => other,
    })?;
    let mut v = Vec::with_capacity(grid.len());
    v.push(inner[0]);
    v.extend_from_slice(&inner);
    v.push(inner[m - 1]);
    Ok(v)
}

/// Value of a fixed feedback policy: solves `(rho I - L_psi) v = l_psi`.
pub fn policy_evaluation(
    problem: &ControlProblem,
    grid: &SpatialGrid,
    policy: &FeedbackPolicy,
) -> Result<ValueField, SolveError> {
    if policy.grid() != grid {
        return Err(SolveError::input("policy", "policy grid differs from solve grid"));
    }
    let rows = (1..grid.len() - 1)
        .map(|i| discretize_row(problem, grid, i, policy.control_at_node(i)))
        .collect::<Result<Vec<_>, _>>()?;
    ValueField::new(*grid, evaluate_rows(grid, rows)?)
}

/// Per-node argmin of the discretized Hamiltonian, using the same stencil as
/// [`policy_evaluation`]. End nodes copy their neighbour.
pub fn policy_improvement(
    problem: &ControlProblem,
    grid: &SpatialGrid,
    value: &ValueField,
    controls: &ControlGrid,
) -> Result<FeedbackPolicy, SolveError> {
    if value.grid() != grid {
        return Err(SolveError::input("value", "value grid differs from solve grid"));
    }
    let n = grid.len();
    let v = value.values();
    let mut indices = vec![0; n];
    for i in 1..n - 1 {
        let rows = controls
            .points()
            .iter()
            .map(|&u| discretize_row(problem, grid, i, u))
            .collect::<Result<Vec<_>, _>>()?;
        indices[i] = argmin_at(v, i, rows.iter());
    }
    indices[0] = indices[1];
    indices[n - 1] = indices[n - 2];
    FeedbackPolicy::new(*grid, controls.clone(), indices)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Sup-norm change between successive evaluations that ends the iteration.
    pub tol: f64,
    /// Constant initial value field.
    pub initial_value: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iter: 200, tol: 1e-9, initial_value: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change of the value field per iteration.
    pub changes: Vec<f64>,
    /// Nodes where an evaluation after the first exceeded its predecessor.
    pub monotonicity_violations: usize,
    /// Sup over interior nodes of `|rho v_i - H_discrete(x_i, v)|`.
    pub residual: f64,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub value: ValueField,
    pub policy: FeedbackPolicy,
    pub report: SolveReport,
}

/// Howard iteration from a constant initial field.
pub fn solve_hjb(
    problem: &ControlProblem,
    grid: &SpatialGrid,
    controls: &ControlGrid,
    opts: &SolveOptions,
) -> Result<Solution, SolveError> {
    if !(opts.tol > 0.0) {
        return Err(SolveError::input("tol", "must be positive"));
    }
    if opts.max_iter == 0 {
        return Err(SolveError::input("max_iter", "must be at least 1"));
    }
    let start = Instant::now();
    let table = RowTable::build(problem, grid, controls)?;
    let n = grid.len();
    let mut v = vec![opts.initial_value; n];
    let mut indices = vec![0usize; n];
    let mut changes = Vec::new();
    let mut violations = 0;
    let mut converged = false;

    for iter in 1..=opts.max_iter {
        table.improve(&v, &mut indices);
        let next = table.evaluate(grid, &indices)?;
        let change = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if iter > 1 {
            let slack = 1e-11 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
            violations += next.iter().zip(&v).filter(|(a, b)| **a > **b + slack).count();
        }
        changes.push(change);
        v = next;
        if change <= opts.tol {
            converged = true;
            break;
        }
    }

    table.improve(&v, &mut indices);
    let residual = (1..n - 1)
        .map(|i| (problem.rho * v[i] - table.min_discrete_h(problem.rho, &v, i)).abs())
        .fold(0.0, f64::max);
    let report = SolveReport {
        iterations: changes.len(),
        converged,
        monotonicity_violations: violations,
        residual,
        wall_time_secs: start.elapsed().as_secs_f64(),
        changes,
    };
    let solution = Solution {
        value: ValueField::new(*grid, v)?,
        policy: FeedbackPolicy::new(*grid, controls.clone(), indices)?,
        report,
    };
    if converged {
        Ok(solution)
    } else {
        Err(SolveError::NotConverged {
            iterations: solution.report.iterations,
            last_change: *solution.report.changes.last().unwrap_or(&f64::NAN),
            last: Box::new(solution),
        })
    }
}

/// Constant start at `sup |l| / rho` (declared bound, else the largest
/// |l| seen at the nodes).
pub fn saturating_initial_value(
    problem: &ControlProblem,
    grid: &SpatialGrid,
    controls: &ControlGrid,
) -> Result<f64, SolveError> {
    if let Some(b) = problem.value_bound() {
        return Ok(b);
    }
    let mut m: f64 = 0.0;
    for x in grid.nodes() {
        for &u in controls.points() {
            m = m.max(problem.eval_cost(x, u)?.abs());
        }
    }
    Ok(m / problem.rho)
}

/// Pointwise strong-solution residual `rho v - H(x, Dv, D^2 v)` with
/// central differences, at interior nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualField {
    /// `None` at the two end nodes.
    pub residual: Vec<Option<f64>>,
    /// False at end nodes and within one spacing of a coefficient breakpoint.
    pub included: Vec<bool>,
}

impl ResidualField {
    pub fn masked_sup(&self) -> f64 {
        self.residual
            .iter()
            .zip(&self.included)
            .filter(|(_, inc)| **inc)
            .filter_map(|(r, _)| r.map(f64::abs))
            .fold(0.0, f64::max)
    }

    /// Masked sup restricted to nodes satisfying `keep`.
    pub fn masked_sup_where(&self, grid: &SpatialGrid, keep: impl Fn(f64) -> bool) -> f64 {
        (0..grid.len())
            .filter(|&i| self.included[i] && keep(grid.node(i)))
            .filter_map(|i| self.residual[i].map(f64::abs))
            .fold(0.0, f64::max)
    }
}

pub fn hjb_residual_field(
    problem: &ControlProblem,
    value: &ValueField,
    controls: &ControlGrid,
) -> Result<ResidualField, SolveError> {
    let grid = value.grid();
    let n = grid.len();
    let breakpoints = problem.breakpoints();
    let mut residual = vec![None; n];
    let mut included = vec![false; n];
    for i in 1..n - 1 {
        let x = grid.node(i);
        let (h, _) = problem.hamiltonian_min(x, value.dv(i), value.d2v(i), controls)?;
        residual[i] = Some(problem.rho * value.values()[i] - h);
        included[i] = !grid.near_breakpoint(i, &breakpoints);
    }
    Ok(ResidualField { residual, included })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientExpr;
    use crate::problem::{ControlSet, GrowthBound, ProblemMetadata, SeparableCoeff};
    use approx::assert_abs_diff_eq;

    fn problem(b: SeparableCoeff, s: f64, l: SeparableCoeff, rho: f64, growth: GrowthBound) -> ControlProblem {
        ControlProblem::new(
            rho,
            ControlSet::interval(0.0, 1.0),
            b,
            SeparableCoeff::constant(s),
            l,
            ProblemMetadata {
                state_dim: 1,
                ellipticity: s.abs(),
                allow_degenerate: false,
                drift_bound: None,
                diffusion_bound: Some(s.abs()),
                cost_bound: None,
                growth,
            },
        )
        .unwrap()
    }

    fn unit_cost() -> ControlProblem {
        problem(
            SeparableCoeff::constant(0.0),
            1.0,
            SeparableCoeff::constant(1.0),
            0.5,
            GrowthBound { c: 1.0, m: 0.0 },
        )
    }

    #[test]
    fn row_examples() {
        let p = problem(
            SeparableCoeff::constant(0.0),
            2f64.sqrt(),
            SeparableCoeff::constant(0.7),
            1.0,
            GrowthBound { c: 1.0, m: 0.0 },
        );
        let g = SpatialGrid::new(0.0, 4.0, 5).unwrap();
        let r = discretize_row(&p, &g, 2, 0.0).unwrap();
        assert_abs_diff_eq!(r.diag, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.lower, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.upper, -1.0, epsilon = 1e-12);
        assert_eq!(r.rhs, 0.7);
        assert!(discretize_row(&p, &g, 0, 0.0).is_err());
        assert!(discretize_row(&p, &g, 4, 0.0).is_err());

        // b = 1 with small sigma: upwind drift only touches diag and upper
        let lam = 1e-3;
        let p = problem(SeparableCoeff::constant(1.0), lam, SeparableCoeff::constant(0.0), 1.0, GrowthBound { c: 1.0, m: 0.0 });
        let g = SpatialGrid::new(0.0, 1.0, 11).unwrap();
        let r = discretize_row(&p, &g, 5, 0.0).unwrap();
        let d = 0.5 * lam * lam / 0.01;
        assert_abs_diff_eq!(r.lower, -d, epsilon = 1e-12);
        assert_abs_diff_eq!(r.upper, -d - 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.diag, 1.0 + 2.0 * d + 10.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_problem_policy_evaluation() {
        let p = unit_cost();
        let g = SpatialGrid::new(-2.0, 2.0, 21).unwrap();
        let cg = ControlGrid::uniform(&p.control_set, 3).unwrap();
        for j in 0..3 {
            let policy = FeedbackPolicy::constant(g, cg.clone(), j).unwrap();
            let v = policy_evaluation(&p, &g, &policy).unwrap();
            for x in v.values() {
                assert_abs_diff_eq!(*x, 2.0, epsilon = 1e-12);
            }
        }
        let zero = problem(
            SeparableCoeff::constant(0.3),
            1.0,
            SeparableCoeff::constant(0.0),
            0.5,
            GrowthBound { c: 1.0, m: 0.0 },
        );
        let policy = FeedbackPolicy::constant(g, cg, 0).unwrap();
        assert!(policy_evaluation(&zero, &g, &policy).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_problem_solves_in_two_iterations() {
        let p = unit_cost();
        let g = SpatialGrid::new(-2.0, 2.0, 51).unwrap();
        let cg = ControlGrid::uniform(&p.control_set, 5).unwrap();
        let sol = solve_hjb(&p, &g, &cg, &SolveOptions::default()).unwrap();
        assert!(sol.report.iterations <= 2);
        for v in sol.value.values() {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-12);
        }
        let res = hjb_residual_field(&p, &sol.value, &cg).unwrap();
        assert!(res.masked_sup() < 1e-12);
    }

    #[test]
    fn improvement_singleton_and_bad_options() {
        let p = unit_cost();
        let g = SpatialGrid::new(-1.0, 1.0, 11).unwrap();
        let single = ControlGrid::uniform(&p.control_set, 1).unwrap();
        let v = ValueField::from_fn(g, |x| x.sin()).unwrap();
        let pol = policy_improvement(&p, &g, &v, &single).unwrap();
        assert!(pol.indices().iter().all(|&j| j == 0));
        let opts = SolveOptions { tol: 0.0, ..SolveOptions::default() };
        assert!(solve_hjb(&p, &g, &single, &opts).is_err());
        let opts = SolveOptions { max_iter: 0, ..SolveOptions::default() };
        assert!(solve_hjb(&p, &g, &single, &opts).is_err());
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let p = problem(
            SeparableCoeff::new(CoefficientExpr::constant(0.0), CoefficientExpr::polynomial(vec![-0.5, 1.0])),
            1.0,
            SeparableCoeff::new(
                CoefficientExpr::polynomial(vec![0.0, 0.0, 1.0]),
                CoefficientExpr::polynomial(vec![0.0, 0.0, 1.0]),
            ),
            1.0,
            GrowthBound { c: 2.0, m: 2.0 },
        );
        let g = SpatialGrid::new(-3.0, 3.0, 61).unwrap();
        let cg = ControlGrid::uniform(&p.control_set, 11).unwrap();
        let opts = SolveOptions { max_iter: 1, ..SolveOptions::default() };
        match solve_hjb(&p, &g, &cg, &opts) {
            Err(SolveError::NotConverged { iterations, last, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last.value.values().len(), 61);
            }
            other => panic!("expected non-convergence, got {:?}", other.map(|s| s.report)),
        }
    }
}
