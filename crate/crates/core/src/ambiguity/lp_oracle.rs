//! Dense LP formulations of each support function, used as an independent
//! check on the closed-form and dual solvers.

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};

use super::{check_inputs, AmbiguitySet};
use crate::error::{Error, Result};

/// Largest state count accepted by the transport-plan LP.
pub const LP_ORACLE_MAX_STATES: usize = 12;
const TV_ORACLE_MAX_STATES: usize = 200;

fn solve(problem: &Problem) -> Result<f64> {
    let outcome = problem.solve().map_err(|e| Error::LpFailure(e.to_string()))?;
    let solution = outcome
        .into_solution()
        .map_err(|_| Error::LpFailure("solve interrupted".into()))?;
    Ok(solution.objective())
}

/// Exact `min_{q ∈ P} q·V` without any of the structure the fast solvers use:
/// vertex enumeration for contamination, an ℓ1-split LP for total variation
/// and a transport-plan LP for Wasserstein.
pub fn support_lp_oracle(p: &[f64], v: &[f64], set: &AmbiguitySet) -> Result<f64> {
    check_inputs(p, v)?;
    let n = p.len();
    match set {
        AmbiguitySet::Contamination { radius } => {
            let nominal: f64 = p.iter().zip(v).map(|(a, b)| a * b).sum();
            Ok((0..n)
                .map(|x| (1.0 - radius) * nominal + radius * v[x])
                .fold(f64::INFINITY, f64::min))
        }
        AmbiguitySet::TotalVariation { radius } => {
            if n > TV_ORACLE_MAX_STATES {
                return Err(Error::OracleTooLarge(format!("TV oracle limited to {TV_ORACLE_MAX_STATES} states")));
            }
            let mut lp = Problem::new(OptimizationDirection::Minimize);
            let q: Vec<Variable> = v.iter().map(|&c| lp.add_var(c, (0.0, f64::INFINITY))).collect();
            let up: Vec<Variable> = (0..n).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
            let down: Vec<Variable> = (0..n).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
            for s in 0..n {
                // q_s − u⁺_s + u⁻_s = p_s
                lp.add_constraint([(q[s], 1.0), (up[s], -1.0), (down[s], 1.0)], ComparisonOp::Eq, p[s]);
            }
            let mut l1 = LinearExpr::empty();
            for s in 0..n {
                l1.add(up[s], 1.0);
                l1.add(down[s], 1.0);
            }
            lp.add_constraint(l1, ComparisonOp::Le, 2.0 * radius);
            let total: Vec<(Variable, f64)> = q.iter().map(|&x| (x, 1.0)).collect();
            lp.add_constraint(total, ComparisonOp::Eq, 1.0);
            solve(&lp)
        }
        AmbiguitySet::Wasserstein(w) => {
            if n > LP_ORACLE_MAX_STATES {
                return Err(Error::OracleTooLarge(format!(
                    "transport LP limited to {LP_ORACLE_MAX_STATES} states"
                )));
            }
            transport_lp(p, w.cost(), Some(w.budget()), |_, y| v[y], None)
        }
    }
}

/// `W_l(p, q)^l`, the optimal transport cost between two distributions under
/// the cost matrix `d^l`.
pub fn wasserstein_distance_pow(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    if p.len() != q.len() || cost.len() != p.len() {
        return Err(Error::ShapeMismatch("marginals and cost must agree".into()));
    }
    if p.len() > LP_ORACLE_MAX_STATES {
        return Err(Error::OracleTooLarge(format!(
            "transport LP limited to {LP_ORACLE_MAX_STATES} states"
        )));
    }
    transport_lp(p, cost, None, |s, y| cost[s][y], Some(q))
}

/// LP over plans `μ[s][y] ≥ 0` with row marginals `p`, optional column
/// marginals, and an optional cost budget.
fn transport_lp(
    p: &[f64],
    cost: &[Vec<f64>],
    budget: Option<f64>,
    objective: impl Fn(usize, usize) -> f64,
    columns: Option<&[f64]>,
) -> Result<f64> {
    let n = p.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let plan: Vec<Vec<Variable>> = (0..n)
        .map(|s| (0..n).map(|y| lp.add_var(objective(s, y), (0.0, f64::INFINITY))).collect())
        .collect();
    for s in 0..n {
        let row: Vec<(Variable, f64)> = plan[s].iter().map(|&x| (x, 1.0)).collect();
        lp.add_constraint(row, ComparisonOp::Eq, p[s]);
    }
    if let Some(q) = columns {
        for y in 0..n {
            let col: Vec<(Variable, f64)> = (0..n).map(|s| (plan[s][y], 1.0)).collect();
            lp.add_constraint(col, ComparisonOp::Eq, q[y]);
        }
    }
    if let Some(budget) = budget {
        let mut spend = LinearExpr::empty();
        for s in 0..n {
            for y in 0..n {
                if cost[s][y] != 0.0 {
                    spend.add(plan[s][y], cost[s][y]);
                }
            }
        }
        lp.add_constraint(spend, ComparisonOp::Le, budget);
    }
    solve(&lp)
}
