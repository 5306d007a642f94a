//! Sample-free oracles: robust policy evaluation, robust optimal control,
//! worst-case stationary analysis, the policy sub-gradient and the PL
//! constant.

mod diagnostics;

pub use diagnostics::{
    apply_optimal_operator, contraction_diagnostic, fluctuation_matrix, spectral_radius,
    truncated_extremal_seminorm, ContractionReport, ExtremalConfig, ExtremalEstimate, ExtremalSummary,
};

use serde::{Deserialize, Serialize};

use crate::ambiguity::{worst_case_kernel, AmbiguitySet};
use crate::error::{Error, Result};
use crate::mdp::{induced_chain, span, stationary_distribution, EvalResult, Policy, QTable, StationaryDist, TabularMdp, ValueTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanningTolerance {
    pub span_residual_tol: f64,
    pub max_iters: usize,
}

impl Default for PlanningTolerance {
    fn default() -> Self {
        PlanningTolerance {
            span_residual_tol: 1e-10,
            max_iters: 1_000_000,
        }
    }
}

impl PlanningTolerance {
    fn validate(&self) -> Result<()> {
        if self.span_residual_tol.is_nan() || self.span_residual_tol <= 0.0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig("planning tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Iteration count and the final span residual of a fixed-point solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub span_residual: f64,
}

/// Robust Bellman operator with `g = 0`:
/// `(T₀V)(s) = Σ_a π(a|s)[r(s,a) + σ_{P^a_s}(V)]`.
pub fn apply_policy_operator(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, v: &[f64]) -> Result<Vec<f64>> {
    (0..mdp.num_states())
        .map(|s| {
            let mut total = 0.0;
            for (a, &w) in policy.row(s).iter().enumerate() {
                if w > 0.0 {
                    total += w * (mdp.reward(s, a) + set.support_value(mdp.row(s, a), v)?);
                }
            }
            Ok(total)
        })
        .collect()
}

/// Anchored relative value iteration for the robust Bellman equation of a
/// fixed policy, with iteration statistics.
pub fn robust_policy_eval_with_stats(
    mdp: &TabularMdp,
    policy: &Policy,
    set: &AmbiguitySet,
    tol: &PlanningTolerance,
) -> Result<(EvalResult, SolveStats)> {
    tol.validate()?;
    policy.check_shape(mdp)?;
    let anchor = 0;
    let mut v = vec![0.0; mdp.num_states()];
    let mut residual = f64::INFINITY;
    for k in 1..=tol.max_iters {
        let w = apply_policy_operator(mdp, policy, set, &v)?;
        let diff: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - b).collect();
        residual = span(&diff);
        if !residual.is_finite() {
            return Err(Error::NonFinite("robust policy evaluation"));
        }
        if residual <= tol.span_residual_tol {
            let gain = diff.iter().sum::<f64>() / diff.len() as f64;
            let eval = EvalResult {
                gain,
                bias: ValueTable(v),
                anchor,
            };
            let stats = SolveStats {
                iterations: k,
                span_residual: residual,
            };
            return Ok((eval, stats));
        }
        let base = w[anchor];
        v = w.into_iter().map(|x| x - base).collect();
    }
    Err(Error::MaxIters {
        what: "robust policy evaluation",
        iters: tol.max_iters,
        residual,
    })
}

/// Robust gain and anchored bias `(g, V)` of `policy`, `V(0) = 0`.
pub fn robust_policy_eval_exact(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, tol: &PlanningTolerance) -> Result<EvalResult> {
    robust_policy_eval_with_stats(mdp, policy, set, tol).map(|(e, _)| e)
}

/// `max_s |V(s) − Σ_a π(a|s)(r(s,a) − g + σ(V))|`.
pub fn policy_bellman_residual(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, eval: &EvalResult) -> Result<f64> {
    let t = apply_policy_operator(mdp, policy, set, eval.bias.as_slice())?;
    Ok(t.iter()
        .zip(eval.bias.as_slice())
        .map(|(tv, v)| (v - (tv - eval.gain)).abs())
        .fold(0.0, f64::max))
}

/// Optimal robust gain, `Q*` anchored at `(0, 0)`, and its greedy policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSolution {
    pub gain: f64,
    pub q: QTable,
    pub policy: Policy,
    pub stats: SolveStats,
}

/// JSON export of an oracle solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub g: f64,
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<Vec<f64>>,
    pub residual: f64,
    pub iterations: usize,
}

impl ControlSolution {
    /// Export with the optimal Bellman residual measured on the returned
    /// solution.
    pub fn report(&self, mdp: &TabularMdp, set: &AmbiguitySet) -> Result<OracleReport> {
        Ok(OracleReport {
            g: self.gain,
            v: self.q.greedy_values().0,
            q: self.q.clone().into(),
            policy: self.policy.clone().into(),
            residual: optimal_bellman_residual(mdp, set, &self.q, self.gain)?,
            iterations: self.stats.iterations,
        })
    }
}

/// Anchored relative Q-iteration `Q ← HQ − (HQ)(s0,a0)·e` with exact `σ`.
pub fn robust_optimal_control_exact(mdp: &TabularMdp, set: &AmbiguitySet, tol: &PlanningTolerance) -> Result<ControlSolution> {
    tol.validate()?;
    let (s0, a0) = (0, 0);
    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut residual = f64::INFINITY;
    for k in 1..=tol.max_iters {
        let hq = apply_optimal_operator(mdp, set, &q)?;
        residual = hq.span_diff(&q);
        if !residual.is_finite() {
            return Err(Error::NonFinite("robust Q-iteration"));
        }
        if residual <= tol.span_residual_tol {
            let gain = hq.get(s0, a0) - q.get(s0, a0);
            let policy = q.greedy_policy();
            return Ok(ControlSolution {
                gain,
                q,
                policy,
                stats: SolveStats {
                    iterations: k,
                    span_residual: residual,
                },
            });
        }
        q = hq;
        q.anchor_at(s0, a0);
    }
    Err(Error::MaxIters {
        what: "robust Q-iteration",
        iters: tol.max_iters,
        residual,
    })
}

/// `max_{s,a} |Q(s,a) − (r(s,a) − g + σ_{P^a_s}(V_Q))|`.
pub fn optimal_bellman_residual(mdp: &TabularMdp, set: &AmbiguitySet, q: &QTable, gain: f64) -> Result<f64> {
    let hq = apply_optimal_operator(mdp, set, q)?;
    Ok(q.values()
        .iter()
        .zip(hq.values())
        .map(|(qv, h)| (qv - (h - gain)).abs())
        .fold(0.0, f64::max))
}

/// `Q^π(s,a) = r(s,a) − g + σ_{P^a_s}(V)` from an exact evaluation.
pub fn q_from_eval(mdp: &TabularMdp, set: &AmbiguitySet, eval: &EvalResult) -> Result<QTable> {
    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let sigma = set.support_value(mdp.row(s, a), eval.bias.as_slice())?;
            q.set(s, a, mdp.reward(s, a) - eval.gain + sigma);
        }
    }
    Ok(q)
}

/// Exact robust Q-function of `policy`.
pub fn robust_q_exact(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, tol: &PlanningTolerance) -> Result<QTable> {
    let eval = robust_policy_eval_exact(mdp, policy, set, tol)?;
    q_from_eval(mdp, set, &eval)
}

/// Stationary distribution of `policy` under its worst-case kernel.
pub fn worst_case_stationary(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, tol: &PlanningTolerance) -> Result<StationaryDist> {
    let eval = robust_policy_eval_exact(mdp, policy, set, tol)?;
    stationary_under_worst(mdp, policy, set, &eval)
}

fn stationary_under_worst(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, eval: &EvalResult) -> Result<StationaryDist> {
    let kernel = worst_case_kernel(mdp, eval.bias.as_slice(), set)?;
    let chain = induced_chain(mdp, policy, &kernel)?;
    stationary_distribution(&chain)
}

/// Sub-gradient `∇g(s,a) = d^π_P(s)·Q^π(s,a)` of the robust gain.
pub fn frechet_subgradient(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, tol: &PlanningTolerance) -> Result<QTable> {
    let eval = robust_policy_eval_exact(mdp, policy, set, tol)?;
    let d = stationary_under_worst(mdp, policy, set, &eval)?;
    let q = q_from_eval(mdp, set, &eval)?;
    Ok(QTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| d.probs[s] * q.get(s, a)))
}

/// `C_PL = max_s d^{π*}(s) / d^π(s)` with worst-case stationary
/// distributions of both policies.
pub fn pl_constant(mdp: &TabularMdp, policy: &Policy, optimal: &Policy, set: &AmbiguitySet, tol: &PlanningTolerance) -> Result<f64> {
    let d = worst_case_stationary(mdp, policy, set, tol)?;
    let d_star = worst_case_stationary(mdp, optimal, set, tol)?;
    Ok(d_star
        .probs
        .iter()
        .zip(&d.probs)
        .map(|(a, b)| a / b)
        .fold(0.0, f64::max))
}
