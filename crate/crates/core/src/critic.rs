//! Robust average-reward TD evaluation and the Q-function estimate built on
//! it.

use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguitySet;
use crate::error::{Error, Result};
use crate::mdp::{span, EvalResult, Policy, QTable, TabularMdp, ValueTable};
use crate::schedule::{is_snapshot, snapshot_period, Stepsize};
use crate::sim::{estimate_support, phase, GenerativeModel, MlmcConfig, SampleBudget, SampleStream, SigmaMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdConfig {
    pub iterations: u64,
    /// `η_t`, value phase.
    pub value_stepsize: Stepsize,
    /// `β_t`, gain phase.
    pub gain_stepsize: Stepsize,
    pub anchor: usize,
    pub mlmc: MlmcConfig,
    pub seed: u64,
    pub snapshot_period: Option<u64>,
    pub sigma_mode: SigmaMode,
    /// Independent `σ̂(V_K)` draws averaged per `(s, a)` by [`estimate_q`].
    pub q_draws: u32,
}

impl Default for TdConfig {
    fn default() -> Self {
        TdConfig {
            iterations: 10_000,
            value_stepsize: Stepsize::Harmonic {
                scale: 10.0,
                offset: 100.0,
            },
            gain_stepsize: Stepsize::Harmonic { scale: 1.0, offset: 1.0 },
            anchor: 0,
            mlmc: MlmcConfig::default(),
            seed: 0,
            snapshot_period: None,
            sigma_mode: SigmaMode::Sampled,
            q_draws: 64,
        }
    }
}

impl TdConfig {
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be ≥ 1".into()));
        }
        self.value_stepsize.validate()?;
        self.gain_stepsize.validate()?;
        self.mlmc.validate()?;
        if self.q_draws == 0 {
            return Err(Error::InvalidConfig("q_draws must be ≥ 1".into()));
        }
        if self.anchor >= mdp.num_states() {
            return Err(Error::InvalidConfig(format!("anchor state {} outside the MDP", self.anchor)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TdPhase {
    Value,
    Gain,
}

impl TdPhase {
    pub fn name(self) -> &'static str {
        match self {
            TdPhase::Value => "value",
            TdPhase::Gain => "gain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdSnapshot {
    pub phase: TdPhase,
    pub iter: u64,
    pub transitions: u64,
    pub gain: f64,
    /// `span(V_t − V^π)` against a reference, value phase only.
    pub span_err: Option<f64>,
    /// `|g_t − g^π|` against a reference, gain phase only.
    pub gain_err: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdOutput {
    pub eval: EvalResult,
    pub trace: Vec<TdSnapshot>,
    pub transitions: u64,
}

/// `Σ_a π(a|s)[r(s,a) + σ̂_{P^a_s}(V)]` for every state, one keyed stream
/// per `(s, a)`.
#[allow(clippy::too_many_arguments)]
fn sampled_backup(
    mdp: &TabularMdp,
    model: &GenerativeModel,
    policy: &Policy,
    set: &AmbiguitySet,
    cfg: &TdConfig,
    stream: &SampleStream,
    tag: u64,
    t: u64,
    v: &[f64],
    budget: &mut SampleBudget,
) -> Result<Vec<f64>> {
    (0..mdp.num_states())
        .map(|s| {
            let mut total = 0.0;
            for (a, &w) in policy.row(s).iter().enumerate() {
                if w > 0.0 {
                    let mut rng = stream.substream(tag, t, s, a);
                    let sigma = estimate_support(mdp, model, s, a, v, set, &cfg.mlmc, cfg.sigma_mode, &mut rng, budget)?;
                    total += w * (mdp.reward(s, a) + sigma);
                }
            }
            Ok(total)
        })
        .collect()
}

/// Two-phase robust TD: anchored value iteration with `g_0 = 0`, then gain
/// averaging of the TD error with `V_K` held fixed.
pub fn robust_td_run(
    mdp: &TabularMdp,
    policy: &Policy,
    set: &AmbiguitySet,
    cfg: &TdConfig,
    reference: Option<&EvalResult>,
) -> Result<TdOutput> {
    cfg.validate(mdp)?;
    policy.check_shape(mdp)?;
    let n = mdp.num_states();
    let model = GenerativeModel::new(mdp);
    let stream = SampleStream::new(cfg.seed);
    let period = snapshot_period(cfg.iterations, cfg.snapshot_period);
    let mut budget = SampleBudget::new();
    let mut trace = Vec::new();

    let mut v = vec![0.0; n];
    for t in 0..cfg.iterations {
        let eta = cfg.value_stepsize.at(t);
        let backup = sampled_backup(mdp, &model, policy, set, cfg, &stream, phase::TD_VALUE, t, &v, &mut budget)?;
        for (x, b) in v.iter_mut().zip(&backup) {
            *x += eta * (b - *x);
        }
        let base = v[cfg.anchor];
        v.iter_mut().for_each(|x| *x -= base);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("TD value iterate"));
        }
        let done = t + 1;
        if is_snapshot(done, cfg.iterations, period) {
            trace.push(TdSnapshot {
                phase: TdPhase::Value,
                iter: done,
                transitions: budget.transitions_used(),
                gain: 0.0,
                span_err: reference.map(|r| {
                    let d: Vec<f64> = v.iter().zip(r.bias.as_slice()).map(|(a, b)| a - b).collect();
                    span(&d)
                }),
                gain_err: None,
            });
        }
    }

    let mut g = 0.0;
    for t in 0..cfg.iterations {
        let beta = cfg.gain_stepsize.at(t);
        let backup = sampled_backup(mdp, &model, policy, set, cfg, &stream, phase::TD_GAIN, t, &v, &mut budget)?;
        let mean_td = backup.iter().zip(&v).map(|(b, x)| b - x).sum::<f64>() / n as f64;
        g += beta * (mean_td - g);
        if !g.is_finite() {
            return Err(Error::NonFinite("TD gain iterate"));
        }
        let done = t + 1;
        if is_snapshot(done, cfg.iterations, period) {
            trace.push(TdSnapshot {
                phase: TdPhase::Gain,
                iter: done,
                transitions: budget.transitions_used(),
                gain: g,
                span_err: None,
                gain_err: reference.map(|r| (g - r.gain).abs()),
            });
        }
    }

    Ok(TdOutput {
        eval: EvalResult {
            gain: g,
            bias: ValueTable(v),
            anchor: cfg.anchor,
        },
        trace,
        transitions: budget.transitions_used(),
    })
}

/// Robust TD estimate `(g_K, V_K)` with `V_K(s0) = 0`.
pub fn robust_td(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, cfg: &TdConfig) -> Result<EvalResult> {
    robust_td_run(mdp, policy, set, cfg, None).map(|out| out.eval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub q: QTable,
    /// The averaged `σ̂_{P^a_s}(V_K)` used to build `q`.
    pub sigma: QTable,
    pub td: TdOutput,
    pub transitions: u64,
}

/// TD critic followed by `q_draws` independent `σ̂(V_K)` estimates per
/// `(s, a)`, averaged: `Q̂(s,a) = r(s,a) − g_K + σ̂_{P^a_s}(V_K)`.
/// `q_draws = 1` is the single-call estimator.
pub fn estimate_q_run(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, cfg: &TdConfig, n_max: u32) -> Result<QEstimate> {
    estimate_q_traced(mdp, policy, set, cfg, n_max, None)
}

/// [`estimate_q_run`] with the critic trace measured against `reference`.
pub fn estimate_q_traced(
    mdp: &TabularMdp,
    policy: &Policy,
    set: &AmbiguitySet,
    cfg: &TdConfig,
    n_max: u32,
    reference: Option<&EvalResult>,
) -> Result<QEstimate> {
    let mlmc = MlmcConfig::new(n_max)?;
    let td = robust_td_run(mdp, policy, set, cfg, reference)?;
    let model = GenerativeModel::new(mdp);
    let stream = SampleStream::new(cfg.seed);
    let mut budget = SampleBudget::new();
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let mut sigma = QTable::zeros(n, m);
    let v = td.eval.bias.as_slice();
    for s in 0..n {
        for a in 0..m {
            let mut total = 0.0;
            for j in 0..cfg.q_draws {
                let mut rng = stream.substream(phase::Q_ESTIMATE, j as u64, s, a);
                total += estimate_support(mdp, &model, s, a, v, set, &mlmc, cfg.sigma_mode, &mut rng, &mut budget)?;
            }
            sigma.set(s, a, total / cfg.q_draws as f64);
        }
    }
    let g = td.eval.gain;
    let q = QTable::from_fn(n, m, |s, a| mdp.reward(s, a) - g + sigma.get(s, a));
    let transitions = td.transitions + budget.transitions_used();
    Ok(QEstimate { q, sigma, td, transitions })
}

pub fn estimate_q(mdp: &TabularMdp, policy: &Policy, set: &AmbiguitySet, cfg: &TdConfig, n_max: u32) -> Result<QTable> {
    estimate_q_run(mdp, policy, set, cfg, n_max).map(|e| e.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_mdp, GeneratorSpec};
    use crate::planning::{apply_policy_operator, q_from_eval, robust_policy_eval_exact, PlanningTolerance};

    fn bench(seed: u64) -> TabularMdp {
        generate_mdp(&GeneratorSpec::benchmark(seed)).unwrap()
    }

    #[test]
    fn one_step_gain_is_mean_td_error() {
        // Deterministic kernel and δ = 0: the exact backup of V_0 = 0 is r_π.
        let mdp = TabularMdp::new(
            vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![0.2, 0.6], vec![1.0, 0.4]],
            None,
        )
        .unwrap();
        let policy = Policy::uniform(2, 2);
        let cfg = TdConfig {
            iterations: 1,
            value_stepsize: Stepsize::Constant { value: 0.0 },
            gain_stepsize: Stepsize::Constant { value: 1.0 },
            sigma_mode: SigmaMode::Exact,
            ..Default::default()
        };
        let eval = robust_td(&mdp, &policy, &AmbiguitySet::contamination(0.0).unwrap(), &cfg).unwrap();
        assert_eq!(eval.bias.0, vec![0.0, 0.0]);
        assert!((eval.gain - 0.55).abs() < 1e-15);
    }

    #[test]
    fn single_state() {
        let mdp = TabularMdp::new(vec![vec![vec![1.0]; 2]], vec![vec![0.2, 0.8]], None).unwrap();
        let cfg = TdConfig {
            iterations: 200,
            mlmc: MlmcConfig::new(6).unwrap(),
            ..Default::default()
        };
        let eval = robust_td(&mdp, &Policy::uniform(1, 2), &AmbiguitySet::tv(0.2).unwrap(), &cfg).unwrap();
        assert_eq!(eval.bias.0, vec![0.0]);
        assert!((eval.gain - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_sigma_hook_converges() {
        let tol = PlanningTolerance::default();
        for seed in 0..3 {
            let mdp = bench(seed);
            let policy = Policy::uniform(4, 3);
            let set = AmbiguitySet::tv(0.15).unwrap();
            let exact = robust_policy_eval_exact(&mdp, &policy, &set, &tol).unwrap();
            let cfg = TdConfig {
                iterations: 20_000,
                sigma_mode: SigmaMode::Exact,
                ..Default::default()
            };
            let out = robust_td_run(&mdp, &policy, &set, &cfg, Some(&exact)).unwrap();
            let d: Vec<f64> = out.eval.bias.0.iter().zip(&exact.bias.0).map(|(a, b)| a - b).collect();
            assert!(span(&d) < 1e-6);
            assert!((out.eval.gain - exact.gain).abs() < 1e-6);
            assert_eq!(out.transitions, 0);
        }
    }

    #[test]
    fn anchor_holds_and_trace_is_ordered() {
        let mdp = bench(4);
        let cfg = TdConfig {
            iterations: 400,
            anchor: 2,
            seed: 3,
            ..Default::default()
        };
        let out = robust_td_run(&mdp, &Policy::uniform(4, 3), &AmbiguitySet::contamination(0.2).unwrap(), &cfg, None).unwrap();
        assert_eq!(out.eval.bias[2], 0.0);
        assert_eq!(out.trace.len(), 400);
        assert!(out.trace.windows(2).all(|w| w[0].transitions <= w[1].transitions));
        assert_eq!(out.transitions, 2 * 400 * 12);
    }

    #[test]
    fn q_estimate_identities() {
        let mdp = bench(7);
        let policy = Policy::new(vec![vec![0.2, 0.5, 0.3]; 4]).unwrap();
        let set = AmbiguitySet::contamination(0.2).unwrap();
        let cfg = TdConfig {
            iterations: 2_000,
            seed: 9,
            ..Default::default()
        };
        let est = estimate_q_run(&mdp, &policy, &set, &cfg, 8).unwrap();
        let g = est.td.eval.gain;
        for s in 0..4 {
            let mut lhs = g;
            let mut rhs = 0.0;
            for a in 0..3 {
                let w = policy.prob(s, a);
                lhs += w * est.q.get(s, a);
                rhs += w * (mdp.reward(s, a) + est.sigma.get(s, a));
            }
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_mode_with_exact_eval_satisfies_q_equation() {
        let tol = PlanningTolerance::default();
        let mdp = bench(8);
        let policy = Policy::uniform(4, 3);
        let set = AmbiguitySet::tv(0.1).unwrap();
        let eval = robust_policy_eval_exact(&mdp, &policy, &set, &tol).unwrap();
        let q = q_from_eval(&mdp, &set, &eval).unwrap();
        // Σ_a π(a|s) Q(s,a) = V(s) at the exact fixed point.
        let t = apply_policy_operator(&mdp, &policy, &set, eval.bias.as_slice()).unwrap();
        for (s, ts) in t.iter().enumerate() {
            let avg: f64 = (0..3).map(|a| policy.prob(s, a) * q.get(s, a)).sum();
            assert!((avg - (ts - eval.gain)).abs() < 1e-12);
            assert!((avg - eval.bias[s]).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_contamination_zero_is_exact() {
        let mdp = TabularMdp::new(
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![0.3], vec![0.9]],
            None,
        )
        .unwrap();
        let policy = Policy::uniform(2, 1);
        let cfg = TdConfig {
            iterations: 50,
            q_draws: 1,
            ..Default::default()
        };
        let est = estimate_q_run(&mdp, &policy, &AmbiguitySet::contamination(0.0).unwrap(), &cfg, 4).unwrap();
        let v = &est.td.eval.bias;
        let g = est.td.eval.gain;
        assert_eq!(est.q.get(0, 0), 0.3 - g + v[1]);
        assert_eq!(est.q.get(1, 0), 0.9 - g + v[0]);
    }
}
