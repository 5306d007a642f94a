//! Robust natural actor-critic: KL mirror-ascent on critic Q estimates.

use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguitySet;
use crate::critic::{estimate_q_run, TdConfig};
use crate::error::{Error, Result};
use crate::mdp::{Policy, QTable, TabularMdp};
use crate::planning::{robust_optimal_control_exact, robust_policy_eval_exact, robust_q_exact, PlanningTolerance};
use crate::sim::derive_seed;

/// Direction of the multiplicative update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateSign {
    /// `π ∝ π·exp(+ηQ̂)`, ascent on the gain.
    #[default]
    Maximize,
    /// `π ∝ π·exp(−ηQ̂)`, as the closed form is literally written.
    PaperLiteral,
}

impl UpdateSign {
    fn factor(self) -> f64 {
        match self {
            UpdateSign::Maximize => 1.0,
            UpdateSign::PaperLiteral => -1.0,
        }
    }
}

/// Where the actor's Q values come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticMode {
    #[default]
    Sampled,
    /// Exact `Q^π` from the planning oracle (ablation hook).
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NacConfig {
    pub iterations: u64,
    pub eta: f64,
    pub sign: UpdateSign,
    pub critic: TdConfig,
    pub n_max: u32,
    pub seed: u64,
    /// Log the exact robust gain of every iterate.
    pub evaluate: bool,
    pub critic_mode: CriticMode,
}

impl Default for NacConfig {
    fn default() -> Self {
        NacConfig {
            iterations: 50,
            eta: 0.5,
            sign: UpdateSign::Maximize,
            critic: TdConfig::default(),
            n_max: 10,
            seed: 0,
            evaluate: true,
            critic_mode: CriticMode::Sampled,
        }
    }
}

impl NacConfig {
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be ≥ 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        self.critic.validate(mdp)?;
        crate::sim::MlmcConfig::new(self.n_max)?;
        Ok(())
    }
}

/// `π_{t+1}(a|s) ∝ π_t(a|s)·exp(±η·Q̂(s,a))`, stabilized by subtracting the
/// row maximum of the exponent.
pub fn mirror_descent_update(pi: &Policy, q_hat: &QTable, eta: f64, sign: UpdateSign) -> Result<Policy> {
    if q_hat.num_states() != pi.num_states() || q_hat.num_actions() != pi.num_actions() {
        return Err(Error::ShapeMismatch("Q estimate does not match the policy".into()));
    }
    if q_hat.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Q estimate"));
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidConfig(format!("eta must be finite and ≥ 0, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(pi.clone());
    }
    let scale = sign.factor() * eta;
    let rows = (0..pi.num_states())
        .map(|s| {
            let z: Vec<f64> = q_hat.row(s).iter().map(|q| scale * q).collect();
            let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if z.iter().all(|&x| x == top) {
                return pi.row(s).to_vec();
            }
            let w: Vec<f64> = pi.row(s).iter().zip(&z).map(|(p, x)| p * (x - top).exp()).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        })
        .collect();
    Ok(Policy::from_rows_unchecked(rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NacSnapshot {
    /// Index `t` of the iterate `π_t`.
    pub iter: u64,
    /// Critic transitions used to produce `π_t`.
    pub transitions: u64,
    pub gain: Option<f64>,
    pub gap_to_oracle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NacOutput {
    pub policy: Policy,
    pub trace: Vec<NacSnapshot>,
    pub oracle_gain: Option<f64>,
}

/// Runs `T` actor updates from the uniform policy. With evaluation on, the
/// trace holds the exact gain of `π_0, ..., π_T`.
pub fn run_nac(mdp: &TabularMdp, set: &AmbiguitySet, cfg: &NacConfig) -> Result<NacOutput> {
    cfg.validate(mdp)?;
    let tol = PlanningTolerance::default();
    let oracle_gain = if cfg.evaluate {
        Some(robust_optimal_control_exact(mdp, set, &tol)?.gain)
    } else {
        None
    };
    let snapshot = |pi: &Policy, t: u64, transitions: u64| -> Result<NacSnapshot> {
        let gain = if cfg.evaluate {
            Some(robust_policy_eval_exact(mdp, pi, set, &tol)?.gain)
        } else {
            None
        };
        Ok(NacSnapshot {
            iter: t,
            transitions,
            gain,
            gap_to_oracle: gain.zip(oracle_gain).map(|(g, star)| star - g),
        })
    };

    let mut pi = Policy::uniform(mdp.num_states(), mdp.num_actions());
    let mut transitions = 0;
    let mut trace = vec![snapshot(&pi, 0, 0)?];
    for t in 0..cfg.iterations {
        let q_hat = match cfg.critic_mode {
            CriticMode::Exact => robust_q_exact(mdp, &pi, set, &tol)?,
            CriticMode::Sampled => {
                let critic = TdConfig {
                    seed: derive_seed(cfg.seed, t),
                    ..cfg.critic.clone()
                };
                let est = estimate_q_run(mdp, &pi, set, &critic, cfg.n_max)?;
                transitions += est.transitions;
                est.q
            }
        };
        pi = mirror_descent_update(&pi, &q_hat, cfg.eta, cfg.sign)?;
        trace.push(snapshot(&pi, t + 1, transitions)?);
    }
    Ok(NacOutput {
        policy: pi,
        trace,
        oracle_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_mdp, GeneratorSpec};

    #[test]
    fn update_examples() {
        let pi = Policy::uniform(1, 2);
        let q = QTable::from_fn(1, 2, |_, a| if a == 0 { 1.0 } else { 0.0 });
        let next = mirror_descent_update(&pi, &q, 1.0, UpdateSign::Maximize).unwrap();
        let e = std::f64::consts::E;
        assert!((next.prob(0, 0) - e / (e + 1.0)).abs() < 1e-15);
        let literal = mirror_descent_update(&pi, &q, 1.0, UpdateSign::PaperLiteral).unwrap();
        assert!((literal.prob(0, 0) - 1.0 / (e + 1.0)).abs() < 1e-15);

        let skew = Policy::new(vec![vec![0.1, 0.2, 0.7], vec![0.5, 0.25, 0.25]]).unwrap();
        let q = QTable::from_fn(2, 3, |s, a| (s * 3 + a) as f64);
        assert_eq!(mirror_descent_update(&skew, &q, 0.0, UpdateSign::Maximize).unwrap(), skew);
        let flat = QTable::from_fn(2, 3, |s, _| s as f64 + 0.3);
        assert_eq!(mirror_descent_update(&skew, &flat, 2.0, UpdateSign::Maximize).unwrap(), skew);
    }

    #[test]
    fn shift_invariance_and_rejection() {
        let pi = Policy::new(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let q = QTable::from_fn(2, 2, |s, a| 0.37 * s as f64 - 0.9 * a as f64);
        let shifted = QTable::from_fn(2, 2, |s, a| q.get(s, a) + 12.5 * (s as f64 + 1.0));
        let a = mirror_descent_update(&pi, &q, 0.8, UpdateSign::Maximize).unwrap();
        let b = mirror_descent_update(&pi, &shifted, 0.8, UpdateSign::Maximize).unwrap();
        for s in 0..2 {
            for x in 0..2 {
                assert!((a.prob(s, x) - b.prob(s, x)).abs() < 1e-12);
            }
        }
        let bad = QTable::from_fn(2, 2, |_, _| f64::NAN);
        assert!(mirror_descent_update(&pi, &bad, 0.8, UpdateSign::Maximize).is_err());
    }

    #[test]
    fn single_action_trace_is_flat() {
        let mdp = generate_mdp(&GeneratorSpec {
            num_actions: 1,
            ..GeneratorSpec::benchmark(2)
        })
        .unwrap();
        let cfg = NacConfig {
            iterations: 5,
            critic: TdConfig {
                iterations: 100,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run_nac(&mdp, &AmbiguitySet::contamination(0.2).unwrap(), &cfg).unwrap();
        let g0 = out.trace[0].gain.unwrap();
        assert!(out.trace.iter().all(|s| s.gain == Some(g0)));
        assert_eq!(out.trace.len(), 6);
    }

    #[test]
    fn exact_critic_ascends() {
        let mdp = generate_mdp(&GeneratorSpec {
            num_states: 3,
            num_actions: 2,
            ..GeneratorSpec::benchmark(4)
        })
        .unwrap();
        let cfg = NacConfig {
            iterations: 20,
            critic_mode: CriticMode::Exact,
            ..Default::default()
        };
        let out = run_nac(&mdp, &AmbiguitySet::contamination(0.1).unwrap(), &cfg).unwrap();
        let gains: Vec<f64> = out.trace.iter().map(|s| s.gain.unwrap()).collect();
        assert!(gains.last().unwrap() >= gains.first().unwrap());
        for row in out.policy.rows() {
            assert!(row.iter().all(|&p| p > 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(out.trace.iter().all(|s| s.gap_to_oracle.unwrap() >= -1e-9));
    }

    #[test]
    fn literal_sign_drains_dominant_action() {
        // Action 0 pays more everywhere with identical dynamics.
        let row = vec![0.5, 0.5];
        let mdp = TabularMdp::new(vec![vec![row.clone(), row.clone()], vec![row.clone(), row]], vec![vec![0.9, 0.1]; 2], None).unwrap();
        let cfg = NacConfig {
            iterations: 10,
            sign: UpdateSign::PaperLiteral,
            critic_mode: CriticMode::Exact,
            ..Default::default()
        };
        let mut pi = Policy::uniform(2, 2);
        let set = AmbiguitySet::contamination(0.1).unwrap();
        let tol = PlanningTolerance::default();
        for _ in 0..cfg.iterations {
            let q = robust_q_exact(&mdp, &pi, &set, &tol).unwrap();
            let next = mirror_descent_update(&pi, &q, cfg.eta, cfg.sign).unwrap();
            assert!(next.prob(0, 0) <= pi.prob(0, 0));
            pi = next;
        }
        let out = run_nac(&mdp, &set, &cfg).unwrap();
        assert!(out.policy.prob(0, 0) < 0.5);
    }
}
