//! Synchronous robust relative Q-learning with an anchor projection.

use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguitySet;
use crate::error::{Error, Result};
use crate::mdp::{QTable, TabularMdp};
use crate::schedule::{is_snapshot, snapshot_period, Stepsize};
use crate::sim::{estimate_support, phase, GenerativeModel, MlmcConfig, SampleBudget, SampleStream, SigmaMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QLearnConfig {
    pub iterations: u64,
    pub stepsize: Stepsize,
    pub anchor: (usize, usize),
    pub mlmc: MlmcConfig,
    pub seed: u64,
    /// Defaults to `max(1, T/200)`.
    pub snapshot_period: Option<u64>,
    pub sigma_mode: SigmaMode,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        QLearnConfig {
            iterations: 10_000,
            stepsize: Stepsize::Harmonic {
                scale: 10.0,
                offset: 100.0,
            },
            anchor: (0, 0),
            mlmc: MlmcConfig::default(),
            seed: 0,
            snapshot_period: None,
            sigma_mode: SigmaMode::Sampled,
        }
    }
}

impl QLearnConfig {
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be ≥ 1".into()));
        }
        self.stepsize.validate()?;
        self.mlmc.validate()?;
        let (s0, a0) = self.anchor;
        if s0 >= mdp.num_states() || a0 >= mdp.num_actions() {
            return Err(Error::InvalidConfig(format!("anchor ({s0}, {a0}) outside the MDP")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QLearnSnapshot {
    pub iter: u64,
    pub transitions: u64,
    /// `span(Q_t − Q*)` when a reference is supplied.
    pub span_err: Option<f64>,
    /// `span(Ĥ(Q_t) − Q_t)` from an independent draw; noisy.
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QLearnTrace {
    pub snapshots: Vec<QLearnSnapshot>,
}

/// Runs from `Q_0 = 0`.
pub fn run_qlearning(mdp: &TabularMdp, set: &AmbiguitySet, cfg: &QLearnConfig, reference: Option<&QTable>) -> Result<(QTable, QLearnTrace)> {
    run_qlearning_from(mdp, set, cfg, QTable::zeros(mdp.num_states(), mdp.num_actions()), reference)
}

/// Runs from a given `Q_0`. The initial table is anchored before the first
/// update, so `Q_0` and `Q_0 + c·e` follow the same trajectory.
pub fn run_qlearning_from(
    mdp: &TabularMdp,
    set: &AmbiguitySet,
    cfg: &QLearnConfig,
    q0: QTable,
    reference: Option<&QTable>,
) -> Result<(QTable, QLearnTrace)> {
    cfg.validate(mdp)?;
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    if q0.num_states() != n || q0.num_actions() != m {
        return Err(Error::ShapeMismatch("initial Q table does not match the MDP".into()));
    }
    if let Some(r) = reference {
        if r.num_states() != n || r.num_actions() != m {
            return Err(Error::ShapeMismatch("reference Q table does not match the MDP".into()));
        }
    }
    let model = GenerativeModel::new(mdp);
    let stream = SampleStream::new(cfg.seed);
    let period = snapshot_period(cfg.iterations, cfg.snapshot_period);
    let (s0, a0) = cfg.anchor;
    let mut budget = SampleBudget::new();
    let mut trace = QLearnTrace::default();

    let mut q = q0;
    q.anchor_at(s0, a0);
    let mut target = QTable::zeros(n, m);
    for t in 0..cfg.iterations {
        let eta = cfg.stepsize.at(t);
        let v = q.greedy_values();
        for s in 0..n {
            for a in 0..m {
                let mut rng = stream.substream(phase::QLEARN, t, s, a);
                let sigma = estimate_support(mdp, &model, s, a, v.as_slice(), set, &cfg.mlmc, cfg.sigma_mode, &mut rng, &mut budget)?;
                target.set(s, a, mdp.reward(s, a) + sigma);
            }
        }
        for (x, h) in q.values_mut().iter_mut().zip(target.values()) {
            *x += eta * (h - *x);
        }
        q.anchor_at(s0, a0);
        if q.values().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Q-learning iterate"));
        }

        let done = t + 1;
        if is_snapshot(done, cfg.iterations, period) {
            trace.snapshots.push(QLearnSnapshot {
                iter: done,
                transitions: budget.transitions_used(),
                span_err: reference.map(|r| q.span_diff(r)),
                residual: residual_estimate(mdp, &model, set, cfg, &stream, done, &q)?,
            });
        }
    }
    Ok((q, trace))
}

fn residual_estimate(
    mdp: &TabularMdp,
    model: &GenerativeModel,
    set: &AmbiguitySet,
    cfg: &QLearnConfig,
    stream: &SampleStream,
    t: u64,
    q: &QTable,
) -> Result<f64> {
    // Diagnostic draws are not charged to the learner's budget.
    let mut scratch = SampleBudget::new();
    let v = q.greedy_values();
    let mut diff = Vec::with_capacity(q.values().len());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let mut rng = stream.substream(phase::QLEARN_RESIDUAL, t, s, a);
            let sigma = estimate_support(mdp, model, s, a, v.as_slice(), set, &cfg.mlmc, cfg.sigma_mode, &mut rng, &mut scratch)?;
            diff.push(mdp.reward(s, a) + sigma - q.get(s, a));
        }
    }
    Ok(crate::mdp::span(&diff))
}
