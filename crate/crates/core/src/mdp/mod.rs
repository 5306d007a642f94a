//! Tabular MDP data model and exact Markov-chain analytics.

mod chain;
mod validate;

pub use chain::{gain_bias, induced_chain, mixing_time, span, stationary_distribution, MIXING_TIME_CAP};
pub use validate::{validate_mdp, ValidationReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-stochastic transition matrix of a Markov chain.
pub type TransitionMatrix = nalgebra::DMatrix<f64>;

/// Transition kernel indexed `[s][a][s']`.
pub type Kernel = Vec<Vec<Vec<f64>>>;

pub(crate) const ROW_SUM_TOL: f64 = 1e-12;

/// On-disk representation of an MDP, prior to validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub kernel: Kernel,
    pub reward: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<f64>>>,
}

/// A finite MDP with nominal kernel `P̃`, rewards in `[0, 1]` and an optional
/// state metric used by Wasserstein ambiguity sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    kernel: Kernel,
    reward: Vec<Vec<f64>>,
    metric: Option<Vec<Vec<f64>>>,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(file: MdpFile) -> Result<Self> {
        let report = validate_mdp(&file);
        if !report.is_pass() {
            return Err(Error::InvalidMdp(report.violations.join("; ")));
        }
        Ok(TabularMdp {
            num_states: file.num_states,
            num_actions: file.num_actions,
            kernel: file.kernel,
            reward: file.reward,
            metric: file.metric,
        })
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(mdp: TabularMdp) -> Self {
        MdpFile {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            kernel: mdp.kernel,
            reward: mdp.reward,
            metric: mdp.metric,
        }
    }
}

impl TabularMdp {
    pub fn new(kernel: Kernel, reward: Vec<Vec<f64>>, metric: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let num_states = kernel.len();
        let num_actions = kernel.first().map_or(0, Vec::len);
        MdpFile {
            num_states,
            num_actions,
            kernel,
            reward,
            metric,
        }
        .try_into()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("MDP serialization is infallible")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Nominal next-state distribution `P̃^a_s`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        &self.kernel[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.reward
    }

    pub fn metric(&self) -> Option<&[Vec<f64>]> {
        self.metric.as_deref()
    }

    /// Returns a copy with the given metric attached, re-validated.
    pub fn with_metric(self, metric: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.kernel, self.reward, Some(metric))
    }

    /// `d(i, j) = |i - j|` on the state indices.
    pub fn index_metric(num_states: usize) -> Vec<Vec<f64>> {
        (0..num_states)
            .map(|i| (0..num_states).map(|j| (i as f64 - j as f64).abs()).collect())
            .collect()
    }

    pub(crate) fn check_kernel_shape(&self, kernel: &Kernel) -> Result<()> {
        let ok = kernel.len() == self.num_states
            && kernel.iter().all(|rows| {
                rows.len() == self.num_actions && rows.iter().all(|row| row.len() == self.num_states)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "kernel must be {}x{}x{}",
                self.num_states, self.num_actions, self.num_states
            )))
        }
    }
}

/// Stationary randomized policy `π(a|s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Policy {
    probs: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for Policy {
    type Error = Error;

    fn try_from(probs: Vec<Vec<f64>>) -> Result<Self> {
        Policy::new(probs)
    }
}

impl From<Policy> for Vec<Vec<f64>> {
    fn from(policy: Policy) -> Self {
        policy.probs
    }
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let width = probs.first().map_or(0, Vec::len);
        if probs.is_empty() || width == 0 {
            return Err(Error::InvalidPolicy("empty policy table".into()));
        }
        for (s, row) in probs.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidPolicy(format!("ragged row at s={s}")));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidPolicy(format!("negative or non-finite entry at s={s}")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidPolicy(format!("row sum {total} at s={s}")));
            }
        }
        Ok(Policy { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Policy {
            probs: vec![vec![p; num_actions]; num_states],
        }
    }

    /// Point-mass policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; num_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        Policy { probs }
    }

    /// Wraps rows that are already normalized by construction.
    pub(crate) fn from_rows_unchecked(probs: Vec<Vec<f64>>) -> Self {
        Policy { probs }
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states() != mdp.num_states() || self.num_actions() != mdp.num_actions() {
            return Err(Error::ShapeMismatch(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.num_states(),
                self.num_actions(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }
}

/// State-value table `V[s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn zeros(num_states: usize) -> Self {
        ValueTable(vec![0.0; num_states])
    }

    pub fn span(&self) -> f64 {
        span(&self.0)
    }

    /// Shifts so that entry `anchor` is exactly zero.
    pub fn anchor_at(&mut self, anchor: usize) {
        let base = self.0[anchor];
        for v in &mut self.0 {
            *v -= base;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ValueTable {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

impl std::ops::IndexMut<usize> for ValueTable {
    fn index_mut(&mut self, s: usize) -> &mut f64 {
        &mut self.0[s]
    }
}

/// State-action value table `Q[s][a]`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for QTable {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) || num_actions == 0 {
            return Err(Error::ShapeMismatch("ragged or empty Q table".into()));
        }
        Ok(QTable {
            num_states: rows.len(),
            num_actions,
            values: rows.concat(),
        })
    }
}

impl From<QTable> for Vec<Vec<f64>> {
    fn from(q: QTable) -> Self {
        q.values.chunks(q.num_actions).map(<[f64]>::to_vec).collect()
    }
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut q = Self::zeros(num_states, num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                q.set(s, a, f(s, a));
            }
        }
        q
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `V_Q(s) = max_b Q(s, b)`.
    pub fn greedy_values(&self) -> ValueTable {
        ValueTable(
            (0..self.num_states)
                .map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        )
    }

    /// Greedy policy with ties broken toward the lowest action index.
    pub fn greedy_policy(&self) -> Policy {
        let actions: Vec<usize> = (0..self.num_states)
            .map(|s| {
                let row = self.row(s);
                let mut best = 0;
                for (a, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect();
        Policy::deterministic(&actions, self.num_actions)
    }

    pub fn span(&self) -> f64 {
        span(&self.values)
    }

    pub fn anchor_at(&mut self, s0: usize, a0: usize) {
        let base = self.get(s0, a0);
        for v in &mut self.values {
            *v -= base;
        }
    }

    /// `span(self - other)`.
    pub fn span_diff(&self, other: &QTable) -> f64 {
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        span(&diff)
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Gain and anchored bias of a policy, `V(anchor) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub gain: f64,
    pub bias: ValueTable,
    pub anchor: usize,
}

/// Stationary distribution `d` of a chain with `dᵀP = dᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub probs: Vec<f64>,
    /// `‖dᵀP − dᵀ‖_∞` on the chain it was computed from.
    pub balance_residual: f64,
}
