//! Random ergodic instances with a uniform mass floor on every kernel row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub num_states: usize,
    pub num_actions: usize,
    /// Symmetric Dirichlet concentration.
    #[serde(default = "default_concentration")]
    pub concentration: f64,
    /// `ρ_min ∈ (0, 1/S]`, probability floor on every next state.
    pub min_row_mass: f64,
    pub seed: u64,
    /// Attach the index metric `|i − j|`.
    #[serde(default)]
    pub attach_metric: bool,
}

fn default_concentration() -> f64 {
    1.0
}

impl GeneratorSpec {
    /// Desk-scale benchmark class: `S = 4`, `A = 3`, flat Dirichlet,
    /// `ρ_min = 0.1`, index metric attached.
    pub fn benchmark(seed: u64) -> Self {
        GeneratorSpec {
            num_states: 4,
            num_actions: 3,
            concentration: 1.0,
            min_row_mass: 0.1,
            seed,
            attach_metric: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(Error::InvalidConfig("generator needs S ≥ 1 and A ≥ 1".into()));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::InvalidConfig(format!("dirichlet concentration must be positive, got {}", self.concentration)));
        }
        let cap = 1.0 / self.num_states as f64;
        if !(self.min_row_mass > 0.0 && self.min_row_mass <= cap) {
            return Err(Error::InvalidConfig(format!(
                "min_row_mass {} infeasible: need 0 < ρ_min ≤ 1/S = {cap}",
                self.min_row_mass
            )));
        }
        Ok(())
    }
}

/// Each row is `(1 − S·ρ_min)·Dir(α) + ρ_min`, rewards are i.i.d. `U[0,1)`.
pub fn generate_mdp(spec: &GeneratorSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let n = spec.num_states;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gamma = Gamma::new(spec.concentration, 1.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let free = (1.0 - n as f64 * spec.min_row_mass).max(0.0);
    let mut kernel = Vec::with_capacity(n);
    for _ in 0..n {
        let mut rows = Vec::with_capacity(spec.num_actions);
        for _ in 0..spec.num_actions {
            let mut w: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                w.iter_mut().for_each(|x| *x /= total);
            } else {
                w = vec![1.0 / n as f64; n];
            }
            let mut row: Vec<f64> = w.iter().map(|x| free * x + spec.min_row_mass).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
            rows.push(row);
        }
        kernel.push(rows);
    }
    let reward = (0..n)
        .map(|_| (0..spec.num_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    let metric = spec.attach_metric.then(|| TabularMdp::index_metric(n));
    TabularMdp::new(kernel, reward, metric)
}
