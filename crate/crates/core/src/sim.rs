//! Generative-model access to the nominal kernel.
//!
//! Every random draw comes from a [`KeyedRng`] derived from
//! `(seed, phase, iteration, state, action)`, so an estimate depends only on
//! its key and never on the order in which keys are visited. Within a key,
//! draws are consumed sequentially (the draw index is the stream position).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguitySet;
use crate::error::{Error, Result};
use crate::mdp::{StationaryDist, TabularMdp};

/// Phase tags separating the independent sample streams of each algorithm.
pub mod phase {
    pub const QLEARN: u64 = 1;
    pub const QLEARN_RESIDUAL: u64 = 2;
    pub const TD_VALUE: u64 = 3;
    pub const TD_GAIN: u64 = 4;
    pub const Q_ESTIMATE: u64 = 5;
    pub const TEST: u64 = 99;
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn combine(h: u64, x: u64) -> u64 {
    splitmix(h ^ splitmix(x))
}

/// Independent child seed, e.g. one per outer iteration of a nested learner.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    combine(splitmix(seed), index)
}

/// Root of a family of keyed substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStream {
    seed: u64,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        SampleStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Deterministic generator for one `(phase, iteration, s, a)` key.
    pub fn substream(&self, phase: u64, iteration: u64, s: usize, a: usize) -> KeyedRng {
        let key = [phase, iteration, s as u64, a as u64]
            .into_iter()
            .fold(splitmix(self.seed), combine);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key);
        KeyedRng { rng }
    }
}

/// Counter-based generator positioned at the start of one keyed stream.
#[derive(Clone, Debug)]
pub struct KeyedRng {
    rng: ChaCha8Rng,
}

impl KeyedRng {
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Count of next-state draws taken from the generative model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBudget {
    transitions_used: u64,
}

impl SampleBudget {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn transitions_used(&self) -> u64 {
        self.transitions_used
    }

    pub fn charge(&mut self, draws: u64) {
        self.transitions_used += draws;
    }

    pub fn merge(&mut self, other: SampleBudget) {
        self.transitions_used += other.transitions_used;
    }
}

/// Truncation level of the multilevel estimator; the level distribution is
/// `Geom(1/2)` on `{0, 1, 2, ...}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmcConfig {
    pub n_max: u32,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        MlmcConfig { n_max: 10 }
    }
}

impl MlmcConfig {
    /// Largest supported truncation level (`2^31` draws at the top level).
    pub const MAX_LEVEL: u32 = 30;

    pub fn new(n_max: u32) -> Result<Self> {
        let cfg = MlmcConfig { n_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.n_max > Self::MAX_LEVEL {
            return Err(Error::InvalidConfig(format!(
                "n_max must be in [1, {}], got {}",
                Self::MAX_LEVEL,
                self.n_max
            )));
        }
        Ok(())
    }

    /// Truncated level pmf: `2^{-(n+1)}` below `n_max`, the folded tail
    /// `2^{-n_max}` at `n_max`.
    pub fn level_probability(&self, n: u32) -> f64 {
        match n.cmp(&self.n_max) {
            std::cmp::Ordering::Less => 0.5f64.powi(n as i32 + 1),
            std::cmp::Ordering::Equal => 0.5f64.powi(self.n_max as i32),
            std::cmp::Ordering::Greater => 0.0,
        }
    }

    /// `Σ_n p'(n)·2^{n+1} = n_max + 2`, draws per estimator call on average.
    pub fn expected_cost(&self) -> f64 {
        (0..=self.n_max)
            .map(|n| self.level_probability(n) * 2f64.powi(n as i32 + 1))
            .sum()
    }
}

/// Whether learners see sampled or exact support functions. `Exact` is a
/// test hook that replaces every `σ̂` with the exact `σ` of the nominal row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    #[default]
    Sampled,
    Exact,
}

/// Inverse-CDF sampler over the nominal kernel.
#[derive(Clone, Debug)]
pub struct GenerativeModel {
    num_states: usize,
    num_actions: usize,
    cdf: Vec<f64>,
}

impl GenerativeModel {
    pub fn new(mdp: &TabularMdp) -> Self {
        let (n, m) = (mdp.num_states(), mdp.num_actions());
        let mut cdf = Vec::with_capacity(n * m * n);
        for s in 0..n {
            for a in 0..m {
                let row = mdp.row(s, a);
                let start = cdf.len();
                let mut acc = 0.0;
                for &p in row {
                    acc += p;
                    cdf.push(acc);
                }
                // Pin the tail from the last reachable state on to exactly 1
                // so that u ∈ [0, 1) always lands on a reachable state.
                if let Some(last) = row.iter().rposition(|&p| p > 0.0) {
                    for c in &mut cdf[start + last..start + n] {
                        *c = 1.0;
                    }
                }
            }
        }
        GenerativeModel {
            num_states: n,
            num_actions: m,
            cdf,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `s' ~ P̃^a_s`; charges one transition.
    pub fn draw_next_state(&self, s: usize, a: usize, rng: &mut KeyedRng, budget: &mut SampleBudget) -> usize {
        budget.charge(1);
        self.draw(s, a, rng)
    }

    fn draw(&self, s: usize, a: usize, rng: &mut KeyedRng) -> usize {
        let n = self.num_states;
        let start = (s * self.num_actions + a) * n;
        let row = &self.cdf[start..start + n];
        let u = rng.uniform();
        row.partition_point(|&c| c <= u).min(n - 1)
    }
}

/// One-sample contamination estimator `(1−δ)·V(s') + δ·min V`.
pub fn contamination_one_sample(v: &[f64], s_next: usize, radius: f64) -> f64 {
    let min_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    (1.0 - radius) * v[s_next] + radius * min_v
}

/// Truncated multilevel Monte Carlo estimate of `σ_{P^a_s}(V)` for TV and
/// Wasserstein sets, built from exact support functions of empirical
/// measures.
#[allow(clippy::too_many_arguments)]
pub fn mlmc_support_estimate(
    model: &GenerativeModel,
    s: usize,
    a: usize,
    v: &[f64],
    set: &AmbiguitySet,
    cfg: &MlmcConfig,
    rng: &mut KeyedRng,
    budget: &mut SampleBudget,
) -> Result<f64> {
    if matches!(set, AmbiguitySet::Contamination { .. }) {
        return Err(Error::UseOneSampleEstimator);
    }
    let n = model.num_states();
    let level = Geometric::new(0.5)
        .expect("p = 1/2 is a valid geometric parameter")
        .sample(rng.rng())
        .min(cfg.n_max as u64) as u32;
    let draws = 1usize << (level + 1);
    budget.charge(draws as u64);

    let mut all = vec![0.0; n];
    let mut even = vec![0.0; n];
    let mut odd = vec![0.0; n];
    let mut first = 0;
    for i in 0..draws {
        let sp = model.draw(s, a, rng);
        if i == 0 {
            first = sp;
        }
        all[sp] += 1.0;
        // 1-based sample i+1: even positions are i = 1, 3, 5, ...
        if i % 2 == 1 {
            even[sp] += 1.0;
        } else {
            odd[sp] += 1.0;
        }
    }
    let half = (draws / 2) as f64;
    for x in &mut all {
        *x /= draws as f64;
    }
    for x in even.iter_mut().chain(odd.iter_mut()) {
        *x /= half;
    }
    let mut single = vec![0.0; n];
    single[first] = 1.0;

    let sigma_single = set.support_value(&single, v)?;
    let sigma_all = set.support_value(&all, v)?;
    let sigma_even = set.support_value(&even, v)?;
    let sigma_odd = set.support_value(&odd, v)?;
    let delta = sigma_all - 0.5 * (sigma_even + sigma_odd);
    Ok(sigma_single + delta / cfg.level_probability(level))
}

/// `σ̂_{P^a_s}(V)` for any family: the one-sample estimator for
/// contamination, the multilevel estimator otherwise, or the exact value
/// under [`SigmaMode::Exact`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_support(
    mdp: &TabularMdp,
    model: &GenerativeModel,
    s: usize,
    a: usize,
    v: &[f64],
    set: &AmbiguitySet,
    cfg: &MlmcConfig,
    mode: SigmaMode,
    rng: &mut KeyedRng,
    budget: &mut SampleBudget,
) -> Result<f64> {
    match (mode, set) {
        (SigmaMode::Exact, _) => set.support_value(mdp.row(s, a), v),
        (SigmaMode::Sampled, AmbiguitySet::Contamination { radius }) => {
            let sp = model.draw_next_state(s, a, rng, budget);
            Ok(contamination_one_sample(v, sp, *radius))
        }
        (SigmaMode::Sampled, _) => mlmc_support_estimate(model, s, a, v, set, cfg, rng, budget),
    }
}

/// Empirical distribution of `count` draws from `P̃^a_s` on one keyed stream.
pub fn empirical_row(model: &GenerativeModel, s: usize, a: usize, count: usize, rng: &mut KeyedRng) -> StationaryDist {
    let mut probs = vec![0.0; model.num_states()];
    for _ in 0..count {
        probs[model.draw(s, a, rng)] += 1.0;
    }
    for p in &mut probs {
        *p /= count as f64;
    }
    StationaryDist {
        probs,
        balance_residual: f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::support_lp_oracle;

    fn mdp(rows: Vec<Vec<f64>>) -> TabularMdp {
        let n = rows[0].len();
        let mut kernel = vec![vec![vec![1.0 / n as f64; n]]; n];
        kernel[0][0] = rows[0].clone();
        TabularMdp::new(kernel, vec![vec![0.5]; n], Some(TabularMdp::index_metric(n))).unwrap()
    }

    #[test]
    fn deterministic_row_always_hits() {
        let m = mdp(vec![vec![0.0, 0.0, 1.0]]);
        let model = GenerativeModel::new(&m);
        let mut budget = SampleBudget::new();
        let mut rng = SampleStream::new(5).substream(phase::TEST, 0, 0, 0);
        for _ in 0..1000 {
            assert_eq!(model.draw_next_state(0, 0, &mut rng, &mut budget), 2);
        }
        assert_eq!(budget.transitions_used(), 1000);
    }

    #[test]
    fn fair_row_frequency() {
        let m = mdp(vec![vec![0.5, 0.5]]);
        let model = GenerativeModel::new(&m);
        let mut budget = SampleBudget::new();
        let mut rng = SampleStream::new(17).substream(phase::TEST, 0, 0, 0);
        let zeros = (0..100_000)
            .filter(|_| model.draw_next_state(0, 0, &mut rng, &mut budget) == 0)
            .count();
        // 0.01 is more than six binomial standard deviations.
        assert!((zeros as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn zero_mass_states_never_drawn() {
        let m = mdp(vec![vec![0.5, 0.0, 0.5, 0.0]]);
        let model = GenerativeModel::new(&m);
        let mut rng = SampleStream::new(1).substream(phase::TEST, 0, 0, 0);
        for _ in 0..10_000 {
            let sp = model.draw(0, 0, &mut rng);
            assert!(sp == 0 || sp == 2);
        }
    }

    #[test]
    fn same_key_same_draws() {
        let stream = SampleStream::new(42);
        let a: Vec<f64> = {
            let mut r = stream.substream(phase::QLEARN, 7, 1, 2);
            (0..8).map(|_| r.uniform()).collect()
        };
        let b: Vec<f64> = {
            let mut r = stream.substream(phase::QLEARN, 7, 1, 2);
            (0..8).map(|_| r.uniform()).collect()
        };
        assert_eq!(a, b);
        let mut other = stream.substream(phase::QLEARN, 7, 2, 1);
        assert_ne!(a[0], other.uniform());
        let mut other_seed = SampleStream::new(43).substream(phase::QLEARN, 7, 1, 2);
        assert_ne!(a[0], other_seed.uniform());
    }

    #[test]
    fn contamination_estimator_cases() {
        assert_eq!(contamination_one_sample(&[2.0; 4], 3, 0.4), 2.0);
        assert!((contamination_one_sample(&[1.0, 2.0, 3.0], 2, 0.3) - 2.4).abs() < 1e-15);
    }

    #[test]
    fn contamination_estimator_unbiased() {
        let m = mdp(vec![vec![0.2, 0.5, 0.3]]);
        let model = GenerativeModel::new(&m);
        let v = [1.0, -0.5, 2.0];
        let exact = crate::ambiguity::support_contamination(m.row(0, 0), &v, 0.25).unwrap().value;
        let mut rng = SampleStream::new(3).substream(phase::TEST, 0, 0, 0);
        let mut budget = SampleBudget::new();
        let draws: Vec<f64> = (0..100_000)
            .map(|_| contamination_one_sample(&v, model.draw_next_state(0, 0, &mut rng, &mut budget), 0.25))
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let se = (var / draws.len() as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se, "mean {mean} exact {exact} se {se}");
    }

    #[test]
    fn truncated_pmf_sums_to_one() {
        for n_max in 1..=MlmcConfig::MAX_LEVEL {
            let cfg = MlmcConfig::new(n_max).unwrap();
            let total: f64 = (0..=n_max).map(|n| cfg.level_probability(n)).sum();
            assert!((total - 1.0).abs() < 1e-15);
            assert!((cfg.expected_cost() - (n_max as f64 + 2.0)).abs() < 1e-9);
        }
        assert!(MlmcConfig::new(0).is_err());
    }

    #[test]
    fn point_mass_row_gives_exact_sigma() {
        let m = mdp(vec![vec![0.0, 1.0, 0.0]]);
        let model = GenerativeModel::new(&m);
        let v = [0.0, 2.0, 1.0];
        let set = AmbiguitySet::tv(0.3).unwrap();
        let exact = set.support_value(&[0.0, 1.0, 0.0], &v).unwrap();
        let cfg = MlmcConfig::new(6).unwrap();
        let stream = SampleStream::new(9);
        for it in 0..200 {
            let mut rng = stream.substream(phase::TEST, it, 0, 0);
            let mut budget = SampleBudget::new();
            let est = mlmc_support_estimate(&model, 0, 0, &v, &set, &cfg, &mut rng, &mut budget).unwrap();
            assert!((est - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn mlmc_rejects_contamination() {
        let m = mdp(vec![vec![0.5, 0.5]]);
        let model = GenerativeModel::new(&m);
        let mut rng = SampleStream::new(0).substream(phase::TEST, 0, 0, 0);
        let err = mlmc_support_estimate(
            &model,
            0,
            0,
            &[0.0, 1.0],
            &AmbiguitySet::contamination(0.1).unwrap(),
            &MlmcConfig::default(),
            &mut rng,
            &mut SampleBudget::new(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UseOneSampleEstimator));
    }

    #[test]
    fn mlmc_budget_matches_levels_and_is_unbiased_for_tv() {
        let m = mdp(vec![vec![0.3, 0.45, 0.25]]);
        let model = GenerativeModel::new(&m);
        let v = [0.4, 1.0, 0.0];
        let set = AmbiguitySet::tv(0.15).unwrap();
        let exact = support_lp_oracle(m.row(0, 0), &v, &set).unwrap();
        let cfg = MlmcConfig::new(12).unwrap();
        let stream = SampleStream::new(2024);
        let mut budget = SampleBudget::new();
        let calls = 40_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for it in 0..calls {
            let mut rng = stream.substream(phase::TEST, it, 0, 0);
            let est = mlmc_support_estimate(&model, 0, 0, &v, &set, &cfg, &mut rng, &mut budget).unwrap();
            sum += est;
            sum_sq += est * est;
        }
        let mean = sum / calls as f64;
        let se = ((sum_sq / calls as f64 - mean * mean) / calls as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se, "mean {mean} exact {exact} se {se}");
        // Budget is a sum of powers of two, at least two per call.
        assert!(budget.transitions_used() >= 2 * calls);
    }
}
