//! Numerical contraction checks for the optimal robust operator `H`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambiguity::{worst_case_kernel, AmbiguitySet};
use crate::error::{Error, Result};
use crate::mdp::{induced_chain, stationary_distribution, QTable, TabularMdp, TransitionMatrix};

/// `(HQ)(s,a) = r(s,a) + σ_{P^a_s}(V_Q)`, `V_Q(s) = max_b Q(s,b)`.
pub fn apply_optimal_operator(mdp: &TabularMdp, set: &AmbiguitySet, q: &QTable) -> Result<QTable> {
    let v = q.greedy_values();
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            out.set(s, a, mdp.reward(s, a) + set.support_value(mdp.row(s, a), v.as_slice())?);
        }
    }
    Ok(out)
}

/// `F = P − E` where every row of `E` is the stationary distribution of `P`.
pub fn fluctuation_matrix(p: &TransitionMatrix) -> Result<DMatrix<f64>> {
    let d = stationary_distribution(p)?;
    let n = p.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| p[(i, j)] - d.probs[j]))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone_owned()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalEstimate {
    /// `max_k max_{products} α^{-k}‖F_k⋯F_1 x‖₂` over the explored products.
    /// Always a lower bound on the untruncated supremum.
    pub value: f64,
    pub is_lower_bound: bool,
    pub depth: usize,
    pub alpha: f64,
    pub max_spectral_radius: f64,
    pub exhaustive: bool,
}

const EXHAUSTIVE_FAMILY: usize = 4;
const EXHAUSTIVE_DEPTH: usize = 6;
pub const DEFAULT_BEAM_WIDTH: usize = 64;

/// Truncated extremal seminorm of `x` over products drawn from `family`.
///
/// Small problems (at most 4 matrices, depth at most 6) are searched
/// exhaustively; larger ones keep the `beam_width` largest partial products
/// at each depth.
pub fn truncated_extremal_seminorm(
    x: &[f64],
    family: &[DMatrix<f64>],
    k_trunc: usize,
    alpha: f64,
    beam_width: Option<usize>,
) -> Result<ExtremalEstimate> {
    let n = x.len();
    for f in family {
        if f.nrows() != n || f.ncols() != n {
            return Err(Error::ShapeMismatch(format!("fluctuation matrix is {}x{}, vector has {n}", f.nrows(), f.ncols())));
        }
    }
    let rho = family.iter().map(spectral_radius).fold(0.0, f64::max);
    if rho >= 1.0 {
        return Err(Error::InvalidConfig(format!("fluctuation matrix has spectral radius {rho} ≥ 1")));
    }
    if !(alpha > rho && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange { alpha, lower: rho });
    }
    let exhaustive = family.len() <= EXHAUSTIVE_FAMILY && k_trunc <= EXHAUSTIVE_DEPTH && beam_width.is_none();
    let width = if exhaustive { usize::MAX } else { beam_width.unwrap_or(DEFAULT_BEAM_WIDTH).max(1) };

    let x0 = DVector::from_column_slice(x);
    let mut best = x0.norm();
    let mut frontier = vec![x0];
    let mut scale = 1.0;
    for _ in 0..k_trunc {
        if family.is_empty() {
            break;
        }
        scale /= alpha;
        let mut next: Vec<DVector<f64>> = frontier.iter().flat_map(|y| family.iter().map(move |f| f * y)).collect();
        if next.len() > width {
            next.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
            next.truncate(width);
        }
        for y in &next {
            best = best.max(scale * y.norm());
        }
        frontier = next;
    }
    Ok(ExtremalEstimate {
        value: best,
        is_lower_bound: true,
        depth: k_trunc,
        alpha,
        max_spectral_radius: rho,
        exhaustive,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalConfig {
    pub k_trunc: usize,
    /// Defaults to halfway between the largest sampled spectral radius and 1.
    pub alpha: Option<f64>,
    pub beam_width: Option<usize>,
}

impl Default for ExtremalConfig {
    fn default() -> Self {
        ExtremalConfig {
            k_trunc: 6,
            alpha: None,
            beam_width: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalSummary {
    pub k_trunc: usize,
    pub alpha: f64,
    pub family_size: usize,
    pub max_spectral_radius: f64,
    /// Estimate for `V_{Q1,k} − V_{Q2,k}` at every recorded step.
    pub estimates: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// `span(HᵏQ₁ − HᵏQ₂)` for `k = 0..=k_steps`.
    pub spans: Vec<f64>,
    /// `spans[k+1] / spans[k]`, 0 where `spans[k] = 0`. Steps whose
    /// difference is already at round-off level are excluded.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub nonexpansive: bool,
    pub gamma_emp: f64,
    pub fit_residual: f64,
    pub fit_points: usize,
    /// Differences below this level are treated as round-off.
    pub noise_floor: f64,
    pub extremal: Option<ExtremalSummary>,
}

const NONEXPANSIVE_SLACK: f64 = 1e-12;

/// Iterates exact `H` on both tables, anchoring each at `(0,0)`, and measures
/// how fast their span difference decays.
pub fn contraction_diagnostic(
    mdp: &TabularMdp,
    set: &AmbiguitySet,
    q1: &QTable,
    q2: &QTable,
    k_steps: usize,
    extremal: Option<ExtremalConfig>,
) -> Result<ContractionReport> {
    if k_steps < 2 {
        return Err(Error::InvalidConfig("contraction diagnostic needs k_steps ≥ 2".into()));
    }
    let shape = (mdp.num_states(), mdp.num_actions());
    if (q1.num_states(), q1.num_actions()) != shape || (q2.num_states(), q2.num_actions()) != shape {
        return Err(Error::ShapeMismatch("Q tables do not match the MDP".into()));
    }
    let mut a = q1.clone();
    let mut b = q2.clone();
    a.anchor_at(0, 0);
    b.anchor_at(0, 0);
    let scale = 1.0 + a.values().iter().chain(b.values()).fold(0.0f64, |m, x| m.max(x.abs()));
    let noise_floor = 64.0 * f64::EPSILON * scale;
    // Tables equal up to a constant are the same point of the quotient space.
    if a.span_diff(&b) <= noise_floor {
        b = a.clone();
    }

    let mut spans = vec![a.span_diff(&b)];
    let mut iterates = vec![(a.clone(), b.clone())];
    for _ in 0..k_steps {
        a = apply_optimal_operator(mdp, set, &a)?;
        b = apply_optimal_operator(mdp, set, &b)?;
        a.anchor_at(0, 0);
        b.anchor_at(0, 0);
        spans.push(a.span_diff(&b));
        iterates.push((a.clone(), b.clone()));
    }

    let mut ratios = Vec::new();
    let mut nonexpansive = true;
    for w in spans.windows(2) {
        if w[0] > noise_floor {
            let r = w[1] / w[0];
            nonexpansive &= r <= 1.0 + NONEXPANSIVE_SLACK;
            ratios.push(r);
        } else if w[0] == 0.0 {
            ratios.push(0.0);
        } else {
            nonexpansive &= w[1] <= w[0] + noise_floor;
        }
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);

    let points: Vec<(f64, f64)> = spans
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > noise_floor)
        .map(|(k, s)| (k as f64, s.ln()))
        .collect();
    let (gamma_emp, fit_residual) = match fit_line(&points) {
        Some((slope, residual)) => (slope.exp(), residual),
        None => (0.0, 0.0),
    };

    let extremal = match extremal {
        Some(cfg) => Some(extremal_summary(mdp, set, &iterates, cfg)?),
        None => None,
    };
    Ok(ContractionReport {
        spans,
        ratios,
        max_ratio,
        nonexpansive,
        gamma_emp,
        fit_residual,
        fit_points: points.len(),
        noise_floor,
        extremal,
    })
}

/// Least-squares slope and RMS residual; `None` with fewer than two points.
fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    Some((slope, (rss / n).sqrt()))
}

/// Fluctuation matrices of the greedy policies of the final iterates, under
/// both the nominal kernel and the worst-case kernel at each iterate.
fn extremal_summary(mdp: &TabularMdp, set: &AmbiguitySet, iterates: &[(QTable, QTable)], cfg: ExtremalConfig) -> Result<ExtremalSummary> {
    let (last_a, last_b) = iterates.last().expect("at least one iterate");
    let mut family: Vec<DMatrix<f64>> = Vec::new();
    for q in [last_a, last_b] {
        let policy = q.greedy_policy();
        let worst = worst_case_kernel(mdp, q.greedy_values().as_slice(), set)?;
        for kernel in [mdp.kernel(), &worst] {
            let f = fluctuation_matrix(&induced_chain(mdp, &policy, kernel)?)?;
            if !family.iter().any(|g| (g - &f).amax() <= 1e-14) {
                family.push(f);
            }
        }
    }
    let rho = family.iter().map(spectral_radius).fold(0.0, f64::max);
    let alpha = cfg.alpha.unwrap_or(0.5 * (rho + 1.0));
    let estimates = iterates
        .iter()
        .map(|(a, b)| {
            let x: Vec<f64> = a.greedy_values().0.iter().zip(b.greedy_values().0).map(|(x, y)| x - y).collect();
            truncated_extremal_seminorm(&x, &family, cfg.k_trunc, alpha, cfg.beam_width).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtremalSummary {
        k_trunc: cfg.k_trunc,
        alpha,
        family_size: family.len(),
        max_spectral_radius: rho,
        estimates,
    })
}
