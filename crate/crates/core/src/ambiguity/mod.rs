//! Support functions `σ_P(V) = min_{q ∈ P} q·V` over (s,a)-rectangular
//! ambiguity sets centered at a nominal row.

mod contamination;
mod lp_oracle;
mod tv;
mod wasserstein;

pub use contamination::support_contamination;
pub use lp_oracle::{support_lp_oracle, wasserstein_distance_pow, LP_ORACLE_MAX_STATES};
pub use tv::{support_tv, tv_dual_objective, tv_dual_value};
pub use wasserstein::{support_wasserstein, WassersteinSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Kernel, TabularMdp};

/// Tolerance used when checking that an argument is a probability vector.
pub(crate) const SIMPLEX_TOL: f64 = 1e-9;

/// Ambiguity-set family tag as written in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Contamination,
    Tv,
    Wasserstein,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Contamination => "contamination",
            Family::Tv => "tv",
            Family::Wasserstein => "wasserstein",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "contamination" => Ok(Family::Contamination),
            "tv" | "total-variation" => Ok(Family::Tv),
            "wasserstein" => Ok(Family::Wasserstein),
            other => Err(Error::InvalidConfig(format!(
                "unknown ambiguity family '{other}', expected contamination, tv or wasserstein"
            ))),
        }
    }
}

/// Config fragment `{"family": ..., "radius": δ, "order": l}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    pub family: Family,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
}

impl AmbiguitySpec {
    pub fn contamination(radius: f64) -> Self {
        AmbiguitySpec {
            family: Family::Contamination,
            radius,
            order: None,
        }
    }

    pub fn tv(radius: f64) -> Self {
        AmbiguitySpec {
            family: Family::Tv,
            radius,
            order: None,
        }
    }

    pub fn wasserstein(radius: f64, order: f64) -> Self {
        AmbiguitySpec {
            family: Family::Wasserstein,
            radius,
            order: Some(order),
        }
    }

    /// Binds the spec to an MDP; Wasserstein sets take the MDP's metric.
    pub fn resolve(&self, mdp: &TabularMdp) -> Result<AmbiguitySet> {
        match self.family {
            Family::Contamination => AmbiguitySet::contamination(self.radius),
            Family::Tv => AmbiguitySet::tv(self.radius),
            Family::Wasserstein => {
                let metric = mdp.metric().ok_or(Error::MissingMetric)?;
                AmbiguitySet::wasserstein(self.radius, self.order.unwrap_or(1.0), metric)
            }
        }
    }
}

/// A resolved ambiguity set, ready for support-function evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum AmbiguitySet {
    /// `{(1−δ)p + δq : q ∈ Δ(S)}`.
    Contamination { radius: f64 },
    /// `{q ∈ Δ(S) : ½‖q − p‖₁ ≤ δ}`.
    TotalVariation { radius: f64 },
    /// `{q ∈ Δ(S) : W_l(p, q) ≤ δ}`.
    Wasserstein(WassersteinSet),
}

/// Dual variables certifying a support value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DualCertificate {
    /// Optimal `μ ≥ 0` of the total-variation dual.
    TvShift(Vec<f64>),
    /// Optimal multiplier `λ ≥ 0` of the Wasserstein dual.
    Lambda(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportResult {
    pub value: f64,
    /// A worst-case row `q*` inside the set with `q*·V = value`.
    pub minimizer: Vec<f64>,
    pub dual: Option<DualCertificate>,
}

pub(crate) fn check_radius_unit(family: &'static str, radius: f64) -> Result<()> {
    if radius.is_finite() && (0.0..1.0).contains(&radius) {
        Ok(())
    } else {
        Err(Error::RadiusOutOfRange { family, radius })
    }
}

pub(crate) fn check_inputs(p: &[f64], v: &[f64]) -> Result<()> {
    if p.len() != v.len() || p.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "distribution has {} entries, value table {}",
            p.len(),
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("value table"));
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|x| x.is_nan() || *x < 0.0) || (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::ShapeMismatch("center is not a probability vector".into()));
    }
    Ok(())
}

/// Lowest index attaining the minimum of `v`.
pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

impl AmbiguitySet {
    pub fn contamination(radius: f64) -> Result<Self> {
        check_radius_unit("contamination", radius)?;
        Ok(AmbiguitySet::Contamination { radius })
    }

    pub fn tv(radius: f64) -> Result<Self> {
        check_radius_unit("tv", radius)?;
        Ok(AmbiguitySet::TotalVariation { radius })
    }

    pub fn wasserstein(radius: f64, order: f64, metric: &[Vec<f64>]) -> Result<Self> {
        Ok(AmbiguitySet::Wasserstein(WassersteinSet::new(radius, order, metric)?))
    }

    pub fn family(&self) -> Family {
        match self {
            AmbiguitySet::Contamination { .. } => Family::Contamination,
            AmbiguitySet::TotalVariation { .. } => Family::Tv,
            AmbiguitySet::Wasserstein(_) => Family::Wasserstein,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            AmbiguitySet::Contamination { radius } | AmbiguitySet::TotalVariation { radius } => *radius,
            AmbiguitySet::Wasserstein(w) => w.radius(),
        }
    }

    pub fn spec(&self) -> AmbiguitySpec {
        match self {
            AmbiguitySet::Contamination { radius } => AmbiguitySpec::contamination(*radius),
            AmbiguitySet::TotalVariation { radius } => AmbiguitySpec::tv(*radius),
            AmbiguitySet::Wasserstein(w) => AmbiguitySpec::wasserstein(w.radius(), w.order()),
        }
    }

    /// Same family with a different radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        match self {
            AmbiguitySet::Contamination { .. } => Self::contamination(radius),
            AmbiguitySet::TotalVariation { .. } => Self::tv(radius),
            AmbiguitySet::Wasserstein(w) => Ok(AmbiguitySet::Wasserstein(w.with_radius(radius)?)),
        }
    }

    /// Exact support function with a worst-case row and dual certificate.
    pub fn support(&self, p: &[f64], v: &[f64]) -> Result<SupportResult> {
        match self {
            AmbiguitySet::Contamination { radius } => support_contamination(p, v, *radius),
            AmbiguitySet::TotalVariation { radius } => support_tv(p, v, *radius),
            AmbiguitySet::Wasserstein(w) => w.support(p, v),
        }
    }

    /// Value-only support function, skipping minimizer assembly and input
    /// checks. `p` must be a probability vector of the same length as `v`.
    pub fn support_value(&self, p: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            AmbiguitySet::Contamination { radius } => Ok(contamination::value(p, v, *radius)),
            AmbiguitySet::TotalVariation { radius } => Ok(tv::value(p, v, *radius)),
            AmbiguitySet::Wasserstein(w) => w.value(p, v),
        }
    }
}

/// For each `(s, a)`, the worst-case row of `P^a_s` against `V`.
pub fn worst_case_kernel(mdp: &TabularMdp, v: &[f64], set: &AmbiguitySet) -> Result<Kernel> {
    (0..mdp.num_states())
        .map(|s| {
            (0..mdp.num_actions())
                .map(|a| set.support(mdp.row(s, a), v).map(|r| r.minimizer))
                .collect()
        })
        .collect()
}
