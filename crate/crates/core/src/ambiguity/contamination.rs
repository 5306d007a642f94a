use super::{argmin, check_inputs, check_radius_unit, dot, SupportResult};
use crate::error::Result;

pub(super) fn value(p: &[f64], v: &[f64], radius: f64) -> f64 {
    let min_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    (1.0 - radius) * dot(p, v) + radius * min_v
}

/// `σ = (1−δ)·p·V + δ·min V`, attained at `(1−δ)p + δ·onehot(argmin V)`.
pub fn support_contamination(p: &[f64], v: &[f64], radius: f64) -> Result<SupportResult> {
    check_radius_unit("contamination", radius)?;
    check_inputs(p, v)?;
    let target = argmin(v);
    let mut minimizer: Vec<f64> = p.iter().map(|x| (1.0 - radius) * x).collect();
    minimizer[target] += radius;
    Ok(SupportResult {
        value: value(p, v, radius),
        minimizer,
        dual: None,
    })
}
