use super::{argmin, check_inputs, check_radius_unit, dot, DualCertificate, SupportResult};
use crate::error::Result;
use crate::mdp::span;

/// Greedy primal: drain up to `radius` mass from the highest-valued states
/// onto the lowest-valued one. Calls `on_move(state, mass)` per drained state
/// and returns `(value, threshold)` where `threshold` is the value level at
/// which draining stopped.
fn drain(p: &[f64], v: &[f64], radius: f64, mut on_move: impl FnMut(usize, f64)) -> (f64, f64) {
    let target = argmin(v);
    let min_v = v[target];
    let mut order: Vec<usize> = (0..v.len()).collect();
    // Descending by value; stable sort keeps lower indices first on ties.
    order.sort_by(|&i, &j| v[j].total_cmp(&v[i]));
    let mut budget = radius;
    let mut value = dot(p, v);
    let mut threshold = min_v;
    for &s in &order {
        if budget <= 0.0 || v[s] <= min_v {
            break;
        }
        let moved = p[s].min(budget);
        if moved > 0.0 {
            on_move(s, moved);
            value -= moved * (v[s] - min_v);
            budget -= moved;
            threshold = v[s];
        }
    }
    if budget > 0.0 {
        threshold = min_v;
    }
    (value, threshold)
}

pub(super) fn value(p: &[f64], v: &[f64], radius: f64) -> f64 {
    drain(p, v, radius, |_, _| {}).0
}

/// Exact total-variation support function by the sorting primal, with the
/// dual certificate `μ* = (V − t)₊` at the drain threshold `t`.
pub fn support_tv(p: &[f64], v: &[f64], radius: f64) -> Result<SupportResult> {
    check_radius_unit("tv", radius)?;
    check_inputs(p, v)?;
    let target = argmin(v);
    let mut q = p.to_vec();
    let (value, threshold) = drain(p, v, radius, |s, m| {
        q[s] -= m;
        q[target] += m;
    });
    let mu = v.iter().map(|x| (x - threshold).max(0.0)).collect();
    Ok(SupportResult {
        value,
        minimizer: q,
        dual: Some(DualCertificate::TvShift(mu)),
    })
}

/// Dual objective `p·(V − μ) − δ·‖V − μ‖_sp` for a given `μ ≥ 0`.
pub fn tv_dual_objective(p: &[f64], v: &[f64], radius: f64, mu: &[f64]) -> f64 {
    let shifted: Vec<f64> = v.iter().zip(mu).map(|(a, b)| a - b).collect();
    dot(p, &shifted) - radius * span(&shifted)
}

/// Maximum of the dual over clipped shifts `μ = (V − t)₊`, scanned over every
/// breakpoint `t ∈ {V(s)}`.
pub fn tv_dual_value(p: &[f64], v: &[f64], radius: f64) -> f64 {
    v.iter()
        .map(|&t| {
            let mu: Vec<f64> = v.iter().map(|x| (x - t).max(0.0)).collect();
            tv_dual_objective(p, v, radius, &mu)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
