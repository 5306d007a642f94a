use std::sync::Arc;

use super::{check_inputs, dot, DualCertificate, SupportResult};
use crate::error::{Error, Result};

const LAMBDA_CAP: f64 = 1e12;
const GOLDEN_REL_TOL: f64 = 1e-10;

/// Wasserstein ball of radius `δ` and order `l` around a nominal row, with
/// the transport cost `d^l` cached at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct WassersteinSet {
    radius: f64,
    order: f64,
    radius_pow: f64,
    cost: Arc<Vec<Vec<f64>>>,
}

impl WassersteinSet {
    pub fn new(radius: f64, order: f64, metric: &[Vec<f64>]) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::RadiusOutOfRange {
                family: "wasserstein",
                radius,
            });
        }
        if !(order.is_finite() && order >= 1.0) {
            return Err(Error::InvalidOrder(order));
        }
        let cost = metric
            .iter()
            .map(|row| row.iter().map(|d| d.powf(order)).collect())
            .collect();
        Ok(WassersteinSet {
            radius,
            order,
            radius_pow: radius.powf(order),
            cost: Arc::new(cost),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    /// Transport cost matrix `d(s, y)^l`.
    pub fn cost(&self) -> &[Vec<f64>] {
        &self.cost
    }

    /// `δ^l`.
    pub fn budget(&self) -> f64 {
        self.radius_pow
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::RadiusOutOfRange {
                family: "wasserstein",
                radius,
            });
        }
        Ok(WassersteinSet {
            radius,
            radius_pow: radius.powf(self.order),
            ..self.clone()
        })
    }

    fn check_shape(&self, n: usize) -> Result<()> {
        if self.cost.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "metric is {}x{}, distribution has {n} entries",
                self.cost.len(),
                self.cost.len()
            )));
        }
        Ok(())
    }

    /// Dual objective `−λδ^l + Σ_s p(s)·min_y [V(y) + λ·c(s,y)]`.
    pub fn dual_objective(&self, p: &[f64], v: &[f64], lambda: f64) -> f64 {
        let mut total = -lambda * self.radius_pow;
        for (s, &ps) in p.iter().enumerate() {
            if ps > 0.0 {
                total += ps * self.inner_min(s, v, lambda);
            }
        }
        total
    }

    fn inner_min(&self, s: usize, v: &[f64], lambda: f64) -> f64 {
        self.cost[s]
            .iter()
            .zip(v)
            .map(|(c, x)| x + lambda * c)
            .fold(f64::INFINITY, f64::min)
    }

    /// Right derivative of the dual objective at `lambda`: among the inner
    /// minimizers, the one with the smallest cost is the one that survives
    /// as `lambda` grows.
    fn right_slope(&self, p: &[f64], v: &[f64], lambda: f64) -> f64 {
        let mut slope = -self.radius_pow;
        for (s, &ps) in p.iter().enumerate() {
            if ps <= 0.0 {
                continue;
            }
            let row = &self.cost[s];
            let best = self.inner_min(s, v, lambda);
            let tol = 1e-12 * (1.0 + best.abs());
            let c = row
                .iter()
                .zip(v)
                .filter(|(c, x)| *x + lambda * *c <= best + tol)
                .map(|(c, _)| *c)
                .fold(f64::INFINITY, f64::min);
            slope += ps * c;
        }
        slope
    }

    /// Maximizing multiplier of the concave dual: bracket by doubling, then
    /// golden-section, then snap to the nearest exact breakpoint.
    fn optimal_lambda(&self, p: &[f64], v: &[f64]) -> Result<f64> {
        if self.right_slope(p, v, 0.0) <= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.right_slope(p, v, hi) > 0.0 {
            hi *= 2.0;
            if hi > LAMBDA_CAP {
                return Err(Error::BracketDiverged(LAMBDA_CAP));
            }
        }
        let f = |lambda: f64| self.dual_objective(p, v, lambda);
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let tol = GOLDEN_REL_TOL * (1.0 + hi);
        let (mut a, mut b) = (0.0, hi);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while b - a > tol {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = f(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = f(x1);
            }
        }
        let mut best = 0.5 * (a + b);
        let mut best_val = f(best);
        // The objective is piecewise linear; its maximum sits on a kink
        // where two inner minimizers of some source state tie.
        let width = (b - a).max(tol);
        let (lo, up) = (a - 4.0 * width, b + 4.0 * width);
        for (s, &ps) in p.iter().enumerate() {
            if ps <= 0.0 {
                continue;
            }
            let row = &self.cost[s];
            for y1 in 0..v.len() {
                for y2 in 0..v.len() {
                    let dc = row[y2] - row[y1];
                    if dc <= 0.0 {
                        continue;
                    }
                    let kink = (v[y1] - v[y2]) / dc;
                    if kink >= lo.max(0.0) && kink <= up {
                        let val = f(kink);
                        if val > best_val {
                            best = kink;
                            best_val = val;
                        }
                    }
                }
            }
        }
        Ok(best)
    }

    pub(super) fn value(&self, p: &[f64], v: &[f64]) -> Result<f64> {
        self.check_shape(v.len())?;
        if self.radius_pow == 0.0 {
            return Ok(dot(p, v));
        }
        let lambda = self.optimal_lambda(p, v)?;
        Ok(self.dual_objective(p, v, lambda))
    }

    /// Support value from the dual, a primal worst-case row assembled from
    /// the inner minimizers at `λ*`, and `λ*` as certificate.
    pub fn support(&self, p: &[f64], v: &[f64]) -> Result<SupportResult> {
        check_inputs(p, v)?;
        self.check_shape(v.len())?;
        if self.radius_pow == 0.0 {
            return Ok(SupportResult {
                value: dot(p, v),
                minimizer: p.to_vec(),
                dual: None,
            });
        }
        let lambda = self.optimal_lambda(p, v)?;
        let value = self.dual_objective(p, v, lambda);
        let minimizer = self.primal_row(p, v, lambda);
        Ok(SupportResult {
            value,
            minimizer,
            dual: Some(DualCertificate::Lambda(lambda)),
        })
    }

    /// Transport plan built from the inner minimizers at `lambda`. Each source
    /// sends its mass to its cheapest (`lo`) or most expensive (`hi`) tied
    /// minimizer, mixed so that the total cost matches the budget.
    fn primal_row(&self, p: &[f64], v: &[f64], lambda: f64) -> Vec<f64> {
        let n = v.len();
        let vmax = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let cmax = self.cost.iter().flatten().copied().fold(0.0, f64::max);
        let tol = 1e-10 * (1.0 + vmax + lambda * cmax);
        let mut lo_dest = vec![0; n];
        let mut hi_dest = vec![0; n];
        let (mut cost_lo, mut cost_hi) = (0.0, 0.0);
        for (s, &ps) in p.iter().enumerate() {
            if ps <= 0.0 {
                continue;
            }
            let row = &self.cost[s];
            let best = self.inner_min(s, v, lambda);
            let mut lo: Option<usize> = None;
            let mut hi: Option<usize> = None;
            for y in 0..n {
                if v[y] + lambda * row[y] <= best + tol {
                    if lo.is_none_or(|l| row[y] < row[l]) {
                        lo = Some(y);
                    }
                    if hi.is_none_or(|h| row[y] > row[h]) {
                        hi = Some(y);
                    }
                }
            }
            let (lo, hi) = (lo.unwrap_or(s), hi.unwrap_or(s));
            lo_dest[s] = lo;
            hi_dest[s] = hi;
            cost_lo += ps * row[lo];
            cost_hi += ps * row[hi];
        }
        let budget = self.radius_pow;
        let mut q = vec![0.0; n];
        if cost_hi <= budget {
            for s in 0..n {
                q[hi_dest[s]] += p[s];
            }
        } else if cost_lo <= budget {
            let theta = if cost_hi > cost_lo {
                (budget - cost_lo) / (cost_hi - cost_lo)
            } else {
                1.0
            };
            for s in 0..n {
                q[lo_dest[s]] += (1.0 - theta) * p[s];
                q[hi_dest[s]] += theta * p[s];
            }
        } else {
            // Only reachable through round-off: scale moves toward staying put.
            let theta = budget / cost_lo;
            for s in 0..n {
                q[lo_dest[s]] += theta * p[s];
                q[s] += (1.0 - theta) * p[s];
            }
        }
        q
    }
}

/// Wasserstein support function for an explicit metric.
pub fn support_wasserstein(p: &[f64], v: &[f64], radius: f64, order: f64, metric: &[Vec<f64>]) -> Result<SupportResult> {
    WassersteinSet::new(radius, order, metric)?.support(p, v)
}
