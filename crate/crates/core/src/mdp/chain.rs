use nalgebra::{DMatrix, DVector};

use super::{EvalResult, Kernel, Policy, StationaryDist, TabularMdp, TransitionMatrix, ValueTable};
use crate::error::{Error, Result};

/// Upper bound on the number of matrix powers tried by [`mixing_time`].
pub const MIXING_TIME_CAP: u64 = 1_000_000;

const ERGODIC_RESIDUAL_TOL: f64 = 1e-6;

/// `max(V) − min(V)`; zero for an empty slice.
pub fn span(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// `P_π[s][s'] = Σ_a π(a|s)·kernel[s][a][s']`.
pub fn induced_chain(mdp: &TabularMdp, policy: &Policy, kernel: &Kernel) -> Result<TransitionMatrix> {
    mdp.check_kernel_shape(kernel)?;
    policy.check_shape(mdp)?;
    let n = mdp.num_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for (a, &w) in policy.row(s).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (sp, &q) in kernel[s][a].iter().enumerate() {
                p[(s, sp)] += w * q;
            }
        }
    }
    Ok(p)
}

fn balance_residual(p: &TransitionMatrix, d: &[f64]) -> f64 {
    let n = d.len();
    (0..n)
        .map(|j| {
            let flow: f64 = (0..n).map(|i| d[i] * p[(i, j)]).sum();
            (flow - d[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Unique `d` with `dᵀP = dᵀ`, `Σd = 1`, by a direct dense solve of
/// `(Pᵀ − I)d = 0` with the last balance equation replaced by normalization.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<StationaryDist> {
    let n = p.nrows();
    if n == 0 || p.ncols() != n {
        return Err(Error::ShapeMismatch("transition matrix must be square and nonempty".into()));
    }
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let d = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NotErgodic("singular balance system".into()))?;
    if d.iter().any(|x| !x.is_finite() || *x < -1e-9) {
        return Err(Error::NotErgodic("balance solution has negative mass".into()));
    }
    let mut probs: Vec<f64> = d.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    for x in &mut probs {
        *x /= total;
    }
    let residual = balance_residual(p, &probs);
    if residual > ERGODIC_RESIDUAL_TOL {
        return Err(Error::NotErgodic(format!("balance residual {residual:e}")));
    }
    Ok(StationaryDist {
        probs,
        balance_residual: residual,
    })
}

/// Gain `g = Σ_s d(s) r_π(s)` and bias solving `V = r_π − g·e + P_π V` with
/// `V(anchor) = 0`, under the given kernel.
pub fn gain_bias(mdp: &TabularMdp, policy: &Policy, kernel: &Kernel, anchor: usize) -> Result<EvalResult> {
    let n = mdp.num_states();
    if anchor >= n {
        return Err(Error::ShapeMismatch(format!("anchor {anchor} out of range")));
    }
    let p = induced_chain(mdp, policy, kernel)?;
    let dist = stationary_distribution(&p)?;
    let r_pi: Vec<f64> = (0..n)
        .map(|s| (0..mdp.num_actions()).map(|a| policy.prob(s, a) * mdp.reward(s, a)).sum())
        .collect();
    let gain: f64 = dist.probs.iter().zip(&r_pi).map(|(d, r)| d * r).sum();

    // Unknowns: V(s) for s != anchor, and g in the anchor's column.
    let mut m = DMatrix::identity(n, n) - &p;
    for s in 0..n {
        m[(s, anchor)] = 1.0;
    }
    let rhs = DVector::from_vec(r_pi);
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotErgodic("singular Poisson system".into()))?;
    let mut bias = ValueTable(x.iter().copied().collect());
    bias[anchor] = 0.0;
    if bias.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotErgodic("non-finite bias".into()));
    }
    Ok(EvalResult { gain, bias, anchor })
}

/// Smallest `t ≥ 1` with `max_s ‖P^t(s,·) − ν‖₁ ≤ 1/2`.
pub fn mixing_time(p: &TransitionMatrix) -> Result<u64> {
    let nu = stationary_distribution(p)?.probs;
    let n = nu.len();
    let mut power = p.clone();
    for t in 1..=MIXING_TIME_CAP {
        let worst = (0..n)
            .map(|s| (0..n).map(|j| (power[(s, j)] - nu[j]).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if worst <= 0.5 {
            return Ok(t);
        }
        power = &power * p;
    }
    Err(Error::MixingTimeCap(MIXING_TIME_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> TransitionMatrix {
        let n = rows.len();
        DMatrix::from_fn(n, n, |i, j| rows[i][j])
    }

    fn power_iteration(p: &TransitionMatrix, iters: usize) -> Vec<f64> {
        let n = p.nrows();
        let mut d = vec![1.0 / n as f64; n];
        for _ in 0..iters {
            d = (0..n).map(|j| (0..n).map(|i| d[i] * p[(i, j)]).sum()).collect();
        }
        d
    }

    fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> TransitionMatrix {
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() + 0.05);
        for i in 0..n {
            let total: f64 = m.row(i).sum();
            for j in 0..n {
                m[(i, j)] /= total;
            }
        }
        m
    }

    #[test]
    fn stationary_symmetric_and_two_state() {
        let d = stationary_distribution(&mat(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert!((d.probs[0] - 0.5).abs() < 1e-14);
        let d = stationary_distribution(&mat(&[&[0.9, 0.1], &[0.5, 0.5]])).unwrap();
        // Balance: 0.1 d0 = 0.5 d1.
        assert!((d.probs[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((d.probs[1] - 1.0 / 6.0).abs() < 1e-12);
        let oracle = power_iteration(&mat(&[&[0.9, 0.1], &[0.5, 0.5]]), 2000);
        assert!((oracle[0] - d.probs[0]).abs() < 1e-12);
    }

    #[test]
    fn identity_is_not_ergodic() {
        let err = stationary_distribution(&DMatrix::identity(3, 3)).unwrap_err();
        assert!(matches!(err, Error::NotErgodic(_)));
    }

    #[test]
    fn stationary_matches_power_iteration_on_random_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 3, 5, 8] {
            let p = random_chain(&mut rng, n);
            let d = stationary_distribution(&p).unwrap();
            assert!(d.balance_residual <= 1e-8);
            let oracle = power_iteration(&p, 5000);
            for (a, b) in d.probs.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    /// Point-mass initial distributions advanced one vector-matrix product
    /// at a time.
    fn mixing_time_brute(p: &TransitionMatrix) -> u64 {
        let n = p.nrows();
        let nu = power_iteration(p, 20_000);
        let mut mus: Vec<Vec<f64>> = (0..n)
            .map(|s| (0..n).map(|j| if j == s { 1.0 } else { 0.0 }).collect())
            .collect();
        for t in 1.. {
            for mu in &mut mus {
                *mu = (0..n).map(|j| (0..n).map(|i| mu[i] * p[(i, j)]).sum()).collect();
            }
            let worst = mus
                .iter()
                .map(|mu| mu.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum::<f64>())
                .fold(0.0, f64::max);
            if worst <= 0.5 {
                return t;
            }
        }
        unreachable!()
    }

    #[test]
    fn mixing_time_cases() {
        assert_eq!(mixing_time(&mat(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap(), 1);
        assert_eq!(mixing_time(&mat(&[&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]])).unwrap(), 1);
        let p = mat(&[&[0.9, 0.1], &[0.5, 0.5]]);
        // Second eigenvalue 0.4; the slow row is state 1 with
        // ‖P^t(1,·) − ν‖₁ = (5/3)·0.4^t, first ≤ 1/2 at t = 2.
        assert_eq!(mixing_time(&p).unwrap(), 2);
        assert_eq!(mixing_time_brute(&p), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 4, 6] {
            let p = random_chain(&mut rng, n);
            assert_eq!(mixing_time(&p).unwrap(), mixing_time_brute(&p));
        }
    }

    #[test]
    fn span_basics() {
        assert_eq!(span(&[2.0, 2.0, 2.0]), 0.0);
        assert_eq!(span(&[1.0, 4.0, 2.0]), 3.0);
        let v = [0.3, -1.25, 8.5];
        let shifted: Vec<f64> = v.iter().map(|x| x + 7.0).collect();
        assert_eq!(span(&v), span(&shifted));
    }

    /// Two states, two actions; `rows[s]` is the next-state row of both actions.
    fn two_action_mdp(rows: [[f64; 2]; 2], reward: [f64; 2]) -> TabularMdp {
        TabularMdp::new(
            vec![vec![rows[0].to_vec(); 2], vec![rows[1].to_vec(); 2]],
            vec![vec![reward[0]; 2], vec![reward[1]; 2]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn induced_chain_cases() {
        // Action 0 jumps to state 0, action 1 to state 1.
        let mdp = TabularMdp::new(
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            vec![vec![0.0; 2]; 2],
            None,
        )
        .unwrap();
        let p = induced_chain(&mdp, &Policy::deterministic(&[0, 0], 2), mdp.kernel()).unwrap();
        assert_eq!(p, mat(&[&[1.0, 0.0], &[1.0, 0.0]]));
        let p = induced_chain(&mdp, &Policy::uniform(2, 2), mdp.kernel()).unwrap();
        assert_eq!(p, mat(&[&[0.5, 0.5], &[0.5, 0.5]]));

        let same = two_action_mdp([[0.3, 0.7], [0.3, 0.7]], [0.0, 0.0]);
        let p = induced_chain(&same, &Policy::uniform(2, 2), same.kernel()).unwrap();
        assert!((p[(0, 1)] - 0.7).abs() < 1e-15);

        let bad: Kernel = vec![vec![vec![1.0]]];
        assert!(matches!(
            induced_chain(&mdp, &Policy::uniform(2, 2), &bad),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn gain_bias_cases() {
        let single = TabularMdp::new(vec![vec![vec![1.0], vec![1.0]]], vec![vec![0.2, 0.8]], None).unwrap();
        let res = gain_bias(&single, &Policy::uniform(1, 2), single.kernel(), 0).unwrap();
        assert!((res.gain - 0.5).abs() < 1e-15);
        assert_eq!(res.bias.0, vec![0.0]);

        let constant = two_action_mdp([[0.9, 0.1], [0.5, 0.5]], [0.4, 0.4]);
        let res = gain_bias(&constant, &Policy::uniform(2, 2), constant.kernel(), 0).unwrap();
        assert!((res.gain - 0.4).abs() < 1e-14);
        assert!(res.bias.0.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gain_bias_two_state_against_simulation() {
        let mdp = two_action_mdp([[0.9, 0.1], [0.5, 0.5]], [1.0, 0.0]);
        let res = gain_bias(&mdp, &Policy::uniform(2, 2), mdp.kernel(), 0).unwrap();
        assert!((res.gain - 5.0 / 6.0).abs() < 1e-12);
        // V(1) − V(0): from V(0) = 1 − g + 0.9 V(0) + 0.1 V(1), V(0) = 0.
        assert!((res.bias[1] - (-(1.0 - 5.0 / 6.0) / 0.1)).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut s, mut total) = (0usize, 0.0);
        let steps = 1_000_000;
        for _ in 0..steps {
            total += if s == 0 { 1.0 } else { 0.0 };
            let stay = if s == 0 { 0.9 } else { 0.5 };
            let to_zero = if s == 0 { rng.random::<f64>() < stay } else { rng.random::<f64>() < 0.5 };
            s = if to_zero { 0 } else { 1 };
        }
        assert!((total / steps as f64 - res.gain).abs() < 1e-2);
    }

    #[test]
    fn gain_bias_satisfies_poisson_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2, 4, 6] {
            let p = random_chain(&mut rng, n);
            let kernel: Kernel = (0..n)
                .map(|s| vec![(0..n).map(|j| p[(s, j)]).collect::<Vec<_>>()])
                .collect();
            let reward = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
            let mdp = TabularMdp::new(kernel, reward, None).unwrap();
            let res = gain_bias(&mdp, &Policy::uniform(n, 1), mdp.kernel(), 0).unwrap();
            for s in 0..n {
                let pv: f64 = (0..n).map(|j| p[(s, j)] * res.bias[j]).sum();
                let lhs = res.bias[s] + res.gain;
                assert!((lhs - (mdp.reward(s, 0) + pv)).abs() <= 1e-8);
            }
            let t_mix = mixing_time(&p).unwrap();
            assert!(res.bias.span() <= 4.0 * t_mix as f64);
        }
    }
}
