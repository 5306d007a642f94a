use serde::Serialize;

use super::{MdpFile, ROW_SUM_TOL};

const METRIC_TOL: f64 = 1e-12;

/// Outcome of [`validate_mdp`]: empty `violations` means pass.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant of an MDP file and lists each
/// violation with its indices.
pub fn validate_mdp(mdp: &MdpFile) -> ValidationReport {
    let mut out = Vec::new();
    let (n, m) = (mdp.num_states, mdp.num_actions);
    if n == 0 {
        out.push("num_states must be >= 1".to_string());
    }
    if m == 0 {
        out.push("num_actions must be >= 1".to_string());
    }

    if mdp.kernel.len() != n {
        out.push(format!("kernel has {} states, expected {n}", mdp.kernel.len()));
    }
    for (s, rows) in mdp.kernel.iter().enumerate() {
        if rows.len() != m {
            out.push(format!("kernel has {} actions at s={s}, expected {m}", rows.len()));
        }
        for (a, row) in rows.iter().enumerate() {
            if row.len() != n {
                out.push(format!("kernel row length {} at (s={s},a={a}), expected {n}", row.len()));
                continue;
            }
            if let Some(sp) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
                out.push(format!("negative or non-finite probability at (s={s},a={a},s'={sp})"));
            }
            let total: f64 = row.iter().sum();
            if total.is_nan() || (total - 1.0).abs() > ROW_SUM_TOL {
                out.push(format!("row sum {total} at (s={s},a={a})"));
            }
        }
    }

    if mdp.reward.len() != n {
        out.push(format!("reward has {} states, expected {n}", mdp.reward.len()));
    }
    for (s, row) in mdp.reward.iter().enumerate() {
        if row.len() != m {
            out.push(format!("reward has {} actions at s={s}, expected {m}", row.len()));
        }
        for (a, &r) in row.iter().enumerate() {
            if !(r.is_finite() && (0.0..=1.0).contains(&r)) {
                out.push(format!("reward out of [0,1] at (s={s},a={a}): {r}"));
            }
        }
    }

    if let Some(d) = &mdp.metric {
        check_metric(d, n, &mut out);
    }
    ValidationReport { violations: out }
}

fn check_metric(d: &[Vec<f64>], n: usize, out: &mut Vec<String>) {
    if d.len() != n || d.iter().any(|row| row.len() != n) {
        out.push(format!("metric must be {n}x{n}"));
        return;
    }
    for i in 0..n {
        if d[i][i] != 0.0 {
            out.push(format!("metric diagonal nonzero at {i}"));
        }
        for j in 0..n {
            if !(d[i][j].is_finite() && d[i][j] >= 0.0) {
                out.push(format!("metric negative or non-finite at ({i},{j})"));
            }
            if (d[i][j] - d[j][i]).abs() > METRIC_TOL {
                out.push(format!("metric not symmetric at ({i},{j})"));
            }
            for k in 0..n {
                if d[i][k] > d[i][j] + d[j][k] + METRIC_TOL {
                    out.push(format!("metric violates triangle inequality at ({i},{j},{k})"));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(kernel: Vec<Vec<Vec<f64>>>, reward: Vec<Vec<f64>>) -> MdpFile {
        MdpFile {
            num_states: kernel.len(),
            num_actions: kernel[0].len(),
            kernel,
            reward,
            metric: None,
        }
    }

    #[test]
    fn valid_two_state() {
        let f = file(vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]], vec![vec![0.0], vec![1.0]]);
        assert!(validate_mdp(&f).is_pass());
    }

    #[test]
    fn bad_row_sum_is_reported_with_indices() {
        let f = file(vec![vec![vec![0.6, 0.6]], vec![vec![0.5, 0.5]]], vec![vec![0.0], vec![1.0]]);
        let report = validate_mdp(&f);
        assert_eq!(report.violations, vec!["row sum 1.2 at (s=0,a=0)".to_string()]);
    }

    #[test]
    fn reward_out_of_range() {
        let f = file(vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]], vec![vec![1.5], vec![1.0]]);
        let report = validate_mdp(&f);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].starts_with("reward out of [0,1]"));
    }

    #[test]
    fn metric_checks() {
        let mut f = file(vec![vec![vec![1.0, 0.0, 0.0]]; 3], vec![vec![0.5]; 3]);
        f.metric = Some(vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]]);
        let report = validate_mdp(&f);
        assert!(report.violations.iter().any(|v| v.contains("triangle")));

        f.metric = Some(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.5, 0.0]]);
        let report = validate_mdp(&f);
        assert!(report.violations.iter().any(|v| v.contains("symmetric")));

        f.metric = Some(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]);
        assert!(validate_mdp(&f).is_pass());
    }

    #[test]
    fn negative_entry_and_ragged_shapes() {
        let f = file(vec![vec![vec![1.5, -0.5]], vec![vec![0.5, 0.5, 0.0]]], vec![vec![0.0], vec![1.0]]);
        let report = validate_mdp(&f);
        assert!(report.violations.iter().any(|v| v.contains("negative")));
        assert!(report.violations.iter().any(|v| v.contains("row length")));
    }
}
