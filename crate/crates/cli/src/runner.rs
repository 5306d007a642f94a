//! Dispatch from a resolved config to the engine and artifact writers.

use rayon::prelude::*;
use serde::Serialize;

use rarl_core::ambiguity::AmbiguitySet;
use rarl_core::critic::{estimate_q_traced, robust_td_run, TdConfig};
use rarl_core::mdp::{Policy, QTable, TabularMdp};
use rarl_core::nac::{run_nac, NacConfig};
use rarl_core::planning::{
    contraction_diagnostic, robust_optimal_control_exact, robust_policy_eval_exact, PlanningTolerance,
};
use rarl_core::qlearning::run_qlearning;
use rarl_core::sim::SampleStream;

use crate::artifacts::{fmt, fmt_opt, ArtifactWriter, GeneratedArtifacts};
use crate::config::{Algorithm, AlgorithmKind, DiagBlock, EvalTdBlock, ExperimentConfig, QLearnBlock};
use crate::error::{CliError, CliResult};
use crate::stats::quantile;

/// Runs the configured algorithm once per seed and writes all artifacts plus
/// the manifest.
pub fn run_experiment(mut cfg: ExperimentConfig) -> CliResult<GeneratedArtifacts> {
    let mdp = cfg.resolve_mdp()?;
    let set = cfg.ambiguity_set(&mdp)?;
    let mut out = ArtifactWriter::new(&cfg.output_dir)?;
    let kind = cfg.algorithm().kind();
    match cfg.algorithm().clone() {
        Algorithm::Oracle(b) => {
            let sol = robust_optimal_control_exact(&mdp, &set, &b.tolerance)?;
            out.json("oracle.json", &sol.report(&mdp, &set)?)?;
        }
        Algorithm::Qlearn(b) => {
            let results = per_seed(&cfg.seeds, |seed| qlearn_seed(&mdp, &set, &b, seed))?;
            for (seed, (rows, summary)) in cfg.seeds.iter().zip(results) {
                out.csv(&format!("qlearn_seed{seed}.csv"), &["iter", "transitions", "span_err", "residual"], &rows)?;
                out.json(&format!("qlearn_seed{seed}.json"), &summary)?;
            }
        }
        Algorithm::EvalTd(b) => {
            let results = per_seed(&cfg.seeds, |seed| eval_td_seed(&mdp, &set, &b, seed))?;
            for (seed, (rows, summary)) in cfg.seeds.iter().zip(results) {
                out.csv(
                    &format!("eval_td_seed{seed}.csv"),
                    &["phase", "iter", "transitions", "gain", "span_err", "gain_err"],
                    &rows,
                )?;
                out.json(&format!("eval_td_seed{seed}.json"), &summary)?;
            }
        }
        Algorithm::Nac(b) => {
            let results = per_seed(&cfg.seeds, |seed| nac_seed(&mdp, &set, &b.config, seed))?;
            for (seed, (rows, summary)) in cfg.seeds.iter().zip(results) {
                out.csv(&format!("nac_seed{seed}.csv"), &["iter", "transitions", "gain", "gap_to_oracle"], &rows)?;
                out.json(&format!("nac_seed{seed}.json"), &summary)?;
            }
        }
        Algorithm::Diag(b) => {
            let results = per_seed(&cfg.seeds, |seed| diag_seed(&mdp, &set, &b, seed))?;
            for (seed, (rows, report)) in cfg.seeds.iter().zip(results) {
                out.csv(&format!("diag_seed{seed}.csv"), &["step", "span", "ratio"], &rows)?;
                out.json(&format!("diag_seed{seed}.json"), &report)?;
            }
        }
    }
    out.finish(kind.name(), &cfg)
}

fn per_seed<T: Send>(seeds: &[u64], f: impl Fn(u64) -> CliResult<T> + Sync) -> CliResult<Vec<T>> {
    seeds.par_iter().map(|&s| f(s)).collect()
}

#[derive(Serialize)]
struct QLearnSummary {
    seed: u64,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    policy: Vec<Vec<f64>>,
    transitions: u64,
    span_err: Option<f64>,
    greedy_gain: f64,
    oracle_gain: Option<f64>,
}

fn qlearn_seed(mdp: &TabularMdp, set: &AmbiguitySet, b: &QLearnBlock, seed: u64) -> CliResult<(Vec<Vec<String>>, QLearnSummary)> {
    let tol = PlanningTolerance::default();
    let star = if b.reference {
        Some(robust_optimal_control_exact(mdp, set, &tol)?)
    } else {
        None
    };
    let cfg = rarl_core::qlearning::QLearnConfig {
        seed,
        ..b.config.clone()
    };
    let (q, trace) = run_qlearning(mdp, set, &cfg, star.as_ref().map(|s| &s.q))?;
    let rows = trace
        .snapshots
        .iter()
        .map(|s| vec![s.iter.to_string(), s.transitions.to_string(), fmt_opt(s.span_err), fmt(s.residual)])
        .collect();
    let policy = q.greedy_policy();
    let greedy_gain = robust_policy_eval_exact(mdp, &policy, set, &tol)?.gain;
    let summary = QLearnSummary {
        seed,
        transitions: trace.snapshots.last().map_or(0, |s| s.transitions),
        span_err: star.as_ref().map(|s| q.span_diff(&s.q)),
        greedy_gain,
        oracle_gain: star.as_ref().map(|s| s.gain),
        q: q.into(),
        policy: policy.into(),
    };
    Ok((rows, summary))
}

#[derive(Serialize)]
struct EvalTdSummary {
    seed: u64,
    g: f64,
    #[serde(rename = "V")]
    v: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    transitions: u64,
    reference_g: Option<f64>,
    #[serde(rename = "reference_V", skip_serializing_if = "Option::is_none")]
    reference_v: Option<Vec<f64>>,
}

fn td_config(b: &EvalTdBlock, seed: u64) -> TdConfig {
    TdConfig {
        seed,
        ..b.config.clone()
    }
}

fn eval_td_seed(mdp: &TabularMdp, set: &AmbiguitySet, b: &EvalTdBlock, seed: u64) -> CliResult<(Vec<Vec<String>>, EvalTdSummary)> {
    let policy = b
        .policy
        .clone()
        .unwrap_or_else(|| Policy::uniform(mdp.num_states(), mdp.num_actions()));
    policy.check_shape(mdp)?;
    let reference = if b.reference {
        Some(robust_policy_eval_exact(mdp, &policy, set, &PlanningTolerance::default())?)
    } else {
        None
    };
    let cfg = td_config(b, seed);
    let est = estimate_q_traced(mdp, &policy, set, &cfg, b.n_max, reference.as_ref())?;
    let rows = est
        .td
        .trace
        .iter()
        .map(|s| {
            vec![
                s.phase.name().to_string(),
                s.iter.to_string(),
                s.transitions.to_string(),
                fmt(s.gain),
                fmt_opt(s.span_err),
                fmt_opt(s.gain_err),
            ]
        })
        .collect();
    let summary = EvalTdSummary {
        seed,
        g: est.td.eval.gain,
        v: est.td.eval.bias.0.clone(),
        q: est.q.into(),
        transitions: est.transitions,
        reference_g: reference.as_ref().map(|r| r.gain),
        reference_v: reference.map(|r| r.bias.0),
    };
    Ok((rows, summary))
}

#[derive(Serialize)]
struct NacSummary {
    seed: u64,
    policy: Vec<Vec<f64>>,
    oracle_gain: Option<f64>,
    final_gain: Option<f64>,
    final_gap: Option<f64>,
    transitions: u64,
}

fn nac_seed(mdp: &TabularMdp, set: &AmbiguitySet, cfg: &NacConfig, seed: u64) -> CliResult<(Vec<Vec<String>>, NacSummary)> {
    let cfg = NacConfig { seed, ..cfg.clone() };
    let out = run_nac(mdp, set, &cfg)?;
    let rows = out
        .trace
        .iter()
        .map(|s| vec![s.iter.to_string(), s.transitions.to_string(), fmt_opt(s.gain), fmt_opt(s.gap_to_oracle)])
        .collect();
    let last = out.trace.last().copied();
    Ok((
        rows,
        NacSummary {
            seed,
            policy: out.policy.into(),
            oracle_gain: out.oracle_gain,
            final_gain: last.and_then(|s| s.gain),
            final_gap: last.and_then(|s| s.gap_to_oracle),
            transitions: last.map_or(0, |s| s.transitions),
        },
    ))
}

fn random_table(mdp: &TabularMdp, seed: u64, which: u64, scale: f64) -> QTable {
    let mut rng = SampleStream::new(seed).substream(0xD1A6, which, 0, 0);
    QTable::from_fn(mdp.num_states(), mdp.num_actions(), |_, _| scale * rng.uniform())
}

fn diag_seed(
    mdp: &TabularMdp,
    set: &AmbiguitySet,
    b: &DiagBlock,
    seed: u64,
) -> CliResult<(Vec<Vec<String>>, rarl_core::planning::ContractionReport)> {
    let q1 = b.q1.clone().unwrap_or_else(|| random_table(mdp, seed, 1, b.scale));
    let q2 = b.q2.clone().unwrap_or_else(|| random_table(mdp, seed, 2, b.scale));
    let report = contraction_diagnostic(mdp, set, &q1, &q2, b.k_steps, b.extremal)?;
    let rows = report
        .spans
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let ratio = if k == 0 {
                String::new()
            } else {
                let prev = report.spans[k - 1];
                if prev > report.noise_floor {
                    fmt(s / prev)
                } else if prev == 0.0 {
                    fmt(0.0)
                } else {
                    String::new()
                }
            };
            vec![k.to_string(), fmt(*s), ratio]
        })
        .collect();
    Ok((rows, report))
}

/// One cell of a sweep: `(radius, iterations, seed)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Cell {
    radius: f64,
    iterations: u64,
    seed: u64,
}

/// Runs the algorithm over the iterations × radii grid for every seed and
/// aggregates the final error as median and interquartile range per cell.
pub fn run_sweep(mut cfg: ExperimentConfig) -> CliResult<GeneratedArtifacts> {
    let mdp = cfg.resolve_mdp()?;
    let kind = cfg.algorithm().kind();
    if !matches!(kind, AlgorithmKind::Qlearn | AlgorithmKind::EvalTd | AlgorithmKind::Nac) {
        return Err(CliError::Config(format!("sweep supports qlearn, eval-td and nac, not {}", kind.name())));
    }
    let grid = cfg.sweep.clone().unwrap_or_default();
    let base_iters = match cfg.algorithm() {
        Algorithm::Qlearn(b) => b.config.iterations,
        Algorithm::EvalTd(b) => b.config.iterations,
        Algorithm::Nac(b) => b.config.iterations,
        _ => unreachable!(),
    };
    let iterations = if grid.iterations.is_empty() { vec![base_iters] } else { grid.iterations.clone() };
    let radii = if grid.radii.is_empty() { vec![cfg.ambiguity.radius] } else { grid.radii.clone() };
    if iterations.contains(&0) {
        return Err(CliError::Config("sweep iterations must be ≥ 1".into()));
    }

    let mut sets = Vec::with_capacity(radii.len());
    for &r in &radii {
        let spec = rarl_core::ambiguity::AmbiguitySpec { radius: r, ..cfg.ambiguity.clone() };
        sets.push(spec.resolve(&mdp)?);
    }
    let cells: Vec<(usize, Cell)> = radii
        .iter()
        .enumerate()
        .flat_map(|(ri, &radius)| {
            let seeds = cfg.seeds.clone();
            iterations
                .iter()
                .flat_map(move |&t| seeds.clone().into_iter().map(move |seed| (ri, Cell { radius, iterations: t, seed })))
        })
        .collect();

    let algorithm = cfg.algorithm().clone();
    let results: Vec<(u64, f64)> = cells
        .par_iter()
        .map(|(ri, cell)| sweep_cell(&mdp, &sets[*ri], &algorithm, cell))
        .collect::<CliResult<_>>()?;

    let mut out = ArtifactWriter::new(&cfg.output_dir)?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .zip(&results)
        .map(|((_, c), (transitions, err))| {
            vec![fmt(c.radius), c.iterations.to_string(), c.seed.to_string(), transitions.to_string(), fmt(*err)]
        })
        .collect();
    out.csv("sweep.csv", &["radius", "iterations", "seed", "transitions", "error"], &rows)?;

    let mut summary = Vec::new();
    for &radius in &radii {
        for &t in &iterations {
            let group: Vec<(u64, f64)> = cells
                .iter()
                .zip(&results)
                .filter(|((_, c), _)| c.radius == radius && c.iterations == t)
                .map(|(_, r)| *r)
                .collect();
            let errs: Vec<f64> = group.iter().map(|r| r.1).collect();
            let transitions: Vec<f64> = group.iter().map(|r| r.0 as f64).collect();
            summary.push(vec![
                fmt(radius),
                t.to_string(),
                fmt(quantile(&transitions, 0.5)),
                errs.len().to_string(),
                fmt(quantile(&errs, 0.5)),
                fmt(quantile(&errs, 0.25)),
                fmt(quantile(&errs, 0.75)),
            ]);
        }
    }
    out.csv(
        "sweep_summary.csv",
        &["radius", "iterations", "transitions", "n", "median", "q25", "q75"],
        &summary,
    )?;
    out.finish("sweep", &cfg)
}

/// Final error of one run: `span(Q_T − Q*)` for qlearn, `|g_K − g^π|` for
/// eval-td and `g* − g^{π_T}` for nac.
fn sweep_cell(mdp: &TabularMdp, set: &AmbiguitySet, algorithm: &Algorithm, cell: &Cell) -> CliResult<(u64, f64)> {
    let tol = PlanningTolerance::default();
    match algorithm {
        Algorithm::Qlearn(b) => {
            let star = robust_optimal_control_exact(mdp, set, &tol)?;
            let cfg = rarl_core::qlearning::QLearnConfig {
                iterations: cell.iterations,
                seed: cell.seed,
                snapshot_period: Some(cell.iterations),
                ..b.config.clone()
            };
            let (q, trace) = run_qlearning(mdp, set, &cfg, Some(&star.q))?;
            Ok((trace.snapshots.last().map_or(0, |s| s.transitions), q.span_diff(&star.q)))
        }
        Algorithm::EvalTd(b) => {
            let policy = b
                .policy
                .clone()
                .unwrap_or_else(|| Policy::uniform(mdp.num_states(), mdp.num_actions()));
            let exact = robust_policy_eval_exact(mdp, &policy, set, &tol)?;
            let cfg = TdConfig {
                iterations: cell.iterations,
                seed: cell.seed,
                snapshot_period: Some(cell.iterations),
                ..b.config.clone()
            };
            let out = robust_td_run(mdp, &policy, set, &cfg, None)?;
            Ok((out.transitions, (out.eval.gain - exact.gain).abs()))
        }
        Algorithm::Nac(b) => {
            let cfg = NacConfig {
                iterations: cell.iterations,
                seed: cell.seed,
                evaluate: true,
                ..b.config.clone()
            };
            let out = run_nac(mdp, set, &cfg)?;
            let last = out.trace.last().expect("trace holds π_0");
            Ok((last.transitions, last.gap_to_oracle.unwrap_or(f64::NAN)))
        }
        _ => unreachable!("checked by run_sweep"),
    }
}
