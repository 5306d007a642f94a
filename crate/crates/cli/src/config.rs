//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rarl_core::ambiguity::{AmbiguitySet, AmbiguitySpec, Family};
use rarl_core::critic::TdConfig;
use rarl_core::generate::{generate_mdp, GeneratorSpec};
use rarl_core::mdp::{MdpFile, Policy, QTable, TabularMdp};
use rarl_core::nac::NacConfig;
use rarl_core::planning::{ExtremalConfig, PlanningTolerance};
use rarl_core::qlearning::QLearnConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSource {
    File(PathBuf),
    Generate(GeneratorSpec),
    Inline(MdpFile),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    Qlearn,
    EvalTd,
    Nac,
    Oracle,
    Diag,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Qlearn => "qlearn",
            AlgorithmKind::EvalTd => "eval-td",
            AlgorithmKind::Nac => "nac",
            AlgorithmKind::Oracle => "oracle",
            AlgorithmKind::Diag => "diag",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            AlgorithmKind::EvalTd => "eval_td",
            other => other.name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QLearnBlock {
    #[serde(flatten)]
    pub config: QLearnConfig,
    /// Track `span(Q_t − Q*)` against the exact oracle.
    #[serde(default = "yes")]
    pub reference: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalTdBlock {
    #[serde(flatten)]
    pub config: TdConfig,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    /// Policy to evaluate; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Policy>,
    #[serde(default = "yes")]
    pub reference: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NacBlock {
    #[serde(flatten)]
    pub config: NacConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleBlock {
    #[serde(flatten)]
    pub tolerance: PlanningTolerance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagBlock {
    #[serde(default = "default_k_steps")]
    pub k_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extremal: Option<ExtremalConfig>,
    /// Starting tables; drawn uniformly from `[0, scale)` per seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q1: Option<QTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q2: Option<QTable>,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn yes() -> bool {
    true
}

fn default_n_max() -> u32 {
    10
}

fn default_k_steps() -> usize {
    30
}

fn default_scale() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Algorithm {
    Qlearn(QLearnBlock),
    EvalTd(EvalTdBlock),
    Nac(NacBlock),
    Oracle(OracleBlock),
    Diag(DiagBlock),
}

impl Algorithm {
    pub fn kind(&self) -> AlgorithmKind {
        match self {
            Algorithm::Qlearn(_) => AlgorithmKind::Qlearn,
            Algorithm::EvalTd(_) => AlgorithmKind::EvalTd,
            Algorithm::Nac(_) => AlgorithmKind::Nac,
            Algorithm::Oracle(_) => AlgorithmKind::Oracle,
            Algorithm::Diag(_) => AlgorithmKind::Diag,
        }
    }

    pub fn default_for(kind: AlgorithmKind) -> Self {
        match kind {
            AlgorithmKind::Qlearn => Algorithm::Qlearn(QLearnBlock {
                config: QLearnConfig::default(),
                reference: true,
            }),
            AlgorithmKind::EvalTd => Algorithm::EvalTd(EvalTdBlock {
                config: TdConfig::default(),
                n_max: default_n_max(),
                policy: None,
                reference: true,
            }),
            AlgorithmKind::Nac => Algorithm::Nac(NacBlock {
                config: NacConfig::default(),
            }),
            AlgorithmKind::Oracle => Algorithm::Oracle(OracleBlock {
                tolerance: PlanningTolerance::default(),
            }),
            AlgorithmKind::Diag => Algorithm::Diag(DiagBlock {
                k_steps: default_k_steps(),
                extremal: None,
                q1: None,
                q2: None,
                scale: default_scale(),
            }),
        }
    }

    pub fn set_iterations(&mut self, iterations: u64) {
        match self {
            Algorithm::Qlearn(b) => b.config.iterations = iterations,
            Algorithm::EvalTd(b) => b.config.iterations = iterations,
            Algorithm::Nac(b) => b.config.iterations = iterations,
            Algorithm::Oracle(b) => b.tolerance.max_iters = iterations as usize,
            Algorithm::Diag(b) => b.k_steps = iterations as usize,
        }
    }
}

/// Budget and radius grid for `sweep`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterations: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub ambiguity: AmbiguitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mdp: Option<PathBuf>,
    pub family: Option<String>,
    pub radius: Option<f64>,
    pub order: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
    pub iterations: Option<u64>,
    pub eta: Option<f64>,
    pub n_max: Option<u32>,
    pub grid_iterations: Option<Vec<u64>>,
    pub grid_radii: Option<Vec<f64>>,
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Reads a config file, or the `config` block of a run manifest.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = read(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let body = match value.get("config") {
        Some(inner) if value.get("config_hash").is_some() => inner.clone(),
        _ => value,
    };
    let mut cfg: ExperimentConfig =
        serde_json::from_value(body).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let MdpSource::File(p) = &cfg.mdp {
        if p.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.mdp = MdpSource::File(base.join(p));
        }
    }
    Ok(cfg)
}

/// Merges an optional config file with flag overrides and fixes the
/// algorithm block to `kind`.
pub fn build_config(file: Option<&Path>, kind: AlgorithmKind, o: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = match file {
        Some(path) => Some(load_config(path)?),
        None => None,
    };

    let mdp = match (&o.mdp, cfg.as_ref().map(|c| c.mdp.clone())) {
        (Some(p), _) => MdpSource::File(p.clone()),
        (None, Some(src)) => src,
        (None, None) => return Err(CliError::Config("no MDP given: pass --mdp or a config with an `mdp` block".into())),
    };

    let mut ambiguity = match (&o.family, cfg.as_ref().map(|c| c.ambiguity.clone())) {
        (Some(f), base) => {
            let family: Family = f.parse()?;
            let radius = o
                .radius
                .or(base.as_ref().map(|b| b.radius))
                .or(o.grid_radii.as_ref().and_then(|r| r.first().copied()))
                .ok_or_else(|| CliError::Config("--family needs --radius".into()))?;
            AmbiguitySpec {
                family,
                radius,
                order: base.and_then(|b| b.order),
            }
        }
        (None, Some(base)) => base,
        (None, None) => return Err(CliError::Config("no ambiguity set given: pass --family and --radius".into())),
    };
    if let Some(r) = o.radius {
        ambiguity.radius = r;
    }
    if let Some(l) = o.order {
        ambiguity.order = Some(l);
    }

    let mut algorithm = match cfg.as_mut().and_then(|c| c.algorithm.take()) {
        Some(a) if a.kind() == kind => a,
        Some(a) => {
            return Err(CliError::Config(format!(
                "config algorithm is '{}' but the '{}' command was run",
                a.kind().name(),
                kind.name()
            )))
        }
        None => Algorithm::default_for(kind),
    };
    if let Some(t) = o.iterations {
        algorithm.set_iterations(t);
    }
    match &mut algorithm {
        Algorithm::Nac(b) => {
            if let Some(eta) = o.eta {
                b.config.eta = eta;
            }
            if let Some(n) = o.n_max {
                b.config.n_max = n;
            }
        }
        Algorithm::EvalTd(b) => {
            if let Some(n) = o.n_max {
                b.n_max = n;
            }
        }
        Algorithm::Qlearn(b) => {
            if let Some(n) = o.n_max {
                b.config.mlmc.n_max = n;
            }
        }
        _ => {}
    }

    let seeds = o
        .seeds
        .clone()
        .or(cfg.as_ref().map(|c| c.seeds.clone()))
        .unwrap_or_else(default_seeds);
    if seeds.is_empty() {
        return Err(CliError::Config("seeds list is empty".into()));
    }
    let output_dir = o
        .output_dir
        .clone()
        .or(cfg.as_ref().map(|c| c.output_dir.clone()))
        .unwrap_or_else(default_output_dir);
    let mut sweep = cfg.and_then(|c| c.sweep);
    if o.grid_iterations.is_some() || o.grid_radii.is_some() {
        let grid = sweep.get_or_insert_with(SweepGrid::default);
        if let Some(t) = &o.grid_iterations {
            grid.iterations = t.clone();
        }
        if let Some(r) = &o.grid_radii {
            grid.radii = r.clone();
        }
    }
    Ok(ExperimentConfig {
        mdp,
        ambiguity,
        algorithm: Some(algorithm),
        seeds,
        output_dir,
        sweep,
    })
}

impl ExperimentConfig {
    /// Loads file MDPs and inlines them so the config is self-contained.
    pub fn resolve_mdp(&mut self) -> CliResult<TabularMdp> {
        let wants_metric = self.ambiguity.family == Family::Wasserstein;
        let mdp = match &mut self.mdp {
            MdpSource::File(path) => {
                let text = read(path)?;
                let mdp = TabularMdp::from_json_str(&text)?;
                self.mdp = MdpSource::Inline(MdpFile::from(mdp.clone()));
                mdp
            }
            MdpSource::Generate(spec) => {
                spec.attach_metric |= wants_metric;
                generate_mdp(spec)?
            }
            MdpSource::Inline(file) => TabularMdp::try_from(file.clone())?,
        };
        Ok(mdp)
    }

    pub fn ambiguity_set(&self, mdp: &TabularMdp) -> CliResult<AmbiguitySet> {
        Ok(self.ambiguity.resolve(mdp)?)
    }

    pub fn algorithm(&self) -> &Algorithm {
        self.algorithm.as_ref().expect("build_config always sets the algorithm")
    }
}
