use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rarl_cli::config::{build_config, AlgorithmKind, Overrides};
use rarl_cli::error::{CliError, CliResult};
use rarl_cli::plot::{emit_plot, PlotSpec};
use rarl_cli::{run_experiment, run_sweep};
use rarl_core::generate::{generate_mdp, GeneratorSpec};
use rarl_core::mdp::{validate_mdp, MdpFile};

#[derive(Parser)]
#[command(name = "rarl", version, about = "Robust average-reward RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an MDP file and list every violation.
    Validate { mdp: PathBuf },
    /// Write a random ergodic MDP as JSON.
    Generate {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
        /// Probability floor ρ_min on every next state, in (0, 1/S].
        #[arg(long)]
        min_row_mass: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Attach the |i − j| metric.
        #[arg(long)]
        metric: bool,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Exact robust optimal control.
    Oracle(RunArgs),
    /// Robust TD critic and Q estimate.
    EvalTd(RunArgs),
    /// Robust Q-learning.
    Qlearn(RunArgs),
    /// Robust natural actor-critic.
    Nac(RunArgs),
    /// Contraction diagnostics of the optimal operator.
    Diag(RunArgs),
    /// Grid over iterations and radii for qlearn, eval-td or nac.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Algorithm to sweep when the config has no algorithm block.
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long, value_delimiter = ',')]
        grid_iterations: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        grid_radii: Option<Vec<f64>>,
    },
    /// Render a CSV as an SVG line chart with median and IQR band.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        series: Option<String>,
        /// Log-log axes.
        #[arg(long)]
        log: bool,
        #[arg(long)]
        title: Option<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON config, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    order: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// T for qlearn and nac, K for eval-td, k for diag.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n_max: Option<u32>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            mdp: self.mdp.clone(),
            family: self.family.clone(),
            radius: self.radius,
            order: self.order,
            seeds: self.seeds.clone(),
            output_dir: self.out.clone(),
            iterations: self.iterations,
            eta: self.eta,
            n_max: self.n_max,
            ..Default::default()
        }
    }
}

fn run(args: &RunArgs, kind: AlgorithmKind) -> CliResult<()> {
    let cfg = build_config(args.config.as_deref(), kind, &args.overrides())?;
    let artifacts = run_experiment(cfg)?;
    println!("wrote {} files to {}", artifacts.files.len(), artifacts.output_dir.display());
    Ok(())
}

fn parse_kind(name: &str) -> CliResult<AlgorithmKind> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| CliError::Config(format!("unknown algorithm '{name}'")))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate { mdp } => {
            let text = std::fs::read_to_string(&mdp).map_err(|e| CliError::io(&mdp, e))?;
            let file: MdpFile = serde_json::from_str(&text)?;
            let report = validate_mdp(&file);
            if report.is_pass() {
                println!("ok");
                Ok(())
            } else {
                for v in &report.violations {
                    println!("{v}");
                }
                Err(CliError::Config(format!("{} violation(s)", report.violations.len())))
            }
        }
        Command::Generate {
            states,
            actions,
            concentration,
            min_row_mass,
            seed,
            metric,
            out,
        } => {
            let mdp = generate_mdp(&GeneratorSpec {
                num_states: states,
                num_actions: actions,
                concentration,
                min_row_mass,
                seed,
                attach_metric: metric,
            })?;
            let mut text = mdp.to_json_string();
            text.push('\n');
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Oracle(a) => run(&a, AlgorithmKind::Oracle),
        Command::EvalTd(a) => run(&a, AlgorithmKind::EvalTd),
        Command::Qlearn(a) => run(&a, AlgorithmKind::Qlearn),
        Command::Nac(a) => run(&a, AlgorithmKind::Nac),
        Command::Diag(a) => run(&a, AlgorithmKind::Diag),
        Command::Sweep {
            run,
            algorithm,
            grid_iterations,
            grid_radii,
        } => {
            let kind = match (&algorithm, &run.config) {
                (Some(name), _) => parse_kind(name)?,
                (None, Some(path)) => rarl_cli::load_config(path)?
                    .algorithm
                    .map(|a| a.kind())
                    .ok_or_else(|| CliError::Config("sweep needs --algorithm or an algorithm block".into()))?,
                (None, None) => return Err(CliError::Config("sweep needs --algorithm or a config".into())),
            };
            let mut o = run.overrides();
            o.grid_iterations = grid_iterations;
            o.grid_radii = grid_radii;
            let cfg = build_config(run.config.as_deref(), kind, &o)?;
            let artifacts = run_sweep(cfg)?;
            println!("wrote {} files to {}", artifacts.files.len(), artifacts.output_dir.display());
            Ok(())
        }
        Command::Plot {
            csv,
            x,
            y,
            series,
            log,
            title,
            out,
        } => {
            let plot = emit_plot(&csv, &PlotSpec { x, y, series, log, title })?;
            std::fs::write(&out, plot.svg).map_err(|e| CliError::io(&out, e))?;
            for s in &plot.series {
                match s.slope {
                    Some(m) => println!("{}: slope {m:.4}", s.name),
                    None => println!("{}", s.name),
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
