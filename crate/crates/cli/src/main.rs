//! `mtlk` command-line harness.

mod commands;
mod config;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtlk::bounds::{BoundConstants, LogBase};
use mtlk::capacity::CoverMetric;
use mtlk::envsim::BoundMode;
use mtlk::erm::SearchBudget;
use mtlk::learner::MarginParams;
use mtlk::Error;

use config::{
    BoundCommandMode, BoundParams, CoverParams, ExperimentConfig, ExperimentKind, ExperimentParams, LearnParams,
    PdSearch, ShatterParams,
};

#[derive(Parser)]
#[command(name = "mtlk", version, about = "Multi-task and lifelong kernel learning toolkit")]
struct Cli {
    /// Worker threads (defaults to MTLK_WORKERS, then the number of CPUs).
    #[arg(long, global = true, env = "MTLK_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for artifacts and the manifest; stdout only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Grid {
    #[arg(long, default_value_t = 4)]
    grid_resolution: usize,
    #[arg(long, default_value_t = 2)]
    refinement_rounds: usize,
    #[arg(long, default_value_t = 100_000)]
    max_candidates: usize,
    /// Wall-clock cap on refinement in seconds (makes results machine dependent).
    #[arg(long)]
    wall_clock_secs: Option<f64>,
}

impl Grid {
    fn budget(&self) -> SearchBudget {
        SearchBudget {
            grid_resolution: self.grid_resolution,
            refinement_rounds: self.refinement_rounds,
            max_candidates: self.max_candidates,
            wall_clock_secs: self.wall_clock_secs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Joint kernel and predictor learning on a multi-task CSV sample.
    Learn {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a generalization bound.
    Bound {
        #[arg(long, value_enum)]
        mode: BoundCommandMode,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        dphi: f64,
        #[arg(long = "B")]
        b: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long = "C", default_value_t = 1.0)]
        c_cover: f64,
        #[arg(long = "c", default_value_t = 1.0)]
        c_sample: f64,
        /// Deviation for `--mode lifelong`.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Use base-2 logs in the exponent of the predictor cover.
        #[arg(long)]
        binary_log: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Search for a large pseudo-shattered set of a kernel family.
    Shatter {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 12)]
        pool_size: usize,
        #[arg(long, default_value_t = 8)]
        max_n: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 200_000)]
        max_nodes: u64,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy covers of a family's grid at several radii.
    Cover {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        dim: usize,
        /// dx_infinity_kernel or d1_empirical.
        #[arg(long, value_parser = parse_metric, default_value = "dx_infinity_kernel")]
        metric: CoverMetric,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        sample_size: usize,
        #[arg(long, default_value_t = 1)]
        tasks: usize,
        #[arg(long, default_value_t = 16)]
        probe_budget: usize,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        common: Common,
    },
    /// Simulation experiments on a task environment.
    Experiment {
        #[arg(long, value_enum)]
        kind: ExperimentKind,
        /// Task environment TOML (built-in planted-pair environment if absent).
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        family: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Lifelong instead of multi-task bound in sandwich trials.
        #[arg(long)]
        lifelong: bool,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        common: Common,
    },
    /// Run a TOML experiment configuration.
    Run {
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a recorded manifest and compare artifact hashes.
    Replay {
        manifest: PathBuf,
        /// Defaults to `replay/` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_metric(s: &str) -> Result<CoverMetric, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown metric {s:?} (dx_infinity_kernel, d1_empirical)")
    })
}

fn base_config(common: &Common) -> ExperimentConfig {
    ExperimentConfig {
        seed: common.seed,
        output_dir: common.out.clone(),
        learn: None,
        bound: None,
        shatter: None,
        cover: None,
        experiment: None,
    }
}

fn config_from(command: Command) -> Result<ExperimentConfig, Error> {
    Ok(match command {
        Command::Learn {
            family,
            data,
            gamma,
            max_iters,
            grid,
            common,
        } => ExperimentConfig {
            learn: Some(LearnParams {
                family,
                data,
                margin: MarginParams {
                    max_iters,
                    ..MarginParams::with_gamma(gamma)
                },
                budget: grid.budget(),
            }),
            ..base_config(&common)
        },
        Command::Bound {
            mode,
            n,
            m,
            dphi,
            b,
            gamma,
            delta,
            c_cover,
            c_sample,
            epsilon,
            binary_log,
            common,
        } => ExperimentConfig {
            bound: Some(BoundParams {
                mode,
                n,
                m,
                d_phi: dphi,
                b,
                gamma,
                delta,
                epsilon,
                constants: BoundConstants {
                    cover: c_cover,
                    sample: c_sample,
                    exponent_log: if binary_log { LogBase::Binary } else { LogBase::Natural },
                },
            }),
            ..base_config(&common)
        },
        Command::Shatter {
            family,
            dim,
            pool_size,
            max_n,
            trials,
            max_nodes,
            grid,
            common,
        } => ExperimentConfig {
            shatter: Some(ShatterParams {
                family,
                dim,
                pool_size,
                grid: grid.budget(),
                budget: PdSearch {
                    max_n,
                    trials,
                    max_nodes,
                },
            }),
            ..base_config(&common)
        },
        Command::Cover {
            family,
            dim,
            metric,
            epsilons,
            sample_size,
            tasks,
            probe_budget,
            grid,
            common,
        } => ExperimentConfig {
            cover: Some(CoverParams {
                family,
                dim,
                metric,
                epsilons,
                sample_size,
                tasks,
                probe_budget,
                grid: grid.budget(),
            }),
            ..base_config(&common)
        },
        Command::Experiment {
            kind,
            env,
            family,
            m,
            n_grid,
            trials,
            gamma,
            mc_samples,
            delta,
            lifelong,
            grid,
            common,
        } => ExperimentConfig {
            experiment: Some(ExperimentParams {
                kind,
                env,
                family,
                m,
                n_grid,
                trials,
                margin: MarginParams::with_gamma(gamma),
                budget: grid.budget(),
                mc_samples,
                delta,
                mode: if lifelong { BoundMode::Lifelong } else { BoundMode::Multitask },
                constants: BoundConstants::default(),
            }),
            ..base_config(&common)
        },
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            cfg
        }
        Command::Replay { .. } => unreachable!("handled separately"),
    })
}

/// Process exit code for an error category.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Input(_) | Error::Parse(_) => 2,
        Error::Numeric(_) | Error::Infeasible(_) => 3,
        Error::Budget(_) => 4,
        Error::Io(_) => 1,
    }
}

fn fail(category: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": category, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            return fail("input", "--workers must be >= 1", 2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    if let Command::Replay { manifest: path, out } = cli.command {
        let result = manifest::load(&path).and_then(|m| {
            let dir = out.unwrap_or_else(|| path.parent().unwrap_or(std::path::Path::new(".")).join("replay"));
            manifest::replay(&m, &dir)
        });
        return match result {
            Ok(r) if r.mismatched.is_empty() => {
                println!("replay identical: {}", r.output_dir.display());
                ExitCode::SUCCESS
            }
            Ok(r) => fail(
                "replay_mismatch",
                &format!("artifacts differ: {}", r.mismatched.join(", ")),
                5,
            ),
            Err(e) => fail(e.category(), &e.to_string(), exit_code(&e)),
        };
    }

    let result = config_from(cli.command).and_then(|cfg| manifest::run_and_record(&cfg));
    match result {
        Ok((artifacts, _)) => {
            print!("{}", artifacts.stdout);
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.category(), &e.to_string(), exit_code(&e)),
    }
}
