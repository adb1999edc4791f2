//! Experiment configuration: one strict TOML file per run, also built from
//! command-line flags.

use std::path::{Path, PathBuf};

use mtlk::bounds::BoundConstants;
use mtlk::capacity::CoverMetric;
use mtlk::envsim::BoundMode;
use mtlk::erm::SearchBudget;
use mtlk::learner::MarginParams;
use mtlk::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Artifacts go here; stdout only when absent.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learn: Option<LearnParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shatter: Option<ShatterParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover: Option<CoverParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnParams {
    pub family: PathBuf,
    pub data: PathBuf,
    #[serde(default)]
    pub margin: MarginParams,
    #[serde(default)]
    pub budget: SearchBudget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BoundCommandMode {
    Multitask,
    Lifelong,
    Invert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub mode: BoundCommandMode,
    pub n: u64,
    pub m: u64,
    pub d_phi: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Deviation at which `lifelong` evaluates the failure probability.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub constants: BoundConstants,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShatterParams {
    pub family: PathBuf,
    pub dim: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    /// Grid that enumerates the family members searched.
    #[serde(default)]
    pub grid: SearchBudget,
    #[serde(default)]
    pub budget: PdSearch,
}

/// Pseudodimension search limits; the search seed is derived from the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdSearch {
    pub max_n: usize,
    pub trials: usize,
    pub max_nodes: u64,
}

impl Default for PdSearch {
    fn default() -> Self {
        let d = mtlk::capacity::PdBudget::default();
        PdSearch {
            max_n: d.max_n,
            trials: d.trials,
            max_nodes: d.max_nodes,
        }
    }
}

fn default_pool_size() -> usize {
    12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverParams {
    pub family: PathBuf,
    pub dim: usize,
    pub metric: CoverMetric,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default = "default_one")]
    pub tasks: usize,
    #[serde(default = "default_probes")]
    pub probe_budget: usize,
    #[serde(default)]
    pub grid: SearchBudget,
}

fn default_sample_size() -> usize {
    8
}

fn default_one() -> usize {
    1
}

fn default_probes() -> usize {
    16
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Overhead,
    Sandwich,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    pub kind: ExperimentKind,
    /// Task environment file; the built-in planted-pair environment when absent.
    #[serde(default)]
    pub env: Option<PathBuf>,
    /// Kernel family file; sparse combinations (k = 1) of the environment's
    /// dictionary when absent.
    #[serde(default)]
    pub family: Option<PathBuf>,
    pub m: usize,
    /// Task counts; overhead uses all of them, sandwich trials use the first.
    pub n_grid: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub margin: MarginParams,
    #[serde(default)]
    pub budget: SearchBudget,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub mode: BoundMode,
    #[serde(default)]
    pub constants: BoundConstants,
}

fn default_mc() -> usize {
    100_000
}

fn default_delta() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        cfg.command_name()?;
        Ok(cfg)
    }

    /// Loads `path` and resolves relative file references against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_files()?;
        Ok(cfg)
    }

    /// Name of the single selected subcommand.
    pub fn command_name(&self) -> Result<&'static str, Error> {
        let set: Vec<&'static str> = [
            ("learn", self.learn.is_some()),
            ("bound", self.bound.is_some()),
            ("shatter", self.shatter.is_some()),
            ("cover", self.cover.is_some()),
            ("experiment", self.experiment.is_some()),
        ]
        .into_iter()
        .filter_map(|(name, on)| on.then_some(name))
        .collect();
        match set.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::Parse(
                "config selects no subcommand (need one of [learn], [bound], [shatter], [cover], [experiment])".into(),
            )),
            many => Err(Error::Parse(format!("config selects several subcommands: {}", many.join(", ")))),
        }
    }

    fn input_paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut out = Vec::new();
        if let Some(p) = &mut self.learn {
            out.push(&mut p.family);
            out.push(&mut p.data);
        }
        if let Some(p) = &mut self.shatter {
            out.push(&mut p.family);
        }
        if let Some(p) = &mut self.cover {
            out.push(&mut p.family);
        }
        if let Some(p) = &mut self.experiment {
            out.extend(p.env.as_mut());
            out.extend(p.family.as_mut());
        }
        out
    }

    pub fn input_paths(&self) -> Vec<PathBuf> {
        self.clone().input_paths_mut().into_iter().map(|p| p.clone()).collect()
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in self.input_paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut self.output_dir {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
    }

    pub fn check_files(&self) -> Result<(), Error> {
        for p in self.input_paths() {
            if !p.is_file() {
                return Err(Error::Input(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
