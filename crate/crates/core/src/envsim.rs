//! Synthetic task environments and the Monte Carlo harness that checks the
//! generalization bounds against simulated risks.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng as _;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{invert_epsilon, multitask_epsilon, BoundConstants, BoundInputs};
use crate::data::{derive_seed, rng_stream, DataSource, MultiTaskSample, Rng};
use crate::erm::{avg_true_errors, candidates, erm_fit, erm_over, fit_fixed_kernel, SearchBudget};
use crate::error::{Error, Result};
use crate::family::KernelFamily;
use crate::kernel::{gram, Kernel, Point};
use crate::learner::{quad_form, MarginParams};

/// Rejection sampling gives up after this many draws per example.
pub const MAX_REJECTIONS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputLaw {
    /// Uniform on `[low, high]^dim`.
    Uniform { dim: usize, low: f64, high: f64 },
    /// Isotropic Gaussian mixture.
    GaussianMixture {
        means: Vec<Vec<f64>>,
        std_dev: f64,
        weights: Vec<f64>,
    },
}

impl InputLaw {
    pub fn uniform_cube(dim: usize) -> Self {
        InputLaw::Uniform {
            dim,
            low: -1.0,
            high: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputLaw::Uniform { dim, .. } => *dim,
            InputLaw::GaussianMixture { means, .. } => means.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputLaw::Uniform { dim, low, high } => {
                if *dim == 0 || !(low < high) || !low.is_finite() || !high.is_finite() {
                    return Err(Error::input("uniform law needs dim >= 1 and low < high"));
                }
            }
            InputLaw::GaussianMixture {
                means,
                std_dev,
                weights,
            } => {
                let d = self.dim();
                if d == 0 || means.iter().any(|m| m.len() != d) {
                    return Err(Error::input("mixture means must share a positive dimension"));
                }
                if !(*std_dev > 0.0) || weights.len() != means.len() {
                    return Err(Error::input("mixture needs std_dev > 0 and one weight per mean"));
                }
                WeightedIndex::new(weights).map_err(|e| Error::input(format!("mixture weights: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut Rng) -> Point {
        match self {
            InputLaw::Uniform { dim, low, high } => (0..*dim).map(|_| rng.random_range(*low..=*high)).collect(),
            InputLaw::GaussianMixture {
                means,
                std_dev,
                weights,
            } => {
                let c = WeightedIndex::new(weights).expect("validated weights").sample(rng);
                let noise = Normal::new(0.0, *std_dev).expect("validated std_dev");
                means[c].iter().map(|m| m + noise.sample(rng)).collect()
            }
        }
    }
}

/// `f(x) = sum_j c_j K(z_j, x)` with `c^T K_z c <= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedFunction {
    pub kernel: Kernel,
    pub centers: Vec<Point>,
    pub coefs: Vec<f64>,
}

impl PlantedFunction {
    /// Rescales `coefs` to unit RKHS norm.
    pub fn normalized(kernel: Kernel, centers: Vec<Point>, coefs: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != coefs.len() {
            return Err(Error::input("planted function needs one coefficient per center"));
        }
        let g = gram(&kernel, &centers)?;
        let norm = quad_form(&g, &coefs).sqrt();
        if !(norm > 0.0) {
            return Err(Error::input("planted function has zero norm"));
        }
        let coefs = coefs.iter().map(|c| c / norm).collect();
        Ok(PlantedFunction {
            kernel,
            centers,
            coefs,
        })
    }

    /// Random centers from `law` and standard normal coefficients.
    pub fn random(kernel: Kernel, law: &InputLaw, n_centers: usize, rng: &mut Rng) -> Result<Self> {
        let centers = (0..n_centers).map(|_| law.draw(rng)).collect();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let coefs = (0..n_centers).map(|_| normal.sample(rng)).collect();
        Self::normalized(kernel, centers, coefs)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.coefs)
            .map(|(z, c)| c * self.kernel.eval(z, x))
            .sum()
    }

    pub fn norm_sq(&self) -> Result<f64> {
        Ok(quad_form(&gram(&self.kernel, &self.centers)?, &self.coefs))
    }
}

/// One task's data law: `x` from `input_law` conditioned on
/// `|f(x)| >= margin_gap`, `y = sign f(x)` flipped with probability
/// `flip_rate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distribution {
    pub input_law: InputLaw,
    pub planted: PlantedFunction,
    pub margin_gap: f64,
    pub flip_rate: f64,
    /// Environment cluster the task was drawn from.
    #[serde(default)]
    pub cluster: usize,
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        self.input_law.validate()?;
        if !(0.0..0.5).contains(&self.flip_rate) {
            return Err(Error::input("flip rate must lie in [0, 0.5)"));
        }
        if !(self.margin_gap >= 0.0) {
            return Err(Error::input("margin gap must be non-negative"));
        }
        self.planted.kernel.check_dim(self.input_law.dim())?;
        if self.planted.norm_sq()? > 1.0 + 1e-8 {
            return Err(Error::input("planted function must have norm <= 1"));
        }
        Ok(())
    }

    /// Noise-free draw `(x, sign f(x))`.
    pub fn draw_clean(&self, rng: &mut Rng) -> (Point, f64) {
        let mut x = self.input_law.draw(rng);
        let mut f = self.planted.eval(&x);
        for _ in 0..MAX_REJECTIONS {
            if f.abs() >= self.margin_gap {
                break;
            }
            x = self.input_law.draw(rng);
            f = self.planted.eval(&x);
        }
        (x, if f >= 0.0 { 1.0 } else { -1.0 })
    }
}

impl DataSource for Distribution {
    fn draw(&self, rng: &mut Rng) -> (Point, f64) {
        let (x, y) = self.draw_clean(rng);
        let flip = rng.random::<f64>() < self.flip_rate;
        (x, if flip { -y } else { y })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "planted", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantedSpec {
    /// The same function for every task of the cluster.
    Fixed { centers: Vec<Point>, coefs: Vec<f64> },
    /// A fresh random function per task.
    Random { n_centers: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskCluster {
    pub weight: f64,
    pub planted: PlantedSpec,
    pub margin_gap: f64,
    pub flip_rate: f64,
}

/// A law over task distributions: pick a cluster by weight, then plant a
/// function under the shared dictionary kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEnvironment {
    pub dictionary: Vec<Kernel>,
    pub true_kernel_index: usize,
    pub input_law: InputLaw,
    pub clusters: Vec<TaskCluster>,
}

impl TaskEnvironment {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let env: TaskEnvironment = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn true_kernel(&self) -> &Kernel {
        &self.dictionary[self.true_kernel_index]
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_kernel_index >= self.dictionary.len() {
            return Err(Error::input("true kernel index outside the dictionary"));
        }
        for k in &self.dictionary {
            k.validate()?;
            k.check_dim(self.input_law.dim())?;
        }
        self.input_law.validate()?;
        if self.clusters.is_empty() {
            return Err(Error::input("environment needs at least one cluster"));
        }
        WeightedIndex::new(self.clusters.iter().map(|c| c.weight))
            .map_err(|e| Error::input(format!("cluster weights: {e}")))?;
        for c in &self.clusters {
            if !(0.0..0.5).contains(&c.flip_rate) || !(c.margin_gap >= 0.0) {
                return Err(Error::input("cluster needs flip rate in [0, 0.5) and margin gap >= 0"));
            }
            match &c.planted {
                PlantedSpec::Fixed { centers, coefs } => {
                    PlantedFunction::normalized(self.true_kernel().clone(), centers.clone(), coefs.clone())?;
                }
                PlantedSpec::Random { n_centers } if *n_centers == 0 => {
                    return Err(Error::input("random planted functions need n_centers >= 1"))
                }
                PlantedSpec::Random { .. } => {}
            }
        }
        Ok(())
    }

    fn draw_task(&self, rng: &mut Rng) -> Result<Distribution> {
        let index = WeightedIndex::new(self.clusters.iter().map(|c| c.weight))
            .map_err(|e| Error::input(e.to_string()))?;
        let cluster = index.sample(rng);
        let spec = &self.clusters[cluster];
        let kernel = self.true_kernel().clone();
        let planted = match &spec.planted {
            PlantedSpec::Fixed { centers, coefs } => PlantedFunction::normalized(kernel, centers.clone(), coefs.clone())?,
            PlantedSpec::Random { n_centers } => PlantedFunction::random(kernel, &self.input_law, *n_centers, rng)?,
        };
        Ok(Distribution {
            input_law: self.input_law.clone(),
            planted,
            margin_gap: spec.margin_gap,
            flip_rate: spec.flip_rate,
            cluster,
        })
    }
}

/// `n` task distributions drawn i.i.d. from the environment; task `t` uses
/// substream `t` of `seed`.
pub fn sample_lifelong(env: &TaskEnvironment, n: usize, seed: u64) -> Result<Vec<Distribution>> {
    env.validate()?;
    (0..n)
        .map(|t| env.draw_task(&mut rng_stream(seed, t as u64)))
        .collect()
}

/// `m` examples from each distribution; task `t` uses substream `t` of `seed`.
pub fn sample_multitask(distributions: &[Distribution], m: usize, seed: u64) -> Result<MultiTaskSample> {
    if m == 0 {
        return Err(Error::input("sample size m must be >= 1"));
    }
    let tasks = distributions
        .par_iter()
        .enumerate()
        .map(|(t, d)| d.sample(m, &mut rng_stream(seed, t as u64)))
        .collect();
    MultiTaskSample::new(tasks)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Risks of the learned tuple on the observed tasks.
    #[default]
    Multitask,
    /// Risks of the learned kernel on fresh tasks from the environment.
    Lifelong,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialSettings {
    pub mode: BoundMode,
    pub mc_samples: usize,
    pub margin: MarginParams,
    pub budget: SearchBudget,
    pub delta: f64,
    pub constants: BoundConstants,
    /// Fresh tasks drawn to estimate lifelong risks.
    pub fresh_tasks: usize,
    /// Also estimate the best `er^{2 gamma}` over the candidate grid.
    pub check_erm_guarantee: bool,
    /// Monte Carlo samples per task for the grid scan.
    pub grid_mc_samples: usize,
}

impl Default for TrialSettings {
    fn default() -> Self {
        TrialSettings {
            mode: BoundMode::Multitask,
            mc_samples: 100_000,
            margin: MarginParams::default(),
            budget: SearchBudget::default(),
            delta: 0.05,
            constants: BoundConstants::default(),
            fresh_tasks: 8,
            check_erm_guarantee: false,
            grid_mc_samples: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub mode: BoundMode,
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub candidate_index: usize,
    /// Empirical margin error of the learned tuple.
    pub er_hat: f64,
    /// Monte Carlo 0-1 risk and its standard error.
    pub er: f64,
    pub er_se: f64,
    /// Monte Carlo risk at margin `2 gamma` and its standard error.
    pub er_2gamma: f64,
    pub er_2gamma_se: f64,
    pub epsilon: f64,
    /// The bound's sample-size preconditions hold.
    pub size_ok: bool,
    /// A log argument of the bound was clamped (too few examples for the
    /// margin term).
    pub degraded: bool,
    /// `size_ok && !degraded`.
    pub valid: bool,
    pub sandwich_ok: bool,
    /// Smallest `er^{2 gamma}` over the candidate grid, when requested.
    pub best_er_2gamma: Option<f64>,
    pub best_er_2gamma_se: Option<f64>,
}

impl TrialReport {
    /// `er(h) <= er^{2 gamma}(h*) + 2 eps`, with `slack_se` standard errors
    /// of Monte Carlo slack.
    pub fn erm_guarantee_holds(&self, slack_se: f64) -> Option<bool> {
        let best = self.best_er_2gamma?;
        let se = (self.er_se.powi(2) + self.best_er_2gamma_se.unwrap_or(0.0).powi(2)).sqrt();
        Some(self.er <= best + 2.0 * self.epsilon + slack_se * se)
    }
}

fn sandwich(er_2gamma: f64, epsilon: f64, er_hat: f64, er: f64) -> bool {
    er_2gamma + epsilon >= er_hat && er_hat >= er - epsilon
}

/// Fits `family` jointly on a fresh sample from `distributions`, estimates the
/// risks by Monte Carlo and compares them with the bound's `epsilon`.
///
/// In lifelong mode the learned kernel is reused on `fresh_tasks` new tasks
/// from `env`, each fitted on its own `m` examples; the bound's `epsilon` is
/// the inverse of the lifelong failure probability at `delta`.
pub fn run_sandwich_trial(
    distributions: &[Distribution],
    env: Option<&TaskEnvironment>,
    family: &KernelFamily,
    m: usize,
    settings: &TrialSettings,
    seed: u64,
) -> Result<TrialReport> {
    let n = distributions.len();
    let gamma = settings.margin.gamma;
    let sample = sample_multitask(distributions, m, derive_seed(seed, 0))?;
    let solution = erm_fit(family, &sample, &settings.margin, &settings.budget)?;
    let inputs = BoundInputs {
        n: n as u64,
        m: m as u64,
        d_phi: family.pd_upper_bound(),
        b: family.bound(),
        gamma,
        delta: settings.delta,
        constants: settings.constants,
    };
    let (epsilon, size_ok, degraded) = match settings.mode {
        BoundMode::Multitask => {
            let b = multitask_epsilon(&inputs)?;
            (b.epsilon, b.valid, b.degraded)
        }
        BoundMode::Lifelong => match invert_epsilon(&inputs) {
            Ok(inv) => (inv.epsilon, inv.bound.valid && inv.within_tolerance, inv.bound.degraded),
            Err(Error::Infeasible(_)) => (f64::INFINITY, false, false),
            Err(e) => return Err(e),
        },
    };
    let (er_hat, est) = match settings.mode {
        BoundMode::Multitask => {
            let srcs: Vec<&dyn DataSource> = distributions.iter().map(|d| d as &dyn DataSource).collect();
            let est = avg_true_errors(&solution, &srcs, &[0.0, 2.0 * gamma], settings.mc_samples, derive_seed(seed, 1))?;
            (solution.avg_empirical_margin_error, est)
        }
        BoundMode::Lifelong => {
            let env = env.ok_or_else(|| Error::input("lifelong trials need a task environment"))?;
            let fresh = sample_lifelong(env, settings.fresh_tasks.max(1), derive_seed(seed, 2))?;
            let fresh_sample = sample_multitask(&fresh, m, derive_seed(seed, 3))?;
            let refit = fit_fixed_kernel(&solution.kernel, &fresh_sample, &settings.margin)?;
            let srcs: Vec<&dyn DataSource> = fresh.iter().map(|d| d as &dyn DataSource).collect();
            let est = avg_true_errors(&refit, &srcs, &[0.0, 2.0 * gamma], settings.mc_samples, derive_seed(seed, 1))?;
            (solution.avg_empirical_margin_error, est)
        }
    };
    let (er, er_2gamma) = (&est[0], &est[1]);
    let (best_er_2gamma, best_er_2gamma_se) = if settings.check_erm_guarantee {
        let grid = candidates(family, &settings.budget)?;
        let srcs: Vec<&dyn DataSource> = distributions.iter().map(|d| d as &dyn DataSource).collect();
        let mut best: Option<(f64, f64)> = None;
        for c in &grid {
            let sol = erm_over(std::slice::from_ref(c), &sample, &settings.margin)?;
            let e = avg_true_errors(&sol, &srcs, &[2.0 * gamma], settings.grid_mc_samples, derive_seed(seed, 4))?;
            if best.is_none_or(|b| e[0].mean < b.0) {
                best = Some((e[0].mean, e[0].std_error));
            }
        }
        (best.map(|b| b.0), best.map(|b| b.1))
    } else {
        (None, None)
    };
    Ok(TrialReport {
        mode: settings.mode,
        n,
        m,
        gamma,
        candidate_index: solution.candidate_index,
        er_hat,
        er: er.mean,
        er_se: er.std_error,
        er_2gamma: er_2gamma.mean,
        er_2gamma_se: er_2gamma.std_error,
        epsilon,
        size_ok,
        degraded,
        valid: size_ok && !degraded,
        sandwich_ok: sandwich(er_2gamma.mean, epsilon, er_hat, er.mean),
        best_er_2gamma,
        best_er_2gamma_se,
    })
}

/// One `(trial, n)` cell of an overhead experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub n: usize,
    pub trial: usize,
    pub chosen_index: usize,
    pub chose_true_kernel: bool,
    pub erm_train_error: f64,
    pub erm_error: f64,
    pub oracle_error: f64,
    /// `|er(h) - er_hat^gamma(h)|` for the ERM tuple.
    pub gap: f64,
    /// `er(h_erm) - er(h_oracle)`, per task on average.
    pub excess: f64,
}

/// Means over trials for one `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadPoint {
    pub n: usize,
    pub mean_gap: f64,
    pub mean_excess: f64,
    pub mean_oracle_error: f64,
    pub mean_erm_error: f64,
    pub true_kernel_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverheadSettings {
    pub mc_samples: usize,
    pub margin: MarginParams,
    pub budget: SearchBudget,
}

impl Default for OverheadSettings {
    fn default() -> Self {
        OverheadSettings {
            mc_samples: 20_000,
            margin: MarginParams::default(),
            budget: SearchBudget::default(),
        }
    }
}

/// Excess risk of joint kernel learning over a learner that is told the
/// environment's true kernel, as a function of the number of tasks. Both
/// learners see the same samples and are scored on the same Monte Carlo
/// draws, so the excess is exactly 0 whenever ERM picks the true kernel.
pub fn overhead_curve(
    env: &TaskEnvironment,
    family: &KernelFamily,
    m: usize,
    n_grid: &[usize],
    trials: usize,
    settings: &OverheadSettings,
    seed: u64,
) -> Result<(Vec<OverheadRow>, Vec<OverheadPoint>)> {
    env.validate()?;
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::input("n grid must be positive and increasing"));
    }
    let cells: Vec<(usize, usize)> = (0..trials)
        .flat_map(|t| n_grid.iter().map(move |&n| (t, n)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(trial, n)| {
            let cell_seed = derive_seed(derive_seed(seed, trial as u64), n as u64);
            let dists = sample_lifelong(env, n, derive_seed(cell_seed, 0))?;
            let sample = sample_multitask(&dists, m, derive_seed(cell_seed, 1))?;
            let erm = erm_fit(family, &sample, &settings.margin, &settings.budget)?;
            let oracle = fit_fixed_kernel(env.true_kernel(), &sample, &settings.margin)?;
            let srcs: Vec<&dyn DataSource> = dists.iter().map(|d| d as &dyn DataSource).collect();
            let mc_seed = derive_seed(cell_seed, 2);
            let e_erm = avg_true_errors(&erm, &srcs, &[0.0], settings.mc_samples, mc_seed)?;
            let e_orc = avg_true_errors(&oracle, &srcs, &[0.0], settings.mc_samples, mc_seed)?;
            let (erm_error, oracle_error) = (e_erm[0].mean, e_orc[0].mean);
            Ok(OverheadRow {
                n,
                trial,
                chosen_index: erm.candidate_index,
                chose_true_kernel: erm.kernel == *env.true_kernel()
                    || erm.predictors.iter().zip(&oracle.predictors).all(|(a, b)| a.alphas == b.alphas),
                erm_train_error: erm.avg_empirical_margin_error,
                erm_error,
                oracle_error,
                gap: (erm_error - erm.avg_empirical_margin_error).abs(),
                excess: erm_error - oracle_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points = n_grid
        .iter()
        .map(|&n| {
            let sel: Vec<&OverheadRow> = rows.iter().filter(|r| r.n == n).collect();
            let k = sel.len().max(1) as f64;
            OverheadPoint {
                n,
                mean_gap: sel.iter().map(|r| r.gap).sum::<f64>() / k,
                mean_excess: sel.iter().map(|r| r.excess).sum::<f64>() / k,
                mean_oracle_error: sel.iter().map(|r| r.oracle_error).sum::<f64>() / k,
                mean_erm_error: sel.iter().map(|r| r.erm_error).sum::<f64>() / k,
                true_kernel_rate: sel.iter().filter(|r| r.chose_true_kernel).count() as f64 / k,
            }
        })
        .collect();
    Ok((rows, points))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // average rank over ties
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Kernels `linear` on every pair of `dim` coordinates, in lexicographic
/// order, truncated to `count`.
pub fn coordinate_pair_dictionary(dim: usize, count: usize) -> Vec<Kernel> {
    (0..dim)
        .flat_map(|i| ((i + 1)..dim).map(move |j| vec![i, j]))
        .take(count)
        .map(|c| Kernel::linear_on(2.0, c))
        .collect()
}

/// The planted-good-kernel environment used for the overhead experiment:
/// `N = 16` linear kernels on coordinate pairs of `[-1, 1]^7`, every task a
/// random linear function of the coordinates selected by kernel 9.
pub fn planted_pair_environment() -> TaskEnvironment {
    TaskEnvironment {
        dictionary: coordinate_pair_dictionary(7, 16),
        true_kernel_index: 9,
        input_law: InputLaw::uniform_cube(7),
        clusters: vec![TaskCluster {
            weight: 1.0,
            planted: PlantedSpec::Random { n_centers: 2 },
            margin_gap: 0.05,
            flip_rate: 0.3,
        }],
    }
}
