//! Joint empirical risk minimization over `H^n`: one kernel shared by all
//! tasks, one predictor per task.
//!
//! For a fixed kernel the average margin error decomposes over tasks, so each
//! candidate kernel is scored by fitting the `n` tasks independently. The
//! candidate set is a deterministic enumeration of the family's parameter
//! space (see [`candidates`]), optionally refined by coordinate descent.
//! Ties on the average error go to the lowest canonical index.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, DataSource, MultiTaskSample};
use crate::error::{Error, Result};
use crate::family::{FamilyParams, KernelFamily};
use crate::kernel::{gram, GramMatrix, Kernel};
use crate::learner::{
    empirical_margin_error, fit_with_gram, true_margin_errors, McEstimate, MarginParams, Predictor,
};

/// Limits on the kernel search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchBudget {
    /// Weight grids use multiples of `1 / grid_resolution`; Gaussian grids use
    /// `grid_resolution + 1` log-spaced scales in `[1/4, 4]`.
    pub grid_resolution: usize,
    /// Coordinate-descent rounds after the grid (0 disables refinement).
    pub refinement_rounds: usize,
    /// Enumerating more candidates than this is a budget error.
    pub max_candidates: usize,
    /// Optional wall-clock cap on refinement, in seconds. Hitting it makes the
    /// result depend on machine speed.
    pub wall_clock_secs: Option<f64>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            grid_resolution: 4,
            refinement_rounds: 2,
            max_candidates: 100_000,
            wall_clock_secs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub params: FamilyParams,
    pub kernel: Kernel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskSolution {
    /// Canonical index of the winning candidate.
    pub candidate_index: usize,
    pub kernel_params: FamilyParams,
    pub kernel: Kernel,
    pub predictors: Vec<Predictor>,
    pub per_task_errors: Vec<f64>,
    pub avg_empirical_margin_error: f64,
    pub gamma: f64,
    pub candidates_evaluated: usize,
}

fn compositions(total: usize, parts: usize, positive: bool) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, min: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            if left >= min {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        // lexicographically decreasing first coordinate, so vertices come first
        for v in (min..=left.saturating_sub(min * (parts - 1))).rev() {
            cur.push(v);
            rec(left - v, parts - 1, min, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 && (!positive || total >= parts) {
        rec(total, parts, usize::from(positive), &mut Vec::new(), &mut out);
    }
    out
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}

fn scale_grid(resolution: usize) -> Vec<f64> {
    let r = resolution.max(1);
    (0..=r).map(|j| 0.25 * 16f64.powf(j as f64 / r as f64)).collect()
}

fn diag(values: &[f64]) -> Vec<Vec<f64>> {
    let d = values.len();
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { values[i] } else { 0.0 }).collect())
        .collect()
}

fn grid_params(family: &KernelFamily, budget: &SearchBudget) -> Result<Vec<FamilyParams>> {
    let r = budget.grid_resolution.max(1);
    let cap = budget.max_candidates;
    let over = |count: usize| {
        Error::Budget(format!(
            "kernel grid has {count} candidates, more than max_candidates = {cap}"
        ))
    };
    let params: Vec<FamilyParams> = match family {
        KernelFamily::ConvexCombo { dictionary } => {
            let count = binomial(r + dictionary.len() - 1, dictionary.len() - 1);
            if count > cap {
                return Err(over(count));
            }
            compositions(r, dictionary.len(), false)
                .into_iter()
                .map(|c| FamilyParams::Weights(c.iter().map(|&v| v as f64 / r as f64).collect()))
                .collect()
        }
        KernelFamily::LinearCombo { dictionary } => {
            let n = dictionary.len();
            let count = binomial(r + n, n) - 1;
            if count > cap {
                return Err(over(count));
            }
            let mut out = Vec::new();
            for total in (1..=r).rev() {
                for c in compositions(total, n, false) {
                    out.push(FamilyParams::Weights(
                        c.iter().map(|&v| v as f64 / r as f64).collect(),
                    ));
                }
            }
            out
        }
        KernelFamily::SparseCombo { dictionary, k } => {
            let n = dictionary.len();
            let mut out = Vec::new();
            for size in 1..=*k {
                let comps = compositions(r, size, true);
                if comps.is_empty() {
                    continue;
                }
                let count = out.len() + binomial(n, size) * comps.len();
                if count > cap {
                    return Err(over(count));
                }
                for subset in subsets(n, size) {
                    for c in &comps {
                        let mut w = vec![0.0; n];
                        for (&i, &v) in subset.iter().zip(c) {
                            w[i] = v as f64 / r as f64;
                        }
                        out.push(FamilyParams::Weights(w));
                    }
                }
            }
            out
        }
        KernelFamily::GaussianCovariance { dimension } => {
            let grid = scale_grid(r);
            let count = grid.len().checked_pow(*dimension as u32).unwrap_or(usize::MAX);
            if count > cap {
                return Err(over(count));
            }
            let mut out = Vec::new();
            let mut idx = vec![0usize; *dimension];
            loop {
                let v: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
                out.push(FamilyParams::Covariance(diag(&v)));
                let mut pos = *dimension;
                loop {
                    if pos == 0 {
                        return Ok(out);
                    }
                    pos -= 1;
                    idx[pos] += 1;
                    if idx[pos] < grid.len() {
                        break;
                    }
                    idx[pos] = 0;
                }
            }
        }
        KernelFamily::GaussianLowRank {
            dimension,
            max_rank,
        } => {
            let grid = scale_grid(r);
            let mut out = Vec::new();
            for size in 1..=*max_rank {
                let count = out.len() + binomial(*dimension, size) * grid.len();
                if count > cap {
                    return Err(over(count));
                }
                for subset in subsets(*dimension, size) {
                    for &s in &grid {
                        // precision s * sum_{i in subset} e_i e_i^T, i.e. bandwidth 1/sqrt(s)
                        let factor: Vec<Vec<f64>> = (0..*dimension)
                            .map(|row| {
                                subset
                                    .iter()
                                    .map(|&c| if c == row { s.sqrt() } else { 0.0 })
                                    .collect()
                            })
                            .collect();
                        out.push(FamilyParams::LowRankFactor(factor));
                    }
                }
            }
            out
        }
    };
    Ok(params)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// The canonical candidate list of a family under `budget`.
pub fn candidates(family: &KernelFamily, budget: &SearchBudget) -> Result<Vec<Candidate>> {
    family.validate()?;
    let params = grid_params(family, budget)?;
    if params.is_empty() {
        return Err(Error::input("the kernel search grid is empty"));
    }
    params
        .into_iter()
        .map(|p| {
            let kernel = family.instantiate(&p)?;
            Ok(Candidate { params: p, kernel })
        })
        .collect()
}

/// Per-task dictionary Gram matrices, reused across weight vectors.
struct GramCache {
    /// `[task][dictionary index]`
    grams: Vec<Vec<GramMatrix>>,
}

impl GramCache {
    fn build(dictionary: &[Kernel], sample: &MultiTaskSample) -> Result<Self> {
        let grams = sample
            .tasks
            .par_iter()
            .map(|t| dictionary.iter().map(|k| gram(k, &t.points)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok(GramCache { grams })
    }

    fn combined(&self, task: usize, weights: &[f64]) -> GramMatrix {
        let refs: Vec<&GramMatrix> = self.grams[task].iter().collect();
        GramMatrix::combine(weights, &refs)
    }
}

struct Scored {
    index: usize,
    violations: usize,
    predictors: Vec<Predictor>,
}

fn score(
    kernel: &Kernel,
    weights: Option<&[f64]>,
    cache: Option<&GramCache>,
    sample: &MultiTaskSample,
    params: &MarginParams,
) -> Result<(usize, Vec<Predictor>)> {
    let bound = kernel.bound();
    let fits = sample
        .tasks
        .par_iter()
        .enumerate()
        .map(|(t, task)| {
            let g = match (cache, weights) {
                (Some(c), Some(w)) => c.combined(t, w),
                _ => gram(kernel, &task.points)?,
            };
            let report = fit_with_gram(&g, &task.labels, bound, params)?;
            let m = task.len();
            let violations = (0..m)
                .filter(|&i| {
                    let v: f64 = (0..m).map(|j| g.get(i, j) * report.alphas[j]).sum();
                    task.labels[i] * v < params.gamma
                })
                .count();
            let pred = Predictor {
                alphas: report.alphas,
                support: task.points.clone(),
                kernel: kernel.clone(),
                converged: report.converged,
            };
            Ok((violations, pred))
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = fits.iter().map(|f| f.0).sum();
    Ok((violations, fits.into_iter().map(|f| f.1).collect()))
}

fn better(a: &Scored, b: &Scored) -> bool {
    (a.violations, a.index) < (b.violations, b.index)
}

fn search(
    cands: &[Candidate],
    offset: usize,
    cache: Option<&GramCache>,
    sample: &MultiTaskSample,
    params: &MarginParams,
) -> Result<Option<Scored>> {
    let scored = cands
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let weights = match &c.params {
                FamilyParams::Weights(w) => Some(w.as_slice()),
                _ => None,
            };
            let (violations, predictors) = score(&c.kernel, weights, cache, sample, params)?;
            Ok(Scored {
                index: offset + i,
                violations,
                predictors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scored.into_iter().reduce(|a, b| if better(&b, &a) { b } else { a }))
}

fn finish(
    best: Scored,
    cand: &Candidate,
    sample: &MultiTaskSample,
    params: &MarginParams,
    evaluated: usize,
) -> Result<MultiTaskSolution> {
    let per_task_errors = best
        .predictors
        .iter()
        .zip(&sample.tasks)
        .map(|(p, t)| empirical_margin_error(p, t, params.gamma))
        .collect::<Result<Vec<_>>>()?;
    let avg = per_task_errors.iter().sum::<f64>() / per_task_errors.len() as f64;
    Ok(MultiTaskSolution {
        candidate_index: best.index,
        kernel_params: cand.params.clone(),
        kernel: cand.kernel.clone(),
        predictors: best.predictors,
        avg_empirical_margin_error: avg,
        per_task_errors,
        gamma: params.gamma,
        candidates_evaluated: evaluated,
    })
}

/// ERM over an explicit candidate list (canonical order = list order).
pub fn erm_over(
    cands: &[Candidate],
    sample: &MultiTaskSample,
    params: &MarginParams,
) -> Result<MultiTaskSolution> {
    sample.validate()?;
    params.validate()?;
    let best = search(cands, 0, None, sample, params)?
        .ok_or_else(|| Error::input("the kernel search grid is empty"))?;
    let cand = &cands[best.index];
    finish(best, cand, sample, params, cands.len())
}

/// Fits the `n` tasks with one fixed kernel.
pub fn fit_fixed_kernel(
    kernel: &Kernel,
    sample: &MultiTaskSample,
    params: &MarginParams,
) -> Result<MultiTaskSolution> {
    let cand = Candidate {
        params: FamilyParams::Weights(vec![1.0]),
        kernel: kernel.clone(),
    };
    erm_over(std::slice::from_ref(&cand), sample, params)
}

/// Joint ERM over the family: grid search, then optional refinement.
pub fn erm_fit(
    family: &KernelFamily,
    sample: &MultiTaskSample,
    params: &MarginParams,
    budget: &SearchBudget,
) -> Result<MultiTaskSolution> {
    sample.validate()?;
    params.validate()?;
    let start = Instant::now();
    let mut all = candidates(family, budget)?;
    for c in &all {
        c.kernel.check_dim(sample.tasks[0].dim())?;
    }
    let cache = match family.dictionary() {
        Some(dict) => Some(GramCache::build(dict, sample)?),
        None => None,
    };
    let mut best = search(&all, 0, cache.as_ref(), sample, params)?
        .ok_or_else(|| Error::input("the kernel search grid is empty"))?;

    let r = budget.grid_resolution.max(1) as f64;
    for round in 0..budget.refinement_rounds {
        if let Some(cap) = budget.wall_clock_secs {
            if start.elapsed().as_secs_f64() > cap {
                log::warn!("kernel refinement stopped by the wall-clock cap after {round} rounds");
                break;
            }
        }
        let step = 1.0 / (r * 2f64.powi(round as i32 + 1));
        let neighbours: Vec<Candidate> = neighbours(family, &all[best.index].params, step)
            .into_iter()
            .filter_map(|p| {
                family
                    .instantiate(&p)
                    .ok()
                    .map(|kernel| Candidate { params: p, kernel })
            })
            .filter(|c| !all.iter().any(|a| a.params == c.params))
            .collect();
        if neighbours.is_empty() {
            continue;
        }
        let offset = all.len();
        let found = search(&neighbours, offset, cache.as_ref(), sample, params)?;
        all.extend(neighbours);
        if let Some(f) = found {
            if better(&f, &best) {
                best = f;
            }
        }
    }
    let evaluated = all.len();
    let cand = all[best.index].clone();
    finish(best, &cand, sample, params, evaluated)
}

/// Coordinate moves around `params` of size `step`.
fn neighbours(family: &KernelFamily, params: &FamilyParams, step: f64) -> Vec<FamilyParams> {
    let mut out = Vec::new();
    match params {
        FamilyParams::Weights(w) => {
            let n = w.len();
            for i in 0..n {
                for j in 0..n {
                    if i == j || w[i] < step - 1e-12 {
                        continue;
                    }
                    let mut v = w.clone();
                    v[i] = (v[i] - step).max(0.0);
                    v[j] += step;
                    out.push(FamilyParams::Weights(v));
                }
                if matches!(family, KernelFamily::LinearCombo { .. }) {
                    for sign in [-1.0, 1.0] {
                        let mut v = w.clone();
                        v[i] = (v[i] + sign * step).max(0.0);
                        out.push(FamilyParams::Weights(v));
                    }
                }
            }
        }
        FamilyParams::Covariance(c) => {
            let factor = 2f64.powf(step * 4.0);
            for i in 0..c.len() {
                for f in [factor, 1.0 / factor] {
                    let mut v = c.clone();
                    v[i][i] *= f;
                    out.push(FamilyParams::Covariance(v));
                }
            }
        }
        FamilyParams::LowRankFactor(l) => {
            let factor = 2f64.powf(step * 2.0);
            for f in [factor, 1.0 / factor] {
                let v = l
                    .iter()
                    .map(|row| row.iter().map(|x| x * f).collect())
                    .collect();
                out.push(FamilyParams::LowRankFactor(v));
            }
        }
    }
    out
}

/// Average over tasks of a Monte Carlo estimate, with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvgEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub per_task: Vec<McEstimate>,
}

/// Estimates `(1/n) sum_i P_i(y h_i(x) < gamma)` at every margin in `gammas`,
/// sharing draws across margins. Task `i` uses seed `derive_seed(seed, i)`.
pub fn avg_true_errors(
    solution: &MultiTaskSolution,
    distributions: &[&dyn DataSource],
    gammas: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<AvgEstimate>> {
    if distributions.len() != solution.predictors.len() {
        return Err(Error::input(format!(
            "{} distributions for {} tasks",
            distributions.len(),
            solution.predictors.len()
        )));
    }
    let per_task = solution
        .predictors
        .iter()
        .zip(distributions)
        .enumerate()
        .map(|(i, (p, d))| true_margin_errors(p, *d, gammas, mc_samples, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let n = per_task.len() as f64;
    Ok((0..gammas.len())
        .map(|g| {
            let est: Vec<McEstimate> = per_task.iter().map(|t| t[g]).collect();
            AvgEstimate {
                mean: est.iter().map(|e| e.mean).sum::<f64>() / n,
                std_error: est.iter().map(|e| e.std_error * e.std_error).sum::<f64>().sqrt() / n,
                per_task: est,
            }
        })
        .collect())
}

/// [`avg_true_errors`] at a single margin.
pub fn avg_true_error(
    solution: &MultiTaskSolution,
    distributions: &[&dyn DataSource],
    gamma: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<AvgEstimate> {
    Ok(avg_true_errors(solution, distributions, &[gamma], mc_samples, seed)?.remove(0))
}
