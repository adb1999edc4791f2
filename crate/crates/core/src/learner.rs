//! Single-task large-margin learner over the unit ball of an RKHS.
//!
//! A [`Predictor`] is `h(x) = sum_j alpha_j K(x_j, x)` with `alpha^T K alpha <= 1`.
//! Training minimizes the hinge loss at margin `gamma`,
//! `(1/m) sum_j max(0, 1 - y_j h(x_j) / gamma)`, over that ball by projected
//! gradient ascent along the functional gradient `(1/(m gamma)) sum_{active} y_j K(x_j, .)`
//! with backtracking, after a few stages on smoothed versions of the hinge. The reported quality is always the 0-1 margin error of
//! the iterate, not the surrogate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_labels, rng_stream, DataSource, LabeledSample};
use crate::error::{Error, Result};
use crate::kernel::{gram, GramMatrix, Kernel, Point};

/// Slack on the unit-norm constraint `alpha^T K alpha <= 1`.
pub const NORM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginParams {
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
    /// Backtracking gives up below this step size.
    pub min_step: f64,
}

impl Default for MarginParams {
    fn default() -> Self {
        MarginParams {
            gamma: 0.1,
            max_iters: 2000,
            tolerance: 1e-6,
            min_step: 1e-10,
        }
    }
}

impl MarginParams {
    pub fn with_gamma(gamma: f64) -> Self {
        MarginParams {
            gamma,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !(self.tolerance > 0.0) || !(self.min_step > 0.0) {
            return Err(Error::input("margin params need gamma, tolerance, min_step > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub alphas: Vec<f64>,
    pub support: Vec<Point>,
    pub kernel: Kernel,
    /// False when the optimizer hit `max_iters`.
    pub converged: bool,
}

impl Predictor {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.alphas
            .iter()
            .zip(&self.support)
            .map(|(a, xj)| a * self.kernel.eval(xj, x))
            .sum()
    }

    /// `alpha^T K alpha`, the squared RKHS norm.
    pub fn norm_sq(&self) -> Result<f64> {
        Ok(quad_form(&gram(&self.kernel, &self.support)?, &self.alphas))
    }
}

pub(crate) fn quad_form(g: &GramMatrix, a: &[f64]) -> f64 {
    let m = a.len();
    let mut s = 0.0;
    for i in 0..m {
        let row: f64 = a.iter().enumerate().map(|(j, aj)| g.get(i, j) * aj).sum();
        s += a[i] * row;
    }
    s
}

fn mat_vec(g: &GramMatrix, a: &[f64]) -> Vec<f64> {
    let m = a.len();
    (0..m)
        .map(|i| (0..m).map(|j| g.get(i, j) * a[j]).sum())
        .collect()
}

/// Fraction of `margins` (values `y h(x)`) strictly below `gamma`.
pub fn margin_error_rate(margins: &[f64], gamma: f64) -> f64 {
    margins.iter().filter(|&&v| v < gamma).count() as f64 / margins.len() as f64
}

/// Fraction of examples with `y h(x) < gamma`; `gamma = 0` is the 0-1 error.
pub fn empirical_margin_error(predictor: &Predictor, data: &LabeledSample, gamma: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("empirical margin error needs a nonempty sample"));
    }
    check_labels(&data.labels)?;
    let margins: Vec<f64> = data
        .points
        .iter()
        .zip(&data.labels)
        .map(|(x, y)| y * predictor.eval(x))
        .collect();
    Ok(margin_error_rate(&margins, gamma))
}

/// Outcome of optimizing over a fixed Gram matrix.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub alphas: Vec<f64>,
    /// Hinge objective of the returned iterate.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every accepted step.
    pub objective_trace: Vec<f64>,
}

fn hinge(values: &[f64], labels: &[f64], gamma: f64) -> f64 {
    smoothed_hinge(values, labels, gamma, 0.0)
}

/// Hinge at `gamma` with the kink replaced by a quadratic on `[-mu, mu]`
/// (`mu = 0` is the plain hinge). It bounds the hinge from above and is zero
/// only when every margin exceeds `gamma (1 + mu)`.
fn smoothed_hinge(values: &[f64], labels: &[f64], gamma: f64, mu: f64) -> f64 {
    let m = values.len() as f64;
    values
        .iter()
        .zip(labels)
        .map(|(v, y)| {
            let z = 1.0 - y * v / gamma;
            if z <= -mu {
                0.0
            } else if z < mu {
                (z + mu) * (z + mu) / (4.0 * mu)
            } else {
                z
            }
        })
        .sum::<f64>()
        / m
}

/// Derivative of the smoothed hinge in `z`.
fn smoothed_slope(z: f64, mu: f64) -> f64 {
    if z <= -mu {
        0.0
    } else if z < mu {
        (z + mu) / (2.0 * mu)
    } else {
        1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(gram: &GramMatrix, alphas: &mut [f64]) {
    let norm_sq = quad_form(gram, alphas);
    if norm_sq > 1.0 {
        let s = norm_sq.sqrt();
        alphas.iter_mut().for_each(|a| *a /= s);
    }
}

/// Smoothing widths, ending with the plain hinge. The plain hinge alone can
/// stall at a kink where one example sits exactly on the margin.
const SMOOTHING: [f64; 6] = [0.5, 0.1, 0.02, 4e-3, 8e-4, 0.0];

/// Projected-gradient fit on a precomputed Gram matrix.
///
/// `bound` is the kernel bound `B`; the start `alpha = y / (m sqrt(B))` is
/// feasible for any kernel bounded by `B`. Each stage minimizes a smoothed
/// hinge from the previous stage's iterate; the returned iterate is the one
/// with the smallest plain hinge seen.
pub fn fit_with_gram(
    gram: &GramMatrix,
    labels: &[f64],
    bound: f64,
    params: &MarginParams,
) -> Result<FitReport> {
    params.validate()?;
    let m = labels.len();
    if m == 0 || gram.size() != m {
        return Err(Error::input("gram size and label count must agree and be nonzero"));
    }
    check_labels(labels)?;
    gram.check_psd()?;
    let gamma = params.gamma;

    let scale = if bound > 0.0 { 1.0 / (m as f64 * bound.sqrt()) } else { 0.0 };
    let mut alphas: Vec<f64> = labels.iter().map(|y| y * scale).collect();
    project(gram, &mut alphas);
    let mut values = mat_vec(gram, &alphas);
    let mut best = (alphas.clone(), hinge(&values, labels, gamma));
    let mut trace = vec![best.1];
    let mut converged = false;
    let mut iterations = 0;

    'stages: for &mu in &SMOOTHING {
        let mut objective = smoothed_hinge(&values, labels, gamma, mu);
        // Barzilai-Borwein memory: previous iterate and direction
        let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
        converged = false;
        while iterations < params.max_iters {
            iterations += 1;
            let direction: Vec<f64> = values
                .iter()
                .zip(labels)
                .map(|(v, y)| y * smoothed_slope(1.0 - y * v / gamma, mu) / (m as f64 * gamma))
                .collect();
            if objective == 0.0 || direction.iter().all(|&d| d == 0.0) {
                converged = true;
                if best.1 == 0.0 {
                    break 'stages;
                }
                break;
            }
            let mut step = 1.0;
            if let Some((prev_alphas, prev_dir)) = &previous {
                let ds: Vec<f64> = alphas.iter().zip(prev_alphas).map(|(a, b)| a - b).collect();
                let dd: Vec<f64> = prev_dir.iter().zip(&direction).map(|(a, b)| a - b).collect();
                let gs = mat_vec(gram, &ds);
                let (num, den) = (dot(&ds, &gs), dot(&dd, &gs));
                if num > 0.0 && den > 0.0 {
                    step = (num / den).clamp(1e-6, 1e6);
                }
            }
            let mut accepted = None;
            while step >= params.min_step {
                let mut trial: Vec<f64> = alphas
                    .iter()
                    .zip(&direction)
                    .map(|(a, d)| a + step * d)
                    .collect();
                project(gram, &mut trial);
                let trial_values = mat_vec(gram, &trial);
                let trial_obj = smoothed_hinge(&trial_values, labels, gamma, mu);
                if trial_obj < objective {
                    accepted = Some((trial, trial_values, trial_obj));
                    break;
                }
                step *= 0.5;
            }
            let Some((a, v, obj)) = accepted else {
                converged = true;
                break;
            };
            let improvement = objective - obj;
            previous = Some((std::mem::replace(&mut alphas, a), direction));
            values = v;
            objective = obj;
            let h = hinge(&values, labels, gamma);
            if h < best.1 {
                best = (alphas.clone(), h);
                trace.push(h);
            }
            if improvement < params.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            break;
        }
    }
    if !converged {
        log::warn!(
            "margin learner stopped after {} iterations without converging (objective {})",
            params.max_iters,
            best.1
        );
    }
    Ok(FitReport {
        alphas: best.0,
        objective: best.1,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Fits a unit-norm predictor for one task.
pub fn fit_single_task(kernel: &Kernel, data: &LabeledSample, params: &MarginParams) -> Result<Predictor> {
    data.validate()?;
    let g = gram(kernel, &data.points)?;
    let report = fit_with_gram(&g, &data.labels, kernel.bound(), params)?;
    Ok(Predictor {
        alphas: report.alphas,
        support: data.points.clone(),
        kernel: kernel.clone(),
        converged: report.converged,
    })
}

/// A Monte Carlo mean of an indicator, with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_count(count: usize, samples: usize) -> Self {
        let p = count as f64 / samples as f64;
        McEstimate {
            mean: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }
}

/// Draws `mc_samples` examples once and returns, for each margin in `gammas`,
/// the estimated `P(y h(x) < gamma)`. Estimates at different margins share the
/// same draws, so they are ordered exactly like the margins.
pub fn true_margin_errors(
    predictor: &Predictor,
    source: &dyn DataSource,
    gammas: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    let margins = sample_margins(predictor, source, mc_samples, seed)?;
    Ok(gammas
        .iter()
        .map(|&g| McEstimate::from_count(margins.iter().filter(|&&v| v < g).count(), mc_samples))
        .collect())
}

/// Monte Carlo estimate of `P(y h(x) < gamma)` under `source`.
pub fn true_margin_error(
    predictor: &Predictor,
    source: &dyn DataSource,
    gamma: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    Ok(true_margin_errors(predictor, source, &[gamma], mc_samples, seed)?[0])
}

/// Values `y h(x)` on `mc_samples` fresh draws.
pub fn sample_margins(
    predictor: &Predictor,
    source: &dyn DataSource,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if mc_samples == 0 {
        return Err(Error::input("mc_samples must be >= 1"));
    }
    let mut rng = rng_stream(seed, 0);
    let draws: Vec<(Point, f64)> = (0..mc_samples).map(|_| source.draw(&mut rng)).collect();
    Ok(draws
        .par_iter()
        .map(|(x, y)| y * predictor.eval(x))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn predictor_with_margins(margins: &[f64]) -> (Predictor, LabeledSample) {
        // linear kernel on 1-d points; alpha = 1 at support x = 1 gives h(x) = x
        let pred = Predictor {
            alphas: vec![1.0],
            support: vec![vec![1.0]],
            kernel: Kernel::linear(1.0),
            converged: true,
        };
        let data = LabeledSample::new(
            margins.iter().map(|&v| vec![v]).collect(),
            vec![1.0; margins.len()],
        )
        .unwrap();
        (pred, data)
    }

    #[test]
    fn margin_error_examples() {
        let (p, d) = predictor_with_margins(&[0.5]);
        assert_eq!(empirical_margin_error(&p, &d, 0.2).unwrap(), 0.0);
        assert_eq!(empirical_margin_error(&p, &d, 0.6).unwrap(), 1.0);
        let (p, d) = predictor_with_margins(&[-0.1, 0.05, 0.3, 0.9]);
        assert_eq!(empirical_margin_error(&p, &d, 0.2).unwrap(), 0.5);
    }

    #[test]
    fn bad_label_is_input_error() {
        let (p, mut d) = predictor_with_margins(&[0.5]);
        d.labels[0] = 0.0;
        assert!(matches!(
            empirical_margin_error(&p, &d, 0.1),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn two_point_separable_problem() {
        let data = LabeledSample::new(vec![vec![-1.0], vec![1.0]], vec![-1.0, 1.0]).unwrap();
        let p = fit_single_task(&Kernel::linear(1.0), &data, &MarginParams::with_gamma(0.5)).unwrap();
        assert_eq!(empirical_margin_error(&p, &data, 0.5).unwrap(), 0.0);
        assert!(p.norm_sq().unwrap() <= 1.0 + NORM_TOL);
    }

    #[test]
    fn constant_labels_in_one_halfspace() {
        let pts = vec![vec![0.5, 0.1], vec![0.9, -0.3], vec![0.2, 0.4], vec![1.0, 1.0]];
        let data = LabeledSample::new(pts, vec![1.0; 4]).unwrap();
        let p = fit_single_task(&Kernel::linear(2.0), &data, &MarginParams::with_gamma(0.1)).unwrap();
        assert_eq!(empirical_margin_error(&p, &data, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn single_point_closed_form() {
        // K(x, x) = scale * |x|^2; closed form alpha = y / sqrt(K(x, x))
        for (scale, y) in [(1.0, 1.0), (0.09, -1.0), (0.2, 1.0)] {
            let kernel = Kernel::Linear {
                scale,
                radius_sq: 1.0,
                coords: None,
            };
            let data = LabeledSample::new(vec![vec![1.0]], vec![y]).unwrap();
            let gamma = 0.5;
            let p = fit_single_task(&kernel, &data, &MarginParams::with_gamma(gamma)).unwrap();
            let kxx: f64 = scale;
            assert!((p.alphas[0] - y / kxx.sqrt()).abs() < 1e-9, "{:?}", p.alphas);
            let err = empirical_margin_error(&p, &data, gamma).unwrap();
            assert_eq!(err == 0.0, kxx >= gamma * gamma);
        }
        let data = LabeledSample::new(vec![vec![0.3, 0.3]], vec![-1.0]).unwrap();
        let p = fit_single_task(&Kernel::rbf(1.0), &data, &MarginParams::with_gamma(0.5)).unwrap();
        assert!((p.alphas[0] + 1.0).abs() < 1e-9);
        assert_eq!(empirical_margin_error(&p, &data, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let pts: Vec<Point> = (0..30)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()])
            .collect();
        let labels: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, x)| if (x[0] * x[1] > 0.0) ^ (i % 7 == 0) { 1.0 } else { -1.0 })
            .collect();
        let g = gram(&Kernel::rbf(0.7), &pts).unwrap();
        let r = fit_with_gram(&g, &labels, 1.0, &MarginParams::with_gamma(0.2)).unwrap();
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(quad_form(&g, &r.alphas) <= 1.0 + NORM_TOL);
    }

    #[test]
    fn indefinite_gram_is_numeric_error() {
        let g = GramMatrix {
            entries: nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]),
        };
        assert!(matches!(
            fit_with_gram(&g, &[1.0, -1.0], 1.0, &MarginParams::default()),
            Err(Error::Numeric(_))
        ));
    }

    struct Planted {
        flip: bool,
        random: bool,
    }

    impl DataSource for Planted {
        fn draw(&self, rng: &mut crate::data::Rng) -> (Point, f64) {
            use rand::Rng as _;
            let mut x: f64 = rng.random_range(0.3..1.0);
            if rng.random_bool(0.5) {
                x = -x;
            }
            let mut y = x.signum();
            if self.flip {
                y = -y;
            }
            if self.random {
                y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            }
            (vec![x], y)
        }
    }

    #[test]
    fn true_margin_error_planted_cases() {
        let h = Predictor {
            alphas: vec![1.0],
            support: vec![vec![1.0]],
            kernel: Kernel::linear(1.0),
            converged: true,
        };
        let gamma = 0.25;
        let ok = Planted { flip: false, random: false };
        assert_eq!(true_margin_error(&h, &ok, gamma, 5000, 1).unwrap().mean, 0.0);
        let flip = Planted { flip: true, random: false };
        assert_eq!(true_margin_error(&h, &flip, gamma, 5000, 1).unwrap().mean, 1.0);
        let noise = Planted { flip: false, random: true };
        let n = 20000;
        let est = true_margin_error(&h, &noise, 0.0, n, 3).unwrap();
        assert!(est.std_error <= 0.5 / (n as f64).sqrt() + 1e-15);
        assert!((est.mean - 0.5).abs() <= 3.0 * 0.5 / (n as f64).sqrt());
        let again = true_margin_error(&h, &noise, 0.0, n, 3).unwrap();
        assert_eq!(est, again);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn margin_error_monotone_in_gamma(
            margins in proptest::collection::vec(-1.0f64..1.0, 1..50),
            g1 in 0.0f64..1.0,
            g2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            prop_assert!(margin_error_rate(&margins, lo) <= margin_error_rate(&margins, hi));
        }
    }
}
