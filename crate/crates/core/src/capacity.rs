//! Empirical capacity measurements: pseudo-shattering search, greedy
//! covers, and the empirical max-min kernel distance `D^x_1`.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::rng_stream;
use crate::error::{Error, Result};
use crate::kernel::{check_sample, gram, GramMatrix, Kernel, Point};

/// Exhaustive shattering search is exponential in the number of pairs.
pub const MAX_PAIRS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShatterBudget {
    /// Threshold choices the depth-first search may try.
    pub max_nodes: u64,
}

impl Default for ShatterBudget {
    fn default() -> Self {
        ShatterBudget {
            max_nodes: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShatterInstance {
    pub pairs: Vec<(Point, Point)>,
    /// Searched when absent.
    pub thresholds: Option<Vec<f64>>,
    pub members: Vec<Kernel>,
}

/// Thresholds and, for every sign pattern, a member realizing it. Bit `i` of
/// a pattern is set iff `K(x_i, x_i') > t_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub thresholds: Vec<f64>,
    pub realizers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShatterOutcome {
    pub shattered: bool,
    pub witness: Option<Witness>,
    pub nodes: u64,
}

/// `values[member][pair] = K_member(x_pair, x'_pair)`.
pub fn value_matrix(members: &[Kernel], pairs: &[(Point, Point)]) -> Vec<Vec<f64>> {
    members
        .par_iter()
        .map(|k| pairs.iter().map(|(a, b)| k.eval(a, b)).collect())
        .collect()
}

fn distinct_sorted(column: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = column.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn midpoints(values: &[Vec<f64>], pair: usize) -> Vec<f64> {
    let v = distinct_sorted(values.iter().map(|row| row[pair]));
    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

struct Search<'a> {
    values: &'a [Vec<f64>],
    max_nodes: u64,
    nodes: u64,
    seen: Vec<bool>,
}

impl Search<'_> {
    /// Extends `codes` (patterns on the first `depth` pairs) one pair at a time.
    fn dfs(&mut self, depth: usize, codes: &[u32], thresholds: &mut Vec<f64>) -> Result<bool> {
        let n = self.values[0].len();
        if depth == n {
            return Ok(true);
        }
        // every pattern class must have members on both sides of the threshold
        let classes = 1usize << depth;
        let mut lo = vec![f64::INFINITY; classes];
        let mut hi = vec![f64::NEG_INFINITY; classes];
        for (&c, row) in codes.iter().zip(self.values) {
            let v = row[depth];
            lo[c as usize] = lo[c as usize].min(v);
            hi[c as usize] = hi[c as usize].max(v);
        }
        let lower = lo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let upper = hi.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lower < upper) {
            return Ok(false);
        }
        let candidates: Vec<f64> = midpoints(self.values, depth)
            .into_iter()
            .filter(|&t| t >= lower && t < upper)
            .collect();
        for t in candidates {
            self.nodes += 1;
            if self.nodes > self.max_nodes {
                return Err(Error::Budget(format!(
                    "shattering search exceeded {} nodes",
                    self.max_nodes
                )));
            }
            let next: Vec<u32> = codes
                .iter()
                .zip(self.values)
                .map(|(&c, row)| c | (u32::from(row[depth] > t) << depth))
                .collect();
            debug_assert_eq!(count_patterns(&next, depth + 1, &mut self.seen), 1usize << (depth + 1));
            thresholds.push(t);
            if self.dfs(depth + 1, &next, thresholds)? {
                return Ok(true);
            }
            thresholds.pop();
        }
        Ok(false)
    }
}

fn count_patterns(codes: &[u32], bits: usize, seen: &mut [bool]) -> usize {
    let seen = &mut seen[..1usize << bits];
    seen.iter_mut().for_each(|s| *s = false);
    let mut count = 0;
    for &c in codes {
        if !seen[c as usize] {
            seen[c as usize] = true;
            count += 1;
        }
    }
    count
}

fn codes_at(values: &[Vec<f64>], thresholds: &[f64]) -> Vec<u32> {
    values
        .iter()
        .map(|row| {
            row.iter()
                .zip(thresholds)
                .enumerate()
                .fold(0u32, |c, (i, (v, t))| c | (u32::from(v > t) << i))
        })
        .collect()
}

fn witness(values: &[Vec<f64>], thresholds: Vec<f64>) -> Witness {
    let codes = codes_at(values, &thresholds);
    let mut realizers = vec![usize::MAX; 1 << thresholds.len()];
    for (m, &c) in codes.iter().enumerate() {
        if realizers[c as usize] == usize::MAX {
            realizers[c as usize] = m;
        }
    }
    Witness {
        thresholds,
        realizers,
    }
}

/// Pseudo-shattering test on a precomputed value matrix (rows are members,
/// columns are pairs).
pub fn is_shattered_values(
    values: &[Vec<f64>],
    thresholds: Option<&[f64]>,
    budget: &ShatterBudget,
) -> Result<ShatterOutcome> {
    let n = values.first().map_or(0, Vec::len);
    if values.is_empty() {
        return Err(Error::input("shattering needs at least one family member"));
    }
    if values.iter().any(|r| r.len() != n) {
        return Err(Error::input("ragged value matrix"));
    }
    if n > MAX_PAIRS {
        return Err(Error::input(format!(
            "{n} pairs exceed the exhaustive-search limit of {MAX_PAIRS}"
        )));
    }
    if let Some(t) = thresholds {
        if t.len() != n {
            return Err(Error::input(format!("{} thresholds for {n} pairs", t.len())));
        }
        let codes = codes_at(values, t);
        let mut seen = vec![false; 1 << n];
        let shattered = count_patterns(&codes, n, &mut seen) == 1 << n;
        return Ok(ShatterOutcome {
            shattered,
            witness: shattered.then(|| witness(values, t.to_vec())),
            nodes: 1,
        });
    }
    // necessary condition: 2^n distinct value patterns need 2^n members
    if values.len() < 1 << n {
        return Ok(ShatterOutcome {
            shattered: false,
            witness: None,
            nodes: 0,
        });
    }
    let mut search = Search {
        values,
        max_nodes: budget.max_nodes,
        nodes: 0,
        seen: vec![false; 1 << n],
    };
    let mut thresholds = Vec::with_capacity(n);
    let shattered = search.dfs(0, &vec![0; values.len()], &mut thresholds)?;
    Ok(ShatterOutcome {
        shattered,
        witness: shattered.then(|| witness(values, thresholds)),
        nodes: search.nodes,
    })
}

pub fn is_shattered(instance: &ShatterInstance, budget: &ShatterBudget) -> Result<ShatterOutcome> {
    for (i, a) in instance.pairs.iter().enumerate() {
        if instance.pairs[..i].contains(a) {
            return Err(Error::input(format!("pair {i} is repeated")));
        }
    }
    for k in &instance.members {
        k.validate()?;
    }
    let values = value_matrix(&instance.members, &instance.pairs);
    is_shattered_values(&values, instance.thresholds.as_deref(), budget)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdBudget {
    pub max_n: usize,
    pub trials: usize,
    /// Per shattering test.
    pub max_nodes: u64,
    pub seed: u64,
}

impl Default for PdBudget {
    fn default() -> Self {
        PdBudget {
            max_n: 8,
            trials: 200,
            max_nodes: 200_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdLowerBound {
    /// Size of the largest pseudo-shattered set found.
    pub n: usize,
    /// Pool indices of the shattered pairs.
    pub pairs: Vec<(usize, usize)>,
    pub witness: Option<Witness>,
    /// Some shattering test ran out of nodes, so larger sets may exist.
    pub budget_exhausted: bool,
    pub trials_run: usize,
}

struct Trial {
    pairs: Vec<usize>,
    witness: Option<Witness>,
    exhausted: bool,
}

#[derive(Clone)]
enum Check {
    Yes(Witness),
    No,
    Exhausted,
}

/// Shattering results keyed by the ordered pair list, shared across trials.
type Memo = Mutex<HashMap<Vec<usize>, Check>>;

fn check_set(values: &[Vec<f64>], chosen: &[usize], max_nodes: u64, memo: &Memo) -> Check {
    if let Some(c) = memo.lock().expect("memo lock").get(chosen) {
        return c.clone();
    }
    let sub: Vec<Vec<f64>> = values
        .iter()
        .map(|row| chosen.iter().map(|&c| row[c]).collect())
        .collect();
    let result = match is_shattered_values(&sub, None, &ShatterBudget { max_nodes }) {
        Ok(o) => match o.witness {
            Some(w) => Check::Yes(w),
            None => Check::No,
        },
        Err(_) => Check::Exhausted,
    };
    memo.lock()
        .expect("memo lock")
        .insert(chosen.to_vec(), result.clone());
    result
}

fn greedy_trial(values: &[Vec<f64>], useful: &[usize], cap: usize, budget: &PdBudget, trial: u64, memo: &Memo) -> Trial {
    let mut order = useful.to_vec();
    order.shuffle(&mut rng_stream(budget.seed, trial));
    let mut chosen: Vec<usize> = Vec::new();
    let mut best = None;
    let mut exhausted = false;
    for p in order {
        if chosen.len() >= cap {
            break;
        }
        chosen.push(p);
        match check_set(values, &chosen, budget.max_nodes, memo) {
            Check::Yes(w) => best = Some(w),
            Check::No => {
                chosen.pop();
            }
            Check::Exhausted => {
                exhausted = true;
                chosen.pop();
            }
        }
    }
    Trial {
        pairs: chosen,
        witness: best,
        exhausted,
    }
}

/// Certified lower bound on the pseudodimension of a finite member list,
/// searching over pairs drawn from `pool` (randomized greedy, seeded).
pub fn pseudodim_lower_bound(members: &[Kernel], pool: &[Point], budget: &PdBudget) -> Result<PdLowerBound> {
    if members.is_empty() {
        return Err(Error::input("pseudodimension search needs at least one member"));
    }
    check_sample(pool)?;
    let index: Vec<(usize, usize)> = (0..pool.len())
        .flat_map(|i| (i..pool.len()).map(move |j| (i, j)))
        .collect();
    let pairs: Vec<(Point, Point)> = index
        .iter()
        .map(|&(i, j)| (pool[i].clone(), pool[j].clone()))
        .collect();
    let values = value_matrix(members, &pairs);
    let useful: Vec<usize> = (0..pairs.len())
        .filter(|&p| distinct_sorted(values.iter().map(|r| r[p])).len() > 1)
        .collect();
    let distinct_rows = {
        let mut rows: Vec<Vec<u64>> = values
            .iter()
            .map(|r| useful.iter().map(|&p| r[p].to_bits()).collect())
            .collect();
        rows.sort();
        rows.dedup();
        rows.len()
    };
    let cap = budget
        .max_n
        .min(MAX_PAIRS)
        .min(distinct_rows.ilog2() as usize);
    let mut best = Trial {
        pairs: Vec::new(),
        witness: None,
        exhausted: false,
    };
    let memo: Memo = Mutex::new(HashMap::new());
    let mut trials_run = 0;
    let mut exhausted = false;
    const CHUNK: usize = 64;
    while trials_run < budget.trials && best.pairs.len() < cap && !useful.is_empty() {
        let end = (trials_run + CHUNK).min(budget.trials);
        let results: Vec<Trial> = (trials_run..end)
            .into_par_iter()
            .map(|t| greedy_trial(&values, &useful, cap, budget, t as u64, &memo))
            .collect();
        trials_run = end;
        for r in results {
            exhausted |= r.exhausted;
            if r.pairs.len() > best.pairs.len() {
                best = r;
            }
        }
    }
    Ok(PdLowerBound {
        n: best.pairs.len(),
        pairs: best.pairs.iter().map(|&p| index[p]).collect(),
        witness: best.witness,
        budget_exhausted: exhausted,
        trials_run,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMetric {
    /// Sup distance between function values on the sample.
    DxInfinity,
    /// Largest entrywise Gram difference over the per-task blocks.
    DxInfinityKernel,
    /// Empirical max-min mean absolute deviation on the pooled sample.
    D1Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverCandidates {
    /// Values of each candidate function (or tuple) on the flattened sample.
    Functions(Vec<Vec<f64>>),
    Kernels(Vec<Kernel>),
}

impl CoverCandidates {
    pub fn len(&self) -> usize {
        match self {
            CoverCandidates::Functions(f) => f.len(),
            CoverCandidates::Kernels(k) => k.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverRequest {
    pub metric: CoverMetric,
    pub epsilon: f64,
    pub candidates: CoverCandidates,
    /// Per-task evaluation points (ignored for precomputed function values).
    pub sample: Vec<Vec<Point>>,
    /// Probe directions for `D1Empirical`.
    pub probe_budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    /// Candidate indices of the cover, in insertion order.
    pub indices: Vec<usize>,
    /// Largest distance from a candidate to its nearest cover element.
    pub radius: f64,
}

impl Cover {
    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Pairwise distances between the request's candidates.
pub fn distance_matrix(req: &CoverRequest) -> Result<Vec<Vec<f64>>> {
    let c = req.candidates.len();
    let dist: Box<dyn Fn(usize, usize) -> f64 + Sync> = match (&req.metric, &req.candidates) {
        (CoverMetric::DxInfinity, CoverCandidates::Functions(f)) => {
            let len = f.first().map_or(0, Vec::len);
            if f.iter().any(|v| v.len() != len) {
                return Err(Error::input("function value vectors differ in length"));
            }
            Box::new(move |i, j| sup_distance(&f[i], &f[j]))
        }
        (CoverMetric::DxInfinityKernel, CoverCandidates::Kernels(ks)) => {
            let grams = kernel_grams(ks, &req.sample)?;
            Box::new(move |i, j| {
                grams[i]
                    .iter()
                    .zip(&grams[j])
                    .fold(0.0, |m, (a, b)| m.max((&a.entries - &b.entries).amax()))
            })
        }
        (CoverMetric::D1Empirical, CoverCandidates::Kernels(ks)) => {
            if req.probe_budget == 0 {
                return Err(Error::input("probe budget must be >= 1"));
            }
            let pooled: Vec<Point> = req.sample.iter().flatten().cloned().collect();
            let grams = ks
                .iter()
                .map(|k| gram(k, &pooled))
                .collect::<Result<Vec<_>>>()?;
            let probes = req.probe_budget;
            Box::new(move |i, j| d1_from_grams(&grams[i], &grams[j], probes))
        }
        _ => {
            return Err(Error::input(
                "dx_infinity takes function values; the kernel metrics take kernels",
            ))
        }
    };
    let upper: Vec<Vec<f64>> = (0..c)
        .into_par_iter()
        .map(|i| ((i + 1)..c).map(|j| dist(i, j)).collect())
        .collect();
    let mut d = vec![vec![0.0; c]; c];
    for i in 0..c {
        for (off, &v) in upper[i].iter().enumerate() {
            let j = i + 1 + off;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

fn kernel_grams(ks: &[Kernel], sample: &[Vec<Point>]) -> Result<Vec<Vec<GramMatrix>>> {
    if sample.is_empty() {
        return Err(Error::input("kernel metrics need a nonempty sample"));
    }
    ks.par_iter()
        .map(|k| sample.iter().map(|t| gram(k, t)).collect())
        .collect()
}

/// Farthest-point greedy cover of a distance matrix: every candidate ends up
/// strictly closer than `epsilon` to some cover element.
pub fn greedy_cover_matrix(dist: &[Vec<f64>], epsilon: f64) -> Result<Cover> {
    if !(epsilon > 0.0) {
        return Err(Error::input("epsilon must be positive"));
    }
    if dist.is_empty() {
        return Err(Error::input("cover needs at least one candidate"));
    }
    let mut indices = vec![0];
    let mut nearest = dist[0].clone();
    loop {
        let (far, &d) = nearest
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if d < epsilon {
            break;
        }
        indices.push(far);
        for (n, row) in nearest.iter_mut().zip(&dist[far]) {
            *n = n.min(*row);
        }
    }
    let radius = check_cover(dist, &indices)?;
    if radius >= epsilon {
        return Err(Error::numeric("greedy cover failed its validity check"));
    }
    Ok(Cover { indices, radius })
}

/// Largest distance from a candidate to the nearest member of `cover`.
pub fn check_cover(dist: &[Vec<f64>], cover: &[usize]) -> Result<f64> {
    if cover.is_empty() {
        return Err(Error::input("empty cover"));
    }
    Ok(dist
        .iter()
        .map(|row| cover.iter().map(|&c| row[c]).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

pub fn greedy_cover(req: &CoverRequest) -> Result<Cover> {
    if req.candidates.is_empty() {
        return Err(Error::input("cover needs at least one candidate"));
    }
    if !(req.epsilon > 0.0) {
        return Err(Error::input("epsilon must be positive"));
    }
    greedy_cover_matrix(&distance_matrix(req)?, req.epsilon)
}

/// Least-squares slope of `ln size` against `ln(1/epsilon)`.
pub fn loglog_slope(epsilons: &[f64], sizes: &[usize]) -> f64 {
    let xs: Vec<f64> = epsilons.iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn psd_sqrt(g: &GramMatrix) -> DMatrix<f64> {
    let e = g.eigen();
    // rounding noise in the null space would otherwise become O(1e-8) roots
    let floor = 1e-13 * e.eigenvalues.amax();
    let s = e.eigenvalues.map(|l| if l > floor { l.sqrt() } else { 0.0 });
    &e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose()
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut p = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&q| q * q <= p).all(|&q| !p.is_multiple_of(q)) {
            out.push(p);
        }
        p += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton points mapped to `[-1, 1]^dim`, skipping the origin.
fn probe_directions(dim: usize, count: usize) -> Vec<DVector<f64>> {
    let bases = primes(dim);
    (1..=count as u64)
        .map(|i| DVector::from_iterator(dim, bases.iter().map(|&b| 2.0 * radical_inverse(i, b) - 1.0)))
        .collect()
}

/// `min_{|w| <= 1} (1/m) |u - A w|_1`, solved with a log-barrier Newton
/// method on `min sum t  s.t.  -t <= u - A w <= t, |w| <= 1`. The
/// least-squares point projected onto the ball is also tried. Returns the
/// objective at the best feasible point found, an upper bound on the minimum
/// that is within `BARRIER_GAP` of it.
fn l1_distance_to_ellipsoid(a: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    let m = u.len();
    let value = |w: &DVector<f64>| (u - a * w).abs().sum() / m as f64;
    let svd = a.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.amax();
    let mut ls = svd
        .pseudo_inverse(tol)
        .map_or_else(|_| DVector::zeros(m), |p| p * u);
    let n = ls.norm();
    if n > 1.0 {
        ls /= n;
    }
    value(&ls).min(value(&barrier_l1(a, u)))
}

/// Duality gap (on the mean absolute deviation) at which the barrier stops.
const BARRIER_GAP: f64 = 1e-12;

fn barrier_l1(a: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    let m = u.len();
    let at = a.transpose();
    let mut w = DVector::zeros(m);
    let mut t = u.map(|x| x.abs() + 1.0);
    let phi = |tau: f64, w: &DVector<f64>, t: &DVector<f64>| -> f64 {
        let r = u - a * w;
        let s = 1.0 - w.norm_squared();
        if s <= 0.0 {
            return f64::INFINITY;
        }
        let mut f = tau * t.sum() - s.ln();
        for i in 0..m {
            let (lo, hi) = (t[i] - r[i], t[i] + r[i]);
            if lo <= 0.0 || hi <= 0.0 {
                return f64::INFINITY;
            }
            f -= lo.ln() + hi.ln();
        }
        f
    };
    let constraints = (2 * m + 1) as f64;
    let mut tau = 1.0;
    loop {
        for _ in 0..100 {
            let r = u - a * &w;
            let s = 1.0 - w.norm_squared();
            let lo = &t - &r;
            let hi = &t + &r;
            let gt = lo.zip_map(&hi, |p, q| tau - 1.0 / p - 1.0 / q);
            let gr = lo.zip_map(&hi, |p, q| 1.0 / p - 1.0 / q);
            let htt = lo.zip_map(&hi, |p, q| 1.0 / (p * p) + 1.0 / (q * q));
            let htr = lo.zip_map(&hi, |p, q| -1.0 / (p * p) + 1.0 / (q * q));
            // eliminate t: reduced curvature and gradient in r
            let d = DVector::from_fn(m, |i, _| htt[i] - htr[i] * htr[i] / htt[i]);
            let gr_red = DVector::from_fn(m, |i, _| gr[i] - htr[i] / htt[i] * gt[i]);
            let ad = DMatrix::from_fn(m, m, |i, j| a[(i, j)] * d[i]);
            let hess = &at * &ad + DMatrix::identity(m, m) * (2.0 / s) + (&w * w.transpose()) * (4.0 / (s * s));
            let grad = -(&at * &gr_red) + &w * (2.0 / s);
            // past the attainable precision the Hessian stops being numerically PD
            let Some(chol) = hess.cholesky() else {
                return w;
            };
            let dw = chol.solve(&(-&grad));
            let dr = -(a * &dw);
            let dt = DVector::from_fn(m, |i, _| -(gt[i] + htr[i] * dr[i]) / htt[i]);
            let full_gw = -(&at * &gr) + &w * (2.0 / s);
            let decrement = -(full_gw.dot(&dw) + gt.dot(&dt));
            if decrement < 1e-10 {
                break;
            }
            let f0 = phi(tau, &w, &t);
            let mut step = 1.0;
            loop {
                let (wn, tn) = (&w + &dw * step, &t + &dt * step);
                if phi(tau, &wn, &tn) <= f0 - 0.25 * step * decrement {
                    w = wn;
                    t = tn;
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    return w;
                }
            }
        }
        if constraints / (tau * m as f64) < BARRIER_GAP {
            return w;
        }
        tau *= 20.0;
    }
}

/// `max_h min_h' (1/m) sum |h(x) - h'(x)|` with `h` over probe directions of
/// the unit ball of `g1` and `h'` over the unit ball of `g2`. Values on the
/// sample are `h = K1^{1/2} w` with `|w| = 1`; the probes are `alpha`
/// directions, `w = K1^{1/2} alpha / |K1^{1/2} alpha|`, and the best probe is
/// refined by a pattern search on `w`.
fn directed_d1(g1: &GramMatrix, g2: &GramMatrix, probes: usize) -> f64 {
    let s1 = psd_sqrt(g1);
    let a2 = psd_sqrt(g2);
    let m = s1.nrows();
    let eval = |w: &DVector<f64>| -> Option<f64> {
        let n = w.norm();
        if n <= 1e-150 {
            return None;
        }
        Some(l1_distance_to_ellipsoid(&a2, &(&s1 * w / n)))
    };
    let starts: Vec<DVector<f64>> = probe_directions(m, probes)
        .iter()
        .map(|alpha| &s1 * alpha)
        .collect();
    let scored: Vec<(f64, usize)> = starts
        .par_iter()
        .enumerate()
        .filter_map(|(i, w)| eval(w).map(|v| (v, i)))
        .collect();
    let Some(&(mut best, idx)) = scored
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
    else {
        return 0.0;
    };
    let mut w = starts[idx].normalize();
    let mut step = 0.25;
    for _ in 0..12 {
        let mut moved = true;
        let mut sweeps = 0;
        while moved && sweeps < 3 {
            sweeps += 1;
            moved = false;
            for j in 0..m {
                for sign in [1.0, -1.0] {
                    let mut cand = w.clone();
                    cand[j] += sign * step;
                    if let Some(v) = eval(&cand) {
                        if v > best {
                            best = v;
                            w = cand.normalize();
                            moved = true;
                        }
                    }
                }
            }
        }
        step *= 0.5;
    }
    best
}

fn d1_from_grams(g1: &GramMatrix, g2: &GramMatrix, probes: usize) -> f64 {
    directed_d1(g1, g2, probes).max(directed_d1(g2, g1, probes))
}

/// Approximate empirical distance `D^x_1(K1, K2)`, symmetrized.
pub fn kernel_distance_d1(k1: &Kernel, k2: &Kernel, sample: &[Point], probe_budget: usize) -> Result<f64> {
    if probe_budget == 0 {
        return Err(Error::input("probe budget must be >= 1"));
    }
    check_sample(sample)?;
    let g1 = gram(k1, sample)?;
    let g2 = gram(k2, sample)?;
    Ok(d1_from_grams(&g1, &g2, probe_budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rows(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn one_pair_two_values() {
        let o = is_shattered_values(&rows(&[&[0.0], &[1.0]]), None, &ShatterBudget::default()).unwrap();
        assert!(o.shattered);
        let w = o.witness.unwrap();
        assert_eq!(w.thresholds, vec![0.5]);
        assert_eq!(w.realizers, vec![0, 1]);
    }

    #[test]
    fn diagonal_rows_do_not_shatter_two_pairs() {
        let v = rows(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!(!is_shattered_values(&v, None, &ShatterBudget::default()).unwrap().shattered);
        let v = rows(&[&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]]);
        let o = is_shattered_values(&v, None, &ShatterBudget::default()).unwrap();
        assert!(o.shattered);
        assert_eq!(o.witness.unwrap().thresholds, vec![0.5, 0.5]);
    }

    #[test]
    fn given_thresholds_are_checked_directly() {
        let v = rows(&[&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]]);
        let b = ShatterBudget::default();
        assert!(is_shattered_values(&v, Some(&[0.5, 0.5]), &b).unwrap().shattered);
        assert!(!is_shattered_values(&v, Some(&[0.5, 1.5]), &b).unwrap().shattered);
        assert!(is_shattered_values(&v, Some(&[0.5]), &b).is_err());
    }

    #[test]
    fn node_budget_is_an_error() {
        // 16 members realizing all patterns on 4 pairs, but only after many tries
        let v: Vec<Vec<f64>> = (0..16u32)
            .map(|c| (0..4).map(|i| f64::from((c >> i) & 1) + 0.01 * f64::from(c)).collect())
            .collect();
        let tight = ShatterBudget { max_nodes: 2 };
        assert!(matches!(is_shattered_values(&v, None, &tight), Err(Error::Budget(_))));
        assert!(is_shattered_values(&v, None, &ShatterBudget::default()).unwrap().shattered);
    }

    #[test]
    fn single_kernel_has_pseudodimension_zero() {
        let pool: Vec<Point> = (0..5).map(|i| vec![i as f64 * 0.3, 1.0 - i as f64 * 0.2]).collect();
        let r = pseudodim_lower_bound(&[Kernel::rbf(1.0)], &pool, &PdBudget::default()).unwrap();
        assert_eq!(r.n, 0);
    }

    #[test]
    fn linear_combination_of_two_orthogonal_kernels() {
        let dict = [Kernel::linear_on(1.0, vec![0]), Kernel::linear_on(1.0, vec![1])];
        let r = 10;
        let members: Vec<Kernel> = (0..=r)
            .flat_map(|a| (0..=(r - a)).map(move |b| (a, b)))
            .filter(|&(a, b)| a + b > 0)
            .map(|(a, b)| Kernel::Combination {
                weights: vec![a as f64 / r as f64, b as f64 / r as f64],
                kernels: dict.to_vec(),
            })
            .collect();
        let pool: Vec<Point> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8], vec![0.8, -0.6], vec![0.3, 0.3]];
        let budget = PdBudget {
            trials: 10_000,
            ..Default::default()
        };
        let found = pseudodim_lower_bound(&members, &pool, &budget).unwrap();
        assert!(found.n >= 1 && found.n <= 2, "{found:?}");
    }

    #[test]
    fn cover_of_identical_and_far_candidates() {
        let same = vec![vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]];
        let d = distance_matrix(&CoverRequest {
            metric: CoverMetric::DxInfinity,
            epsilon: 0.1,
            candidates: CoverCandidates::Functions(same),
            sample: vec![],
            probe_budget: 0,
        })
        .unwrap();
        assert_eq!(greedy_cover_matrix(&d, 0.1).unwrap().size(), 1);
        let far = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let req = CoverRequest {
            metric: CoverMetric::DxInfinity,
            epsilon: 0.5,
            candidates: CoverCandidates::Functions(far),
            sample: vec![],
            probe_budget: 0,
        };
        assert_eq!(greedy_cover(&req).unwrap().indices, vec![0, 1]);
    }

    #[test]
    fn metric_candidate_mismatch_is_rejected() {
        let req = CoverRequest {
            metric: CoverMetric::DxInfinityKernel,
            epsilon: 0.5,
            candidates: CoverCandidates::Functions(vec![vec![0.0]]),
            sample: vec![],
            probe_budget: 0,
        };
        assert!(matches!(greedy_cover(&req), Err(Error::Input(_))));
    }

    #[test]
    fn kernel_sup_metric_is_max_over_task_blocks() {
        let sample = vec![vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![3.0]]];
        let req = CoverRequest {
            metric: CoverMetric::DxInfinityKernel,
            epsilon: 1.0,
            candidates: CoverCandidates::Kernels(vec![Kernel::rbf(1.0), Kernel::rbf(2.0)]),
            sample,
            probe_budget: 0,
        };
        let d = distance_matrix(&req).unwrap();
        let expect = [1.0f64, 9.0]
            .iter()
            .map(|s| ((-s / 8.0f64).exp() - (-s / 2.0f64).exp()).abs())
            .fold(0.0, f64::max);
        assert!((d[0][1] - expect).abs() < 1e-15);
    }

    #[test]
    fn d1_of_identical_kernels_is_zero_and_symmetric() {
        let sample: Vec<Point> = (0..8).map(|i| vec![(i as f64 * 0.37).sin(), i as f64 * 0.2]).collect();
        let k = Kernel::rbf(0.8);
        assert!(kernel_distance_d1(&k, &k, &sample, 32).unwrap() < 1e-10);
        let k2 = Kernel::linear(2.0);
        let ab = kernel_distance_d1(&k, &k2, &sample, 32).unwrap();
        let ba = kernel_distance_d1(&k2, &k, &sample, 32).unwrap();
        assert_eq!(ab, ba);
        assert!(ab > 0.0);
        assert!(kernel_distance_d1(&k, &k2, &sample, 0).is_err());
    }

    fn halton_sample(count: usize) -> Vec<Point> {
        (1..=count as u64)
            .map(|i| vec![2.0 * radical_inverse(i, 2), 2.0 * radical_inverse(i, 3)])
            .collect()
    }

    /// Exact inner minimum for three points: the optimum has some zero
    /// residuals `Z` and fixed signs elsewhere, and on each such piece the
    /// problem is a linear objective over a ball cut by an affine subspace.
    fn enumerated_inner(a: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for code in 0..27 {
            let pat: Vec<f64> = (0..3).map(|i| ((code / 3usize.pow(i)) % 3) as f64 - 1.0).collect();
            let zero: Vec<usize> = (0..3).filter(|&i| pat[i] == 0.0).collect();
            let c = -(a.transpose() * DVector::from_vec(pat.clone()));
            let (w0, null) = if zero.is_empty() {
                (DVector::zeros(3), DMatrix::identity(3, 3))
            } else {
                let b = DMatrix::from_fn(zero.len(), 3, |i, j| a[(zero[i], j)]);
                let rhs = DVector::from_fn(zero.len(), |i, _| u[zero[i]]);
                let w0 = b.clone().pseudo_inverse(1e-12).unwrap() * rhs;
                // null space from the full SVD of B^T B
                let e = (b.transpose() * &b).symmetric_eigen();
                let tol = 1e-12 * e.eigenvalues.amax();
                let cols: Vec<DVector<f64>> = (0..3)
                    .filter(|&k| e.eigenvalues[k] <= tol)
                    .map(|k| e.eigenvectors.column(k).into_owned())
                    .collect();
                let null = if cols.is_empty() {
                    DMatrix::zeros(3, 0)
                } else {
                    DMatrix::from_columns(&cols)
                };
                (w0, null)
            };
            let rho2 = 1.0 - w0.norm_squared();
            if rho2 < 0.0 {
                continue;
            }
            let mut w = w0.clone();
            if null.ncols() > 0 {
                let g = null.transpose() * &c;
                if g.norm() > 0.0 {
                    w -= &null * (&g * (rho2.sqrt() / g.norm()));
                }
            }
            best = best.min((u - a * w).abs().sum() / 3.0);
        }
        best
    }

    fn grid_d1(g1: &GramMatrix, g2: &GramMatrix) -> f64 {
        let (s1, s2) = (psd_sqrt(g1), psd_sqrt(g2));
        let dir = |th: f64, ph: f64| DVector::from_vec(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
        let obj = |th: f64, ph: f64| {
            let w = dir(th, ph);
            enumerated_inner(&s2, &(&s1 * &w)).max(enumerated_inner(&s1, &(&s2 * &w)))
        };
        let (nt, np) = (40, 80);
        let (mut bt, mut bp, mut best) = (0.0, 0.0, f64::NEG_INFINITY);
        for i in 0..=nt {
            for j in 0..np {
                let (th, ph) = (PI * i as f64 / nt as f64, 2.0 * PI * j as f64 / np as f64);
                let v = obj(th, ph);
                if v > best {
                    (bt, bp, best) = (th, ph, v);
                }
            }
        }
        let mut h = PI / nt as f64;
        for _ in 0..30 {
            let (ct, cp) = (bt, bp);
            for i in -2..=2 {
                for j in -2..=2 {
                    let (th, ph) = (ct + i as f64 * h / 2.0, cp + j as f64 * h / 2.0);
                    let v = obj(th, ph);
                    if v > best {
                        (bt, bp, best) = (th, ph, v);
                    }
                }
            }
            h *= 0.5;
        }
        best
    }

    #[test]
    fn d1_of_nearby_bandwidths_matches_grid_oracle() {
        let sample = halton_sample(16);
        let (k1, k2) = (Kernel::rbf(1.0), Kernel::rbf(1.0001));
        let full = kernel_distance_d1(&k1, &k2, &sample, 64).unwrap();
        assert!(full < 1e-3, "{full}");
        let tiny = &sample[..3];
        let ours = kernel_distance_d1(&k1, &k2, tiny, 64).unwrap();
        let oracle = grid_d1(&gram(&k1, tiny).unwrap(), &gram(&k2, tiny).unwrap());
        assert!((ours - oracle).abs() <= 5e-3 * oracle, "ours {ours} oracle {oracle}");
    }

    #[test]
    fn d1_triangle_inequality_on_kernel_triples() {
        let sample = halton_sample(6);
        let ks = [Kernel::rbf(0.5), Kernel::rbf(1.0), Kernel::rbf(2.0), Kernel::linear(8.0)];
        let d: Vec<Vec<f64>> = ks
            .iter()
            .map(|a| ks.iter().map(|b| kernel_distance_d1(a, b, &sample, 64).unwrap()).collect())
            .collect();
        for a in 0..4 {
            assert!(d[a][a] < 1e-10, "{a} {}", d[a][a]);
            for b in 0..4 {
                assert_eq!(d[a][b], d[b][a]);
                for c in 0..4 {
                    assert!(d[a][c] <= d[a][b] + d[b][c] + 1e-6);
                }
            }
        }
    }

    fn planted_clusters(seed: u64) -> Vec<Vec<f64>> {
        use rand::Rng as _;
        let mut rng = rng_stream(seed, 0);
        let centers: Vec<Vec<f64>> = (0..4)
            .map(|c| (0..8).map(|j| if j == 2 * c { 2.0 } else { 0.0 }).collect())
            .collect();
        (0..16)
            .map(|i| centers[i % 4].iter().map(|v| v + rng.random_range(-0.05..0.05)).collect())
            .collect()
    }

    fn brute_force_min_cover(dist: &[Vec<f64>], eps: f64, max_size: usize) -> Option<usize> {
        let n = dist.len();
        (1..=max_size).find(|&size| {
            let mut found = false;
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                if check_cover(dist, &idx).unwrap() < eps {
                    found = true;
                    break;
                }
                // next combination
                let mut i = size;
                while i > 0 && idx[i - 1] == n - size + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                idx[i - 1] += 1;
                for j in i..size {
                    idx[j] = idx[j - 1] + 1;
                }
            }
            found
        })
    }

    #[test]
    fn planted_four_clusters_need_four_centers() {
        for seed in 0..5 {
            let req = CoverRequest {
                metric: CoverMetric::DxInfinity,
                epsilon: 0.5,
                candidates: CoverCandidates::Functions(planted_clusters(seed)),
                sample: vec![],
                probe_budget: 0,
            };
            let d = distance_matrix(&req).unwrap();
            let cover = greedy_cover(&req).unwrap();
            assert_eq!(cover.size(), 4);
            assert_eq!(brute_force_min_cover(&d, 0.5, 4), Some(4));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn greedy_cover_is_valid(
            values in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 5), 1..30),
            eps in 0.01f64..1.0,
        ) {
            let req = CoverRequest {
                metric: CoverMetric::DxInfinity,
                epsilon: eps,
                candidates: CoverCandidates::Functions(values),
                sample: vec![],
                probe_budget: 0,
            };
            let d = distance_matrix(&req).unwrap();
            let cover = greedy_cover(&req).unwrap();
            proptest::prop_assert!(check_cover(&d, &cover.indices).unwrap() < eps);
        }

        #[test]
        fn shattered_sets_have_enough_patterns(
            values in proptest::collection::vec(proptest::collection::vec(0u8..4, 3), 1..20),
        ) {
            let v: Vec<Vec<f64>> = values.iter().map(|r| r.iter().map(|&x| f64::from(x)).collect()).collect();
            let o = is_shattered_values(&v, None, &ShatterBudget::default()).unwrap();
            let mut rows = values.clone();
            rows.sort();
            rows.dedup();
            if o.shattered {
                proptest::prop_assert!(rows.len() >= 8);
                let w = o.witness.unwrap();
                proptest::prop_assert!(w.realizers.iter().all(|&r| r < v.len()));
            }
        }
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let eps = [0.5, 0.25, 0.125];
        let sizes = [4, 16, 64];
        assert!((loglog_slope(&eps, &sizes) - 2.0).abs() < 1e-12);
    }
}
