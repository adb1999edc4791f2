//! Subcommand implementations. Each returns its artifacts in memory so runs
//! can be hashed and replayed.

use std::fs::File;

use mtlk::bounds::{invert_epsilon, lifelong_delta, multitask_epsilon, BoundInputs};
use mtlk::capacity::{
    check_cover, distance_matrix, greedy_cover_matrix, loglog_slope, pseudodim_lower_bound, CoverCandidates,
    CoverRequest, PdBudget,
};
use mtlk::data::{derive_seed, rng_stream, MultiTaskSample};
use mtlk::envsim::{
    overhead_curve, planted_pair_environment, run_sandwich_trial, sample_lifelong, spearman, InputLaw,
    OverheadSettings, TaskEnvironment, TrialSettings,
};
use mtlk::erm::{candidates, erm_fit, Candidate};
use mtlk::family::KernelFamily;
use mtlk::kernel::Point;
use mtlk::{Error, Result};
use serde_json::json;

use crate::config::{
    BoundCommandMode, BoundParams, CoverParams, ExperimentConfig, ExperimentKind, ExperimentParams, LearnParams,
    ShatterParams,
};
use crate::svg::{Plot, Series};

/// Files produced by a run plus the text echoed to stdout.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
}

impl Artifacts {
    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn pretty(v: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| Error::Numeric(format!("serializing output: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Artifacts> {
    match cfg.command_name()? {
        "learn" => learn(cfg.learn.as_ref().expect("selected"), cfg.seed),
        "bound" => bound(cfg.bound.as_ref().expect("selected")),
        "shatter" => shatter(cfg.shatter.as_ref().expect("selected"), cfg.seed),
        "cover" => cover(cfg.cover.as_ref().expect("selected"), cfg.seed),
        _ => experiment(cfg.experiment.as_ref().expect("selected"), cfg.seed),
    }
}

fn learn(p: &LearnParams, _seed: u64) -> Result<Artifacts> {
    let family = KernelFamily::load(&p.family)?;
    let sample = MultiTaskSample::read_csv(File::open(&p.data)?)?;
    let sol = erm_fit(&family, &sample, &p.margin, &p.budget)?;
    let per_task: Vec<String> = sol.per_task_errors.iter().map(|e| num(*e)).collect();
    let table = csv(
        &["n", "m", "candidate_index", "gamma", "avg_empirical_margin_error", "candidates_evaluated", "per_task_errors"],
        &[vec![
            sample.n().to_string(),
            sample.m().to_string(),
            sol.candidate_index.to_string(),
            num(sol.gamma),
            num(sol.avg_empirical_margin_error),
            sol.candidates_evaluated.to_string(),
            per_task.join(" "),
        ]],
    );
    let mut a = Artifacts::default();
    a.add("solution.json", pretty(&sol)?);
    a.add("learn.csv", table.clone());
    a.stdout = table;
    Ok(a)
}

fn bound(p: &BoundParams) -> Result<Artifacts> {
    let inputs = BoundInputs {
        n: p.n,
        m: p.m,
        d_phi: p.d_phi,
        b: p.b,
        gamma: p.gamma,
        delta: p.delta,
        constants: p.constants,
    };
    let table = match p.mode {
        BoundCommandMode::Multitask => {
            let b = multitask_epsilon(&inputs)?;
            csv(
                &["mode", "epsilon", "valid", "degraded", "confidence", "constant", "complexity", "margin"],
                &[vec![
                    "multitask".into(),
                    num(b.epsilon),
                    b.valid.to_string(),
                    b.degraded.to_string(),
                    num(b.terms.confidence),
                    num(b.terms.constant),
                    num(b.terms.complexity),
                    num(b.terms.margin),
                ]],
            )
        }
        BoundCommandMode::Lifelong => {
            let eps = p
                .epsilon
                .ok_or_else(|| Error::Input("lifelong mode needs an epsilon".into()))?;
            let b = lifelong_delta(&inputs, eps)?;
            csv(
                &["mode", "epsilon", "delta", "valid", "overflow", "degraded", "log_first", "log_second", "log_total"],
                &[vec![
                    "lifelong".into(),
                    num(eps),
                    num(b.delta),
                    b.valid.to_string(),
                    b.overflow.to_string(),
                    b.degraded.to_string(),
                    num(b.log_first),
                    num(b.log_second),
                    num(b.log_total),
                ]],
            )
        }
        BoundCommandMode::Invert => {
            let inv = invert_epsilon(&inputs)?;
            csv(
                &["mode", "epsilon", "delta", "valid", "within_tolerance", "iterations", "log_first", "log_second"],
                &[vec![
                    "invert".into(),
                    num(inv.epsilon),
                    num(inv.bound.delta),
                    inv.bound.valid.to_string(),
                    inv.within_tolerance.to_string(),
                    inv.iterations.to_string(),
                    num(inv.bound.log_first),
                    num(inv.bound.log_second),
                ]],
            )
        }
    };
    let mut a = Artifacts::default();
    a.add("bound.csv", table.clone());
    a.stdout = table;
    Ok(a)
}

fn family_members(family: &KernelFamily, grid: &mtlk::erm::SearchBudget, dim: usize) -> Result<Vec<Candidate>> {
    let cands = candidates(family, grid)?;
    for c in &cands {
        c.kernel.check_dim(dim)?;
    }
    Ok(cands)
}

fn uniform_points(dim: usize, count: usize, seed: u64, stream: u64) -> Vec<Point> {
    let law = InputLaw::uniform_cube(dim);
    let mut rng = rng_stream(seed, stream);
    (0..count).map(|_| law.draw(&mut rng)).collect()
}

fn shatter(p: &ShatterParams, seed: u64) -> Result<Artifacts> {
    let family = KernelFamily::load(&p.family)?;
    let cands = family_members(&family, &p.grid, p.dim)?;
    let members: Vec<_> = cands.iter().map(|c| c.kernel.clone()).collect();
    let pool = uniform_points(p.dim, p.pool_size, seed, 0);
    let budget = PdBudget {
        max_n: p.budget.max_n,
        trials: p.budget.trials,
        max_nodes: p.budget.max_nodes,
        seed: derive_seed(seed, 1),
    };
    let lb = pseudodim_lower_bound(&members, &pool, &budget)?;
    let upper = family.pd_upper_bound();
    let table = csv(
        &["members", "pool_size", "n_found", "pd_upper_bound", "budget_exhausted", "trials_run"],
        &[vec![
            members.len().to_string(),
            p.pool_size.to_string(),
            lb.n.to_string(),
            num(upper),
            lb.budget_exhausted.to_string(),
            lb.trials_run.to_string(),
        ]],
    );
    let pairs: Vec<(&Point, &Point)> = lb.pairs.iter().map(|&(i, j)| (&pool[i], &pool[j])).collect();
    let witness = json!({
        "n_found": lb.n,
        "pairs": pairs,
        "thresholds": lb.witness.as_ref().map(|w| &w.thresholds),
        "realizers": lb.witness.as_ref().map(|w| w.realizers.iter().map(|&r| &cands[r].params).collect::<Vec<_>>()),
    });
    let mut a = Artifacts::default();
    a.add("shatter.csv", table.clone());
    a.add("witness.json", pretty(&witness)?);
    a.stdout = table;
    Ok(a)
}

fn cover(p: &CoverParams, seed: u64) -> Result<Artifacts> {
    if p.epsilons.is_empty() || p.epsilons.iter().any(|e| e.is_nan() || *e <= 0.0) {
        return Err(Error::Input("cover needs at least one positive epsilon".into()));
    }
    let family = KernelFamily::load(&p.family)?;
    let cands = family_members(&family, &p.grid, p.dim)?;
    let sample: Vec<Vec<Point>> = (0..p.tasks)
        .map(|t| uniform_points(p.dim, p.sample_size, seed, t as u64))
        .collect();
    let req = CoverRequest {
        metric: p.metric,
        epsilon: p.epsilons[0],
        candidates: CoverCandidates::Kernels(cands.iter().map(|c| c.kernel.clone()).collect()),
        sample,
        probe_budget: p.probe_budget,
    };
    let dist = distance_matrix(&req)?;
    let mut rows = Vec::new();
    let mut covers = Vec::new();
    let mut sizes = Vec::new();
    for &eps in &p.epsilons {
        let c = greedy_cover_matrix(&dist, eps)?;
        let radius = check_cover(&dist, &c.indices)?;
        rows.push(vec![num(eps), c.size().to_string(), num(radius), cands.len().to_string()]);
        sizes.push(c.size());
        covers.push(json!({ "epsilon": eps, "radius": radius, "indices": c.indices }));
    }
    let slope = if p.epsilons.len() >= 2 {
        Some(loglog_slope(&p.epsilons, &sizes))
    } else {
        None
    };
    let table = csv(&["epsilon", "cover_size", "radius", "candidates"], &rows);
    let plot = Plot {
        title: format!("Greedy cover size ({:?})", p.metric),
        x_label: "epsilon".into(),
        y_label: "log cover size".into(),
        log_x: true,
        series: vec![Series {
            name: "greedy".into(),
            points: p.epsilons.iter().zip(&sizes).map(|(e, s)| (*e, (*s as f64).ln())).collect(),
        }],
    };
    let summary = json!({
        "candidates": cands.iter().map(|c| &c.params).collect::<Vec<_>>(),
        "covers": covers,
        "loglog_slope": slope,
        "pd_upper_bound": family.pd_upper_bound(),
    });
    let mut a = Artifacts::default();
    a.add("cover.csv", table.clone());
    a.add("cover.json", pretty(&summary)?);
    a.add("cover.svg", plot.render());
    a.stdout = table;
    Ok(a)
}

fn load_env_and_family(p: &ExperimentParams) -> Result<(TaskEnvironment, KernelFamily)> {
    let env = match &p.env {
        Some(path) => TaskEnvironment::load(path)?,
        None => planted_pair_environment(),
    };
    let family = match &p.family {
        Some(path) => KernelFamily::load(path)?,
        None => KernelFamily::SparseCombo {
            dictionary: env.dictionary.clone(),
            k: 1,
        },
    };
    Ok((env, family))
}

fn experiment(p: &ExperimentParams, seed: u64) -> Result<Artifacts> {
    if p.n_grid.is_empty() || p.trials == 0 {
        return Err(Error::Input("experiment needs a non-empty n_grid and trials >= 1".into()));
    }
    let (env, family) = load_env_and_family(p)?;
    match p.kind {
        ExperimentKind::Overhead => overhead(p, &env, &family, seed),
        ExperimentKind::Sandwich => sandwich(p, &env, &family, seed),
    }
}

fn overhead(p: &ExperimentParams, env: &TaskEnvironment, family: &KernelFamily, seed: u64) -> Result<Artifacts> {
    let settings = OverheadSettings {
        mc_samples: p.mc_samples,
        margin: p.margin.clone(),
        budget: p.budget.clone(),
    };
    let (rows, points) = overhead_curve(env, family, p.m, &p.n_grid, p.trials, &settings, seed)?;
    let row_table = csv(
        &["n", "trial", "chosen_index", "chose_true_kernel", "erm_train_error", "erm_error", "oracle_error", "gap", "excess"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.trial.to_string(),
                    r.chosen_index.to_string(),
                    r.chose_true_kernel.to_string(),
                    num(r.erm_train_error),
                    num(r.erm_error),
                    num(r.oracle_error),
                    num(r.gap),
                    num(r.excess),
                ]
            })
            .collect::<Vec<_>>(),
    );
    let mut curve_rows = Vec::new();
    for pt in &points {
        let terms = multitask_epsilon(&BoundInputs {
            n: pt.n as u64,
            m: p.m as u64,
            d_phi: family.pd_upper_bound(),
            b: family.bound(),
            gamma: p.margin.gamma,
            delta: p.delta,
            constants: p.constants,
        })?
        .terms;
        curve_rows.push(vec![
            pt.n.to_string(),
            num(pt.mean_gap),
            num(pt.mean_excess),
            num(pt.mean_oracle_error),
            num(pt.mean_erm_error),
            num(pt.true_kernel_rate),
            num(terms.complexity),
        ]);
    }
    let curve_table = csv(
        &["n", "mean_gap", "mean_excess", "mean_oracle_error", "mean_erm_error", "true_kernel_rate", "complexity_term"],
        &curve_rows,
    );
    let ns: Vec<f64> = points.iter().map(|q| q.n as f64).collect();
    let excess: Vec<f64> = points.iter().map(|q| q.mean_excess).collect();
    let series = |name: &str, f: &dyn Fn(&mtlk::envsim::OverheadPoint) -> f64| Series {
        name: name.into(),
        points: points.iter().map(|q| (q.n as f64, f(q))).collect(),
    };
    let plot = Plot {
        title: format!("Kernel-selection overhead (m = {}, {} trials)", p.m, p.trials),
        x_label: "number of tasks n".into(),
        y_label: "mean error".into(),
        log_x: true,
        series: vec![
            series("excess vs oracle", &|q| q.mean_excess),
            series("estimation gap", &|q| q.mean_gap),
            series("oracle error", &|q| q.mean_oracle_error),
        ],
    };
    let summary = json!({
        "spearman_excess_vs_n": if ns.len() >= 2 { Some(spearman(&ns, &excess)) } else { None },
        "points": points,
    });
    let mut a = Artifacts::default();
    a.add("overhead_rows.csv", row_table);
    a.add("overhead_curve.csv", curve_table.clone());
    a.add("overhead.svg", plot.render());
    a.add("summary.json", pretty(&summary)?);
    a.stdout = curve_table;
    Ok(a)
}

fn sandwich(p: &ExperimentParams, env: &TaskEnvironment, family: &KernelFamily, seed: u64) -> Result<Artifacts> {
    let n = p.n_grid[0];
    let settings = TrialSettings {
        mode: p.mode,
        mc_samples: p.mc_samples,
        margin: p.margin.clone(),
        budget: p.budget.clone(),
        delta: p.delta,
        constants: p.constants,
        ..Default::default()
    };
    let mut rows = Vec::new();
    let (mut valid, mut failures) = (0usize, 0usize);
    for t in 0..p.trials {
        let trial_seed = derive_seed(seed, t as u64);
        let dists = sample_lifelong(env, n, derive_seed(trial_seed, 10))?;
        let r = run_sandwich_trial(&dists, Some(env), family, p.m, &settings, trial_seed)?;
        if r.valid {
            valid += 1;
            failures += usize::from(!r.sandwich_ok);
        }
        rows.push(vec![
            t.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            num(r.gamma),
            r.candidate_index.to_string(),
            num(r.er_hat),
            num(r.er),
            num(r.er_se),
            num(r.er_2gamma),
            num(r.er_2gamma_se),
            num(r.epsilon),
            r.valid.to_string(),
            r.sandwich_ok.to_string(),
        ]);
    }
    let table = csv(
        &[
            "trial", "n", "m", "gamma", "candidate_index", "er_hat", "er", "er_se", "er_2gamma", "er_2gamma_se",
            "epsilon", "valid", "sandwich_ok",
        ],
        &rows,
    );
    let summary = json!({ "trials": p.trials, "valid_trials": valid, "failures_among_valid": failures });
    let mut a = Artifacts::default();
    a.add("sandwich.csv", table.clone());
    a.add("summary.json", pretty(&summary)?);
    a.stdout = table;
    Ok(a)
}
