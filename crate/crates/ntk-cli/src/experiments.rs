//! The eight experiments behind the `ntk` binary.
//!
//! Every experiment follows the same discipline: seeds for each unit of
//! work are derived from the config seed through tagged hashing, trials
//! may execute in parallel but results are assembled in index order, and
//! the CSV carries only reproducible quantities (runtimes go to the
//! printed summaries, never into the file).

use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

use nalgebra::DVector;
use ntk_core::bounds::{
    certified_lower_bound_empirical, certified_lower_bound_limiting, lipschitz_empirical,
    lipschitz_naive_bound, scaling_expression, trace_upper_bound_limiting, upper_bound_empirical,
    FormulaId,
};
use ntk_core::data::{sample, DataSpec, Distribution};
use ntk_core::empirical::{empirical_ntk, jacobian, layerwise_decomposition, linearized_fit, normalized_ntk};
use ntk_core::hermite::hermite_coeff_relu;
use ntk_core::kernel::{limiting_ntk, limiting_ntk_monte_carlo};
use ntk_core::linalg::{max_abs_entry_diff, rel_frobenius_distance, smallest_eigenvalue};
use ntk_core::net::{init_weights, Architecture};
use ntk_core::rng::{derive_seed, stream};

use crate::config::{parse_distribution, AppError, AppResult, Experiment, InitScheme, Plan};
use crate::output::{median, Cell, PlotSeries, Table};

/// Everything a finished experiment hands back to `main`.
pub struct RunOutput {
    pub table: Table,
    pub plot: PlotSeries,
    pub summaries: Vec<String>,
}

pub fn run(plan: &Plan) -> AppResult<RunOutput> {
    match plan.experiment {
        Experiment::Hermite => hermite(plan),
        Experiment::Limiting => limiting(plan),
        Experiment::Empirical => empirical(plan),
        Experiment::Bounds => bounds(plan),
        Experiment::Convergence => convergence(plan),
        Experiment::Sweep => sweep(plan),
        Experiment::Lipschitz => lipschitz(plan),
        Experiment::Memorize => memorize(plan),
    }
}

/// Run `trials` closures (possibly in parallel) and collect their results
/// in trial order.
fn run_trials<T: Send>(
    trials: usize,
    f: impl Fn(u64) -> AppResult<T> + Sync,
) -> AppResult<Vec<T>> {
    (0..trials as u64).into_par_iter().map(&f).collect()
}

fn widths_label(widths: &[usize]) -> String {
    widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("x")
}

/// Architecture from a widths/init request; failures here are config
/// errors, not numerical ones.
fn build_arch(widths: &[usize], init: &InitScheme) -> AppResult<Architecture> {
    let variances = init.variances(widths)?;
    Architecture::new(widths.to_vec(), variances).map_err(|e| AppError::config(e.to_string()))
}

/// Per-trial data seed: a fixed seed in the config pins the data across
/// trials, otherwise each trial draws its own.
fn data_seed(fixed: Option<u64>, trial_seed: u64) -> u64 {
    fixed.unwrap_or_else(|| derive_seed(trial_seed, "data", 0))
}

fn hermite(plan: &Plan) -> AppResult<RunOutput> {
    let start = Instant::now();
    let mut table = Table::new(vec!["experiment", "seed", "r", "mu_r", "partial_sum_sq"]);
    let mut partial = 0.0;
    let mut points = Vec::new();
    for r in 0..=plan.max_order {
        let mu = hermite_coeff_relu(r);
        partial += mu * mu;
        table.push(vec![
            Cell::Str("hermite".into()),
            Cell::Int(plan.seed),
            Cell::Int(r as u64),
            Cell::Float(mu),
            Cell::Float(partial),
        ]);
        points.push((r as f64, partial));
    }
    let summaries = vec![format!(
        "[hermite] max_order={} partial_sum_sq={:.6} runtime={:.2}s",
        plan.max_order,
        partial,
        start.elapsed().as_secs_f64()
    )];
    Ok(RunOutput {
        table,
        plot: PlotSeries { x_label: "r", y_label: "partial_sum_sq", points },
        summaries,
    })
}

struct LimitingTrial {
    seed: u64,
    lambda_min: f64,
    lower: f64,
    upper: f64,
    schur_sum: f64,
    hermite_route: f64,
    mc: Option<(f64, f64)>,
}

fn limiting(plan: &Plan) -> AppResult<RunOutput> {
    let start = Instant::now();
    let data = plan.require_data()?;
    let dist = parse_distribution(&data.distribution)?;
    let depth = match (plan.depth, &plan.arch) {
        (Some(depth), _) => depth,
        (None, Some(a)) => a.widths.len() - 1,
        (None, None) => {
            return Err(AppError::config("experiment 'limiting' needs a depth (or an arch)"))
        }
    };
    let point_seed = derive_seed(plan.seed, "point", 0);
    let r = plan.r;
    let results = run_trials(plan.trials, |t| -> AppResult<LimitingTrial> {
        let trial_seed = derive_seed(point_seed, "trial", t);
        let spec = DataSpec::new(dist, data.n_samples, data.dimension, data_seed(data.seed, trial_seed))
            .map_err(|e| AppError::config(e.to_string()))?;
        let x = sample(&spec)?;
        let stack = limiting_ntk(&x, depth)?;
        let lambda_min = smallest_eigenvalue(stack.final_ntk())?;
        let lower = certified_lower_bound_limiting(&x, depth, r)?;
        let upper = trace_upper_bound_limiting(&x, depth)?;
        let mc = match plan.mc_samples {
            None => None,
            Some(samples) => {
                let est = limiting_ntk_monte_carlo(&x, depth, samples, derive_seed(trial_seed, "mc", 0))?;
                let mut max_dev = 0.0_f64;
                let mut max_se = 0.0_f64;
                for l in 2..=depth {
                    max_dev = max_dev
                        .max(max_abs_entry_diff(&est.conjugate[l - 1], stack.conjugate_at(l)))
                        .max(max_abs_entry_diff(&est.derivative[l - 2], stack.derivative_at(l)));
                    max_se = max_se
                        .max(est.conjugate_se[l - 1].max())
                        .max(est.derivative_se[l - 2].max());
                }
                Some((max_dev, max_se))
            }
        };
        Ok(LimitingTrial {
            seed: trial_seed,
            lambda_min,
            lower: lower.value,
            upper: upper.value,
            schur_sum: lower.ingredient("schur_sum").unwrap_or(f64::NAN),
            hermite_route: lower.ingredient("hermite_route").unwrap_or(f64::NAN),
            mc,
        })
    })?;

    let mut columns = vec![
        "experiment", "distribution", "n_samples", "dimension", "depth", "r", "trial", "seed",
        "lambda_min", "lower_bound", "upper_bound", "schur_sum", "hermite_route",
    ];
    if plan.mc_samples.is_some() {
        columns.extend(["mc_samples", "mc_max_abs_dev", "mc_max_se"]);
    }
    let mut table = Table::new(columns);
    let mut points = Vec::new();
    for (t, res) in results.iter().enumerate() {
        let mut row = vec![
            Cell::Str("limiting".into()),
            Cell::Str(dist.name().into()),
            Cell::Int(data.n_samples as u64),
            Cell::Int(data.dimension as u64),
            Cell::Int(depth as u64),
            Cell::Int(r as u64),
            Cell::Int(t as u64),
            Cell::Int(res.seed),
            Cell::Float(res.lambda_min),
            Cell::Float(res.lower),
            Cell::Float(res.upper),
            Cell::Float(res.schur_sum),
            Cell::Float(res.hermite_route),
        ];
        if let Some((dev, se)) = res.mc {
            row.push(Cell::Int(plan.mc_samples.unwrap_or(0) as u64));
            row.push(Cell::Float(dev));
            row.push(Cell::Float(se));
        }
        table.push(row);
        points.push((t as f64, res.lambda_min));
    }
    let lams: Vec<f64> = results.iter().map(|r| r.lambda_min).collect();
    let summaries = vec![format!(
        "[limiting] dist={} N={} d={} L={depth} r={r} trials={} median_lambda_min={:.6e} runtime={:.2}s",
        dist.name(),
        data.n_samples,
        data.dimension,
        plan.trials,
        median(&lams),
        start.elapsed().as_secs_f64()
    )];
    Ok(RunOutput {
        table,
        plot: PlotSeries { x_label: "trial", y_label: "lambda_min", points },
        summaries,
    })
}

struct EmpiricalTrial {
    seed: u64,
    lambda_min: f64,
    lower: f64,
    upper: f64,
    residual: f64,
}

fn empirical(plan: &Plan) -> AppResult<RunOutput> {
    let start = Instant::now();
    let data = plan.require_data()?;
    let dist = parse_distribution(&data.distribution)?;
    let arch_spec = plan.require_arch()?;
    let arch = build_arch(&arch_spec.widths, &arch_spec.init)?;
    let point_seed = derive_seed(plan.seed, "point", 0);
    let results = run_trials(plan.trials, |t| -> AppResult<EmpiricalTrial> {
        let trial_seed = derive_seed(point_seed, "trial", t);
        let spec = DataSpec::new(dist, data.n_samples, data.dimension, data_seed(data.seed, trial_seed))
            .map_err(|e| AppError::config(e.to_string()))?;
        let x = sample(&spec)?;
        let ws = init_weights(&arch, derive_seed(trial_seed, "weights", 0));
        let kbar = empirical_ntk(&jacobian(&ws, &x)?);
        let dec = layerwise_decomposition(&ws, &x)?;
        Ok(EmpiricalTrial {
            seed: trial_seed,
            lambda_min: smallest_eigenvalue(&kbar)?,
            lower: certified_lower_bound_empirical(&ws, &x)?.value,
            upper: upper_bound_empirical(&ws, &x)?.value,
            residual: rel_frobenius_distance(&dec.reconstruction, &kbar),
        })
    })?;

    let mut table = Table::new(vec![
        "experiment", "distribution", "n_samples", "dimension", "widths", "init", "trial",
        "seed", "lambda_min", "lower_bound", "upper_bound", "decomposition_residual",
    ]);
    let mut points = Vec::new();
    let label = widths_label(&arch_spec.widths);
    for (t, res) in results.iter().enumerate() {
        table.push(vec![
            Cell::Str("empirical".into()),
            Cell::Str(dist.name().into()),
            Cell::Int(data.n_samples as u64),
            Cell::Int(data.dimension as u64),
            Cell::Str(label.clone()),
            Cell::Str(arch_spec.init.label().into()),
            Cell::Int(t as u64),
            Cell::Int(res.seed),
            Cell::Float(res.lambda_min),
            Cell::Float(res.lower),
            Cell::Float(res.upper),
            Cell::Float(res.residual),
        ]);
        points.push((t as f64, res.lambda_min));
    }
    let lams: Vec<f64> = results.iter().map(|r| r.lambda_min).collect();
    let summaries = vec![format!(
        "[empirical] dist={} N={} widths={label} init={} trials={} median_lambda_min={:.6e} runtime={:.2}s",
        dist.name(),
        data.n_samples,
        arch_spec.init.label(),
        plan.trials,
        median(&lams),
        start.elapsed().as_secs_f64()
    )];
    Ok(RunOutput {
        table,
        plot: PlotSeries { x_label: "trial", y_label: "lambda_min", points },
        summaries,
    })
}

struct BoundsTrial {
    seed: u64,
    lam_lim: f64,
    lower_lim: f64,
    upper_lim: f64,
    lam_emp: f64,
    lower_emp: f64,
    upper_emp: f64,
}

fn bounds(plan: &Plan) -> AppResult<RunOutput> {
    let start = Instant::now();
    let data = plan.require_data()?;
    let dist = parse_distribution(&data.distribution)?;
    let arch_spec = plan.require_arch()?;
    let arch = build_arch(&arch_spec.widths, &arch_spec.init)?;
    let depth = arch.depth();
    let r = plan.r;
    let point_seed = derive_seed(plan.seed, "point", 0);
    let results = run_trials(plan.trials, |t| -> AppResult<BoundsTrial> {
        let trial_seed = derive_seed(point_seed, "trial", t);
        let spec = DataSpec::new(dist, data.n_samples, data.dimension, data_seed(data.seed, trial_seed))
            .map_err(|e| AppError::config(e.to_string()))?;
        let x = sample(&spec)?;
        let ws = init_weights(&arch, derive_seed(trial_seed, "weights", 0));
        let stack = limiting_ntk(&x, depth)?;
        let kbar = empirical_ntk(&jacobian(&ws, &x)?);
        Ok(BoundsTrial {
            seed: trial_seed,
            lam_lim: smallest_eigenvalue(stack.final_ntk())?,
            lower_lim: certified_lower_bound_limiting(&x, depth, r)?.value,
            upper_lim: trace_upper_bound_limiting(&x, depth)?.value,
            lam_emp: smallest_eigenvalue(&kbar)?,
            lower_emp: certified_lower_bound_empirical(&ws, &x)?.value,
            upper_emp: upper_bound_empirical(&ws, &x)?.value,
        })
    })?;

    let mut table = Table::new(vec![
        "experiment", "distribution", "n_samples", "dimension", "widths", "init", "r", "trial",
        "seed", "lambda_min_limiting", "lower_limiting", "upper_limiting",
        "lambda_min_empirical", "lower_empirical", "upper_empirical",
    ]);
    let mut points = Vec::new();
    let label = widths_label(&arch_spec.widths);
    for (t, res) in results.iter().enumerate() {
        table.push(vec![
            Cell::Str("bounds".into()),
            Cell::Str(dist.name().into()),
            Cell::Int(data.n_samples as u64),
            Cell::Int(data.dimension as u64),
            Cell::Str(label.clone()),
            Cell::Str(arch_spec.init.label().into()),
            Cell::Int(r as u64),
            Cell::Int(t as u64),
            Cell::Int(res.seed),
            Cell::Float(res.lam_lim),
            Cell::Float(res.lower_lim),
            Cell::Float(res.upper_lim),
            Cell::Float(res.lam_emp),
            Cell::Float(res.lower_emp),
            Cell::Float(res.upper_emp),
        ]);
        points.push((t as f64, res.lam_emp));
    }
    let lams: Vec<f64> = results.iter().map(|r| r.lam_emp).collect();
    let summaries = vec![format!(
        "[bounds] dist={} N={} widths={label} r={r} trials={} median_lambda_min_empirical={:.6e} runtime={:.2}s",
        dist.name(),
        data.n_samples,
        plan.trials,
        median(&lams),
        start.elapsed().as_secs_f64()
    )];
    Ok(RunOutput {
        table,
        plot: PlotSeries { x_label: "trial", y_label: "lambda_min_empirical", points },
        summaries,
    })
}

fn convergence(plan: &Plan) -> AppResult<RunOutput> {
    let data = plan.require_data()?;
    let dist = parse_distribution(&data.distribution)?;
    let depth = plan.depth.unwrap_or(3);
    if depth < 2 {
        return Err(AppError::config("convergence needs depth >= 2 (at least one hidden layer)"));
    }
    let mut hidden = plan.grid.hidden_width.clone().unwrap_or_else(|| vec![64, 256, 1024]);
    hidden.sort_unstable();
    hidden.dedup();
    if hidden.iter().any(|&w| w == 0) {
        return Err(AppError::config("hidden widths must be at least 1"));
    }

    // The data is pinned once for the whole experiment so that every width
    // is compared against the same limiting kernel.
    let fixed_seed = data.seed.unwrap_or_else(|| derive_seed(plan.seed, "data", 0));
    let spec = DataSpec::new(dist, data.n_samples, data.dimension, fixed_seed)
        .map_err(|e| AppError::config(e.to_string()))?;
    let x = sample(&spec)?;
    let limit = limiting_ntk(&x, depth)?;
    let k_inf = limit.final_ntk();

    let mut table = Table::new(vec![
        "experiment", "distribution", "n_samples", "dimension", "depth", "hidden_width",
        "trial", "seed", "max_entry_gap", "median_gap", "min_gap", "max_gap",
    ]);
    let mut plot_points = Vec::new();
    let mut summaries = Vec::new();
    for (p, &width) in hidden.iter().enumerate() {
        let start = Instant::now();
        let mut widths = vec![data.dimension];
        widths.extend(std::iter::repeat(width).take(depth - 1));
        widths.push(1);
        let arch = build_arch(&widths, &InitScheme::Unit)?;
        let point_seed = derive_seed(plan.seed, "point", p as u64);
        let gaps = run_trials(plan.trials, |t| -> AppResult<(u64, f64)> {
            let trial_seed = derive_seed(point_seed, "trial", t);
            let ws = init_weights(&arch, derive_seed(trial_seed, "weights", 0));
            let kbar = empirical_ntk(&jacobian(&ws, &x)?);
            let normalized = normalized_ntk(&kbar, &widths)?;
            Ok((trial_seed, max_abs_entry_diff(&normalized, k_inf)))
        })?;
        let values: Vec<f64> = gaps.iter().map(|&(_, g)| g).collect();
        let med = median(&values);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (t, &(seed, gap)) in gaps.iter().enumerate() {
            table.push(vec![
                Cell::Str("convergence".into()),
                Cell::Str(dist.name().into()),
                Cell::Int(data.n_samples as u64),
                Cell::Int(data.dimension as u64),
                Cell::Int(depth as u64),
                Cell::Int(width as u64),
                Cell::Int(t as u64),
                Cell::Int(seed),
                Cell::Float(gap),
                Cell::Float(med),
                Cell::Float(min),
                Cell::Float(max),
            ]);
        }
        plot_points.push((width as f64, med));
        summaries.push(format!(
            "[convergence] width={width} trials={} median_gap={:.6e} runtime={:.2}s",
            plan.trials,
            med,
            start.elapsed().as_secs_f64()
        ));
    }
    Ok(RunOutput {
        table,
        plot: PlotSeries { x_label: "hidden_width", y_label: "median_gap", points: plot_points },
        summaries,
    })
}

struct SweepPoint {
    dist: Distribution,
    init: InitScheme,
    dimension: usize,
    n_samples: usize,
    hidden_width: usize,
}

struct SweepTrial {
    seed: u64,
    lam_emp: f64,
    lam_lim: f64,
    scaling_lower: f64,
    scaling_upper: f64,
}

const SWEEP_BUDGET: usize = 10_000;

fn sweep(plan: &Plan) -> AppResult<RunOutput> {
    let data = plan.require_data()?;
    let depth = plan.depth.unwrap_or(2);
    if depth < 2 {
        return Err(AppError::config("sweep needs depth >= 2 (at least one hidden layer)"));
    }
    let base_init = plan.arch.as_ref().map(|a| a.init.clone()).unwrap_or(InitScheme::He);

    let mut dists: Vec<String> =
        plan.grid.distribution.clone().unwrap_or_else(|| vec![data.distribution.clone()]);
    dists.sort_unstable();
    dists.dedup();
    let dists: Vec<Distribution> =
        dists.iter().map(|s| parse_distribution(s)).collect::<AppResult<_>>()?;

    let mut inits: Vec<String> = match &plan.grid.init {
        Some(v) => v.clone(),
        None => vec![base_init.label().to_string()],
    };
    inits.sort_unstable();
    inits.dedup();
    let inits: Vec<InitScheme> = inits
        .iter()
        .map(|s| {
            if s == "custom" {
                if matches!(base_init, InitScheme::Explicit(_)) {
                    Ok(base_init.clone())
                } else {
                    Err(AppError::config("grid.init 'custom' needs an explicit arch.init list"))
                }
            } else {
                s.parse()
            }
        })
        .collect::<AppResult<_>>()?;

    let mut dims = plan.grid.dimension.clone().unwrap_or_else(|| vec![data.dimension]);
    dims.sort_unstable();
    dims.dedup();
    let mut counts = plan.grid.n_samples.clone().unwrap_or_else(|| vec![data.n_samples]);
    counts.sort_unstable();
    counts.dedup();
    let default_width = plan
        .arch
        .as_ref()
        .and_then(|a| a.widths.get(1).copied())
        .unwrap_or(64);
    let mut widths_axis = plan.grid.hidden_width.clone().unwrap_or_else(|| vec![default_width]);
    widths_axis.sort_unstable();
    widths_axis.dedup();

    if dims.iter().any(|&v| v == 0) || counts.iter().any(|&v| v == 0) || widths_axis.iter().any(|&v| v == 0) {
        return Err(AppError::config("grid entries must be at least 1"));
    }

    let mut grid_points = Vec::new();
    for dist in &dists {
        for init in &inits {
            for &dimension in &dims {
                for &n_samples in &counts {
                    for &hidden_width in &widths_axis {
                        grid_points.push(SweepPoint {
                            dist: *dist,
                            init: init.clone(),
                            dimension,
                            n_samples,
                            hidden_width,
                        });
                    }
                }
            }
        }
    }
    let total = grid_points.len() * plan.trials;
    if total > SWEEP_BUDGET {
        return Err(AppError::config(format!(
            "sweep budget exceeded: {} points x {} trials = {total} > {SWEEP_BUDGET}",
            grid_points.len(),
            plan.trials
        )));
    }

    let mut table = Table::new(vec![
        "experiment", "distribution", "init", "dimension", "n_samples", "hidden_width", "depth",
        "trial", "seed", "lambda_min_empirical", "lambda_min_limiting", "scaling_lower",
        "scaling_upper", "ratio_empirical_over_lower", "ratio_limiting_over_d",
        "median_lambda_min", "min_lambda_min", "max_lambda_min",
    ]);
    let mut plot_points = Vec::new();
    let mut summaries = Vec::new();
    for (p, point) in grid_points.iter().enumerate() {
        let start = Instant::now();
        let mut widths = vec![point.dimension];
        widths.extend(std::iter::repeat(point.hidden_width).take(depth - 1));
        widths.push(1);
        let arch = build_arch(&widths, &point.init)?;
        let lower_expr = scaling_expression(
            FormulaId::FiniteWidthLower,
            &arch,
            point.dimension,
            point.n_samples,
            plan.delta,
            plan.r,
            1,
        )?;
        let upper_expr = scaling_expression(
            FormulaId::FiniteWidthUpper,
            &arch,
            point.dimension,
            point.n_samples,
            plan.delta,
            plan.r,
            1,
        )?;
        let point_seed = derive_seed(plan.seed, "point", p as u64);
        let trials = run_trials(plan.trials, |t| -> AppResult<SweepTrial> {
            let trial_seed = derive_seed(point_seed, "trial", t);
            let spec = DataSpec::new(
                point.dist,
                point.n_samples,
                point.dimension,
                data_seed(data.seed, trial_seed),
            )
            .map_err(|e| AppError::config(e.to_string()))?;
            let x = sample(&spec)?;
            let ws = init_weights(&arch, derive_seed(trial_seed, "weights", 0));
            let kbar = empirical_ntk(&jacobian(&ws, &x)?);
            let stack = limiting_ntk(&x, depth)?;
            Ok(SweepTrial {
                seed: trial_seed,
                lam_emp: smallest_eigenvalue(&kbar)?,
                lam_lim: smallest_eigenvalue(stack.final_ntk())?,
                scaling_lower: lower_expr.value,
                scaling_upper: upper_expr.value,
            })
        })?;
        let lams: Vec<f64> = trials.iter().map(|r| r.lam_emp).collect();
        let med = median(&lams);
        let min = lams.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = lams.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (t, res) in trials.iter().enumerate() {
            let ratio_lower =
                if res.scaling_lower > 0.0 { res.lam_emp / res.scaling_lower } else { f64::NAN };
            table.push(vec![
                Cell::Str("sweep".into()),
                Cell::Str(point.dist.name().into()),
                Cell::Str(point.init.label().into()),
                Cell::Int(point.dimension as u64),
                Cell::Int(point.n_samples as u64),
                Cell::Int(point.hidden_width as u64),
                Cell::Int(depth as u64),
                Cell::Int(t as u64),
                Cell::Int(res.seed),
                Cell::Float(res.lam_emp),
                Cell::Float(res.lam_lim),
                Cell::Float(res.scaling_lower),
                Cell::Float(res.scaling_upper),
                Cell::Float(ratio_lower),
                Cell::Float(res.lam_lim / point.dimension as f64),
                Cell::Float(med),
                Cell::Float(min),
                Cell::Float(max),
            ]);
        }
        plot_points.push((p as f64, med));
        summaries.push(format!(
            "[sweep] dist={} init={} d={} N={} width={} trials={} median_lambda_min={:.6e} runtime={:.2}s",
            point.dist.name(),
            point.init.label(),
            point.dimension,
            point.n_samples,
            point.hidden_width,
            plan.trials,
            med,
            start.elapsed().as_secs_f64()
        ));
    }
    Ok(RunOutput {
        table,
        plot: PlotSeries { x_label: "point_index", y_label: "median_lambda_min", points: plot_points },
        summaries,
    })
}

struct LipschitzTrial {
    seed: u64,
    estimate: f64,
    naive: f64,
    rejected: u64,
}

fn lipschitz(plan: &Plan) -> AppResult<RunOutput> {
    let start = Instant::now();
    let arch_spec = plan.require_arch()?;
    let arch = build_arch(&arch_spec.widths, &arch_spec.init)?;
    let depth = arch.depth();
    let layer = plan.layer.unwrap_or(depth.saturating_sub(1).max(1));
    if layer == 0 || layer > depth {
        return Err(AppError::config(format!(
            "layer {layer} out of range for a depth-{depth} network"
        )));
    }
    let dist = match &plan.data {
        Some(d) => parse_distribution(&d.distribution)?,
        None => Distribution::Gaussian,
    };
    let probe_template = DataSpec::new(dist, 1, arch.input_dim(), 0)
        .map_err(|e| AppError::config(e.to_string()))?;
    let scaling = scaling_expression(
        FormulaId::LipschitzScaling,
        &arch,
        arch.input_dim(),
        plan.data.as_ref().map(|d| d.n_samples).unwrap_or(1),
        plan.delta,
        plan.r,
        layer,
    )?;
    let point_seed = derive_seed(plan.seed, "point", 0);
    let probes = plan.probes;
    let results = run_trials(plan.trials, |t| -> AppResult<LipschitzTrial> {
        let trial_seed = derive_seed(point_seed, "trial", t);
        let ws = init_weights(&arch, derive_seed(trial_seed, "weights", 0));
        let est = lipschitz_empirical(&ws, layer, probes, &probe_template, derive_seed(trial_seed, "probes", 0))?;
        Ok(LipschitzTrial {
            seed: trial_seed,
            estimate: est.estimate,
            naive: lipschitz_naive_bound(&ws, layer)?,
            rejected: est.probes_rejected as u64,
        })
    })?;

    let mut table = Table::new(vec![
        "experiment", "widths", "init", "layer", "probes", "trial", "seed", "estimate",
        "naive_bound", "probes_rejected", "scaling_value", "ratio_sq_over_scaling",
    ]);
    let mut points = Vec::new();
    let label = widths_label(&arch_spec.widths);
    for (t, res) in results.iter().enumerate() {
        let ratio = if scaling.value > 0.0 {
            res.estimate * res.estimate / scaling.value
        } else {
            f64::NAN
        };
        table.push(vec![
            Cell::Str("lipschitz".into()),
            Cell::Str(label.clone()),
            Cell::Str(arch_spec.init.label().into()),
            Cell::Int(layer as u64),
            Cell::Int(probes as u64),
            Cell::Int(t as u64),
            Cell::Int(res.seed),
            Cell::Float(res.estimate),
            Cell::Float(res.naive),
            Cell::Int(res.rejected),
            Cell::Float(scaling.value),
            Cell::Float(ratio),
        ]);
        points.push((t as f64, res.estimate));
    }
    let estimates: Vec<f64> = results.iter().map(|r| r.estimate).collect();
    let summaries = vec![format!(
        "[lipschitz] widths={label} k={layer} probes={probes} trials={} median_estimate={:.6e} runtime={:.2}s",
        plan.trials,
        median(&estimates),
        start.elapsed().as_secs_f64()
    )];
    Ok(RunOutput {
        table,
        plot: PlotSeries { x_label: "trial", y_label: "estimate", points },
        summaries,
    })
}

struct MemorizeTrial {
    seed: u64,
    lambda_min: f64,
    residual: f64,
    solution_norm: f64,
}

fn memorize(plan: &Plan) -> AppResult<RunOutput> {
    let start = Instant::now();
    let data = plan.require_data()?;
    let dist = parse_distribution(&data.distribution)?;
    let arch_spec = plan.require_arch()?;
    let arch = build_arch(&arch_spec.widths, &arch_spec.init)?;
    let point_seed = derive_seed(plan.seed, "point", 0);
    let results = run_trials(plan.trials, |t| -> AppResult<MemorizeTrial> {
        let trial_seed = derive_seed(point_seed, "trial", t);
        let spec = DataSpec::new(dist, data.n_samples, data.dimension, data_seed(data.seed, trial_seed))
            .map_err(|e| AppError::config(e.to_string()))?;
        let x = sample(&spec)?;
        let ws = init_weights(&arch, derive_seed(trial_seed, "weights", 0));
        let j = jacobian(&ws, &x)?;
        let lambda_min = smallest_eigenvalue(&empirical_ntk(&j))?;
        let mut label_rng = stream(derive_seed(trial_seed, "labels", 0));
        let y = DVector::from_fn(data.n_samples, |_, _| {
            if label_rng.gen::<bool>() {
                1.0
            } else {
                -1.0
            }
        });
        let fit = linearized_fit(&j, &y)?;
        Ok(MemorizeTrial {
            seed: trial_seed,
            lambda_min,
            residual: fit.residual_norm,
            solution_norm: fit.solution_norm,
        })
    })?;

    let mut table = Table::new(vec![
        "experiment", "distribution", "n_samples", "dimension", "widths", "init", "trial",
        "seed", "lambda_min", "residual_norm", "solution_norm",
    ]);
    let mut points = Vec::new();
    let label = widths_label(&arch_spec.widths);
    for (t, res) in results.iter().enumerate() {
        table.push(vec![
            Cell::Str("memorize".into()),
            Cell::Str(dist.name().into()),
            Cell::Int(data.n_samples as u64),
            Cell::Int(data.dimension as u64),
            Cell::Str(label.clone()),
            Cell::Str(arch_spec.init.label().into()),
            Cell::Int(t as u64),
            Cell::Int(res.seed),
            Cell::Float(res.lambda_min),
            Cell::Float(res.residual),
            Cell::Float(res.solution_norm),
        ]);
        points.push((t as f64, res.residual));
    }
    let residuals: Vec<f64> = results.iter().map(|r| r.residual).collect();
    let summaries = vec![format!(
        "[memorize] dist={} N={} widths={label} trials={} median_residual={:.6e} runtime={:.2}s",
        dist.name(),
        data.n_samples,
        plan.trials,
        median(&residuals),
        start.elapsed().as_secs_f64()
    )];
    Ok(RunOutput {
        table,
        plot: PlotSeries { x_label: "trial", y_label: "residual_norm", points },
        summaries,
    })
}
