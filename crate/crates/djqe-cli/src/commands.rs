//! Command implementations: generate, evaluate, benchmark, calibrate.

use std::path::PathBuf;

use serde::Serialize;

use djqe::cost::CostCache;
use djqe::csvio;
use djqe::estimator;
use djqe::kernel::KernelKind;
use djqe::partitioner;
use djqe::synthetic::{self, Method, Scenario, ScenarioId};
use djqe::{DatasetF64, DjqeError, PartitionerKind, PolicyF64, Result};

use crate::args::{BenchmarkArgs, CalibrateArgs, EvaluateArgs, GenerateArgs};
use crate::runconfig::{self, init_threads};

fn build_scenario(name: &str, p: Option<usize>, noise_sd: f64) -> Result<Scenario<f64>> {
    let id: ScenarioId = name.parse()?;
    let p = p.unwrap_or_else(|| id.min_features());
    Scenario::with_noise(id, p, noise_sd)
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let scenario = build_scenario(&args.scenario, args.p, args.noise_sd)?;
    let ds = scenario.gen_data(args.n, args.seed)?;
    csvio::write_dataset(&ds, &args.out)?;
    println!(
        "wrote {} rows x {} columns to {}",
        ds.len(),
        ds.feature_dim() + 2,
        args.out.display()
    );
    println!(
        "optimal-policy oracle value: {:.6}",
        scenario.closed_form_value()
    );
    let target = scenario.target_policy();
    println!(
        "benchmark target policy ({}) value: {:.6}",
        target.name(),
        scenario.target_value()
    );
    Ok(())
}

fn parse_policy(spec: &str, dataset: &DatasetF64) -> Result<PolicyF64> {
    match spec {
        "s1-optimal" => return Ok(PolicyF64::OptimalS1),
        "s2-optimal" => return Ok(PolicyF64::OptimalS2),
        "s3-optimal" => return Ok(PolicyF64::OptimalS3),
        "s4-optimal" => return Ok(PolicyF64::OptimalS4),
        "toy-optimal" => return Ok(PolicyF64::OptimalToy),
        "toy-identity" => return Ok(PolicyF64::ToyIdentity),
        _ => {}
    }
    if let Some(raw) = spec.strip_prefix("constant:") {
        let a: f64 = raw.parse().map_err(|_| {
            DjqeError::Validation(format!("constant policy needs a number, got {raw:?}"))
        })?;
        return PolicyF64::constant(a);
    }
    let path = PathBuf::from(spec);
    if !path.exists() {
        return Err(DjqeError::Validation(format!(
            "unknown policy {spec:?}: not a built-in name, constant:<v>, or an existing CSV path"
        )));
    }
    let actions = csvio::read_policy_column(&path)?;
    if actions.len() != dataset.len() {
        return Err(DjqeError::DimensionMismatch {
            expected: dataset.len(),
            got: actions.len(),
        });
    }
    PolicyF64::tabulated(actions)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let file = runconfig::load_file(args.shared.config.as_deref())?;
    let (config, extras) = runconfig::resolve(&args.shared, &file)?;
    init_threads(extras.jobs);

    let ds = csvio::read_dataset::<f64>(&args.data)?;
    let policy = parse_policy(&args.policy, &ds)?;
    let report = estimator::djqe_evaluate(&ds, &policy, &config)?;

    println!("value estimate: {:.6}", report.value);
    println!(
        "n: {}  p: {}  m: {}  folds: {}  gamma: {:.6}  variant: {}",
        report.n,
        report.p,
        report.m,
        report.folds.len(),
        report.selected_gamma,
        report.estimator_variant.as_str()
    );
    for fold in &report.folds {
        println!(
            "fold {}: {} interval(s), change points {:?}, partial sum {:.6}",
            fold.fold, fold.n_intervals, fold.change_points, fold.partial_sum
        );
    }
    println!(
        "propensity clips: {}/{}",
        report.diagnostics.propensity_clipped, report.diagnostics.propensity_evaluations
    );

    let json = report.to_json()?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, json).map_err(|e| DjqeError::Io {
                path: path.clone(),
                source: e,
            })?;
            println!("report written to {}", path.display());
        }
        None => println!("{json}"),
    }

    if args.dump_bellman.is_some() || args.dump_costs.is_some() || args.eager_costs {
        // diagnostic pass over the full dataset with the resolved penalty
        let rows: Vec<usize> = (0..ds.len()).collect();
        let cache = CostCache::new(&ds, &rows, report.m, &config.mlp, config.seed)?;
        if args.eager_costs {
            cache.compute_all()?;
        }
        let gamma_eff = report.selected_gamma / ds.len() as f64;
        let seg = match config.partitioner {
            PartitionerKind::Pelt => partitioner::pelt(&cache, gamma_eff)?,
            PartitionerKind::ExactDp => partitioner::exact_dp(&cache, gamma_eff)?,
        };
        if let Some(path) = &args.dump_bellman {
            csvio::write_bellman(&seg, path)?;
            println!("bellman dump written to {}", path.display());
        }
        if let Some(path) = &args.dump_costs {
            csvio::write_cost_map(&cache, path)?;
            println!(
                "cost map ({} entries) written to {}",
                cache.computed(),
                path.display()
            );
        }
    }
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<()> {
    let file = runconfig::load_file(args.shared.config.as_deref())?;
    let (config, extras) = runconfig::resolve(&args.shared, &file)?;
    init_threads(extras.jobs);

    if args.n.is_empty() {
        return Err(DjqeError::validation("--n needs at least one sample size"));
    }
    let scenario = build_scenario(&args.scenario, args.p, args.noise_sd)?;
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let kernel: KernelKind = match args.kernel.as_deref().or(extras.kernel.as_deref()) {
        Some(s) => s.parse()?,
        None => KernelKind::default(),
    };
    if args.reps == 1 {
        eprintln!("warning: reps=1 reports sd = 0");
    }

    let mut rows = Vec::new();
    for &n in &args.n {
        rows.extend(synthetic::run_benchmark(
            &scenario, n, args.reps, &methods, kernel, &config,
        )?);
    }
    csvio::write_benchmark_rows(&rows, &args.out)?;

    println!(
        "scenario {} (p = {}, noise sd = {}), target value {:.4}, {} reps, seed {}",
        scenario.id.as_str(),
        scenario.p,
        scenario.noise_sd,
        scenario.target_value(),
        args.reps,
        config.seed
    );
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "n", "method", "bias", "sd", "mse");
    for r in &rows {
        println!(
            "{:>8} {:>10} {:>10.4} {:>10.4} {:>10.4}",
            r.n,
            r.method.as_str(),
            r.bias,
            r.sd,
            r.mse
        );
    }
    println!("results written to {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct CalibrationSummary {
    sigma_hat: f64,
    n_source: usize,
    n_simulated: usize,
    feature_dim: usize,
    action_offset: f64,
    action_scale: f64,
    simulated_csv: String,
    pi_star_csv: String,
    seed: u64,
}

pub fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let file = runconfig::load_file(args.shared.config.as_deref())?;
    let (config, extras) = runconfig::resolve(&args.shared, &file)?;
    init_threads(extras.jobs);

    let ds = csvio::read_dataset::<f64>(&args.data)?;
    let sim = synthetic::calibrate(&ds, &config.mlp, config.seed)?;
    let sim_n = args.sim_n.unwrap_or(ds.len());
    let simulated = sim.simulate(sim_n, config.seed)?;
    let pi_star = sim.pi_star_column(&ds)?;

    let sim_path = PathBuf::from(format!("{}-simulated.csv", args.out_prefix));
    let pi_path = PathBuf::from(format!("{}-pi-star.csv", args.out_prefix));
    let summary_path = PathBuf::from(format!("{}-calibration.json", args.out_prefix));
    csvio::write_dataset(&simulated, &sim_path)?;
    csvio::write_policy_column(&pi_star, &pi_path)?;

    let scale = sim.action_scale();
    let summary = CalibrationSummary {
        sigma_hat: sim.sigma_hat(),
        n_source: ds.len(),
        n_simulated: sim_n,
        feature_dim: ds.feature_dim(),
        action_offset: scale.offset,
        action_scale: scale.scale,
        simulated_csv: sim_path.display().to_string(),
        pi_star_csv: pi_path.display().to_string(),
        seed: config.seed,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| DjqeError::Numerical(format!("summary serialization failed: {e}")))?;
    std::fs::write(&summary_path, json).map_err(|e| DjqeError::Io {
        path: summary_path.clone(),
        source: e,
    })?;

    println!("sigma_hat: {:.6}", sim.sigma_hat());
    println!(
        "simulated {} rows to {}; pi-star column to {}; summary to {}",
        sim_n,
        sim_path.display(),
        pi_path.display(),
        summary_path.display()
    );
    Ok(())
}
