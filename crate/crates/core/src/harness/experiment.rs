use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::{Algorithm, ExperimentConfig};
use super::plot::{plot_errors, plot_times};
use super::HarnessError;
use crate::mesh::{generate_mesh, TriMesh};
use crate::problem::{ParametricProblem, TruthCache};
use crate::rb::build_basis;
use crate::sampling::{
    gradient_select, greedy_select, linspace, log_spacing_select, metropolis_select, SamplingError,
    SelectionResult, TrainingMesh,
};

/// Offline data shared read-only by every experiment cell.
#[derive(Debug)]
pub struct Setup {
    pub mesh: TriMesh,
    pub problem: ParametricProblem,
    pub training: TrainingMesh,
    pub test: TruthCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    /// NaN when the selector failed.
    pub total_relative_error: f64,
    pub selection_seconds: f64,
    pub lambdas: Vec<f64>,
    pub indicators: Vec<f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub n: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup, HarnessError> {
    cfg.validate()?;
    cfg.model
        .validate()
        .map_err(|e| HarnessError::Invariant(e.to_string()))?;
    let mesh = generate_mesh(&cfg.geometry, cfg.mesh_target_elements, cfg.mesh_seed)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let problem = ParametricProblem::from_mesh(&mesh, cfg.model.clone(), &cfg.source)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let test = TruthCache::build(&problem, &linspace(cfg.lambda_min, cfg.lambda_max, cfg.test_size))
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    Ok(Setup {
        mesh,
        problem,
        training: cfg.training_mesh(),
        test,
    })
}

pub fn run_selector(
    algorithm: Algorithm,
    cfg: &ExperimentConfig,
    setup: &Setup,
    n: usize,
    seed: u64,
) -> Result<SelectionResult, SamplingError> {
    let p = &setup.problem;
    let t = &setup.training;
    match algorithm {
        Algorithm::Greedy => greedy_select(p, t, &cfg.greedy_config(n, seed)),
        Algorithm::Gradient => gradient_select(p, t, &cfg.gradient_config(n, seed)),
        Algorithm::Metropolis => metropolis_select(p, t, &cfg.metropolis_config(n, seed)),
        Algorithm::LogSpacing => log_spacing_select(n, cfg.sigma_bar),
    }
}

fn run_cell(cfg: &ExperimentConfig, setup: &Setup, algorithm: Algorithm, n: usize, trial: usize) -> ExperimentRecord {
    let seed = cfg.seed + trial as u64;
    let mut record = ExperimentRecord {
        algorithm,
        n,
        trial,
        seed,
        total_relative_error: f64::NAN,
        selection_seconds: 0.0,
        lambdas: Vec::new(),
        indicators: Vec::new(),
        warnings: Vec::new(),
        error: None,
    };
    let selection = match run_selector(algorithm, cfg, setup, n, seed) {
        Ok(s) => s,
        Err(e) => {
            log::error!("{} N={n} trial {trial}: {e}", algorithm.name());
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.selection_seconds = if cfg.record_timings {
        selection.wall_clock_seconds
    } else {
        0.0
    };
    record.lambdas = selection.samples;
    record.indicators = selection.indicators;
    record.warnings = selection.warnings;
    let evaluated = build_basis(&setup.problem, cfg.basis_options(), &record.lambdas).and_then(|(rb, skipped)| {
        if !skipped.is_empty() {
            record
                .warnings
                .push(format!("{} dependent samples skipped in evaluation", skipped.len()));
        }
        rb.total_relative_error_cached(&setup.problem, &setup.test)
    });
    match evaluated {
        Ok(e) => record.total_relative_error = e,
        Err(e) => record.error = Some(format!("evaluation: {e}")),
    }
    log::info!(
        "{} N={n} trial {trial}: error {:.3e}, {:.3} s",
        algorithm.name(),
        record.total_relative_error,
        record.selection_seconds
    );
    record
}

/// Runs every (algorithm, N, trial) cell. Output order is fixed by the
/// config regardless of the number of workers.
pub fn run_cells(cfg: &ExperimentConfig, setup: &Setup) -> Vec<ExperimentRecord> {
    let mut cells = Vec::new();
    for &alg in &cfg.algorithms {
        let trials = if alg.is_stochastic() { cfg.trials } else { 1 };
        for &n in &cfg.sizes {
            for trial in 0..trials {
                cells.push((alg, n, trial));
            }
        }
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ExperimentRecord>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(cells.len()).max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(alg, n, trial)) = cells.get(i) else { break };
                let record = run_cell(cfg, setup, alg, n, trial);
                slots.lock().expect("result slots")[i] = Some(record);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}

/// Mean and sample standard deviation per (algorithm, N) over the rows that
/// succeeded.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Algorithm, usize)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.algorithm, r.n)) {
            keys.push((r.algorithm, r.n));
        }
    }
    keys.into_iter()
        .map(|(algorithm, n)| {
            let rows: Vec<&ExperimentRecord> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.n == n && r.error.is_none())
                .collect();
            let errors: Vec<f64> = rows.iter().map(|r| r.total_relative_error).collect();
            let times: Vec<f64> = rows.iter().map(|r| r.selection_seconds).collect();
            let (mean_error, std_error) = mean_std(&errors);
            let (mean_seconds, std_seconds) = mean_std(&times);
            SummaryRow {
                algorithm,
                n,
                mean_error,
                std_error,
                mean_seconds,
                std_seconds,
            }
        })
        .collect()
}

pub fn write_results_csv(path: &Path, records: &[ExperimentRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm",
        "n",
        "trial",
        "seed",
        "total_relative_error",
        "selection_seconds",
        "lambdas",
    ])?;
    for r in records {
        let lambdas: Vec<String> = r.lambdas.iter().map(|l| format!("{l:.6}")).collect();
        w.write_record([
            r.algorithm.name().to_string(),
            r.n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            format!("{:e}", r.total_relative_error),
            format!("{:.6}", r.selection_seconds),
            lambdas.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "n", "mean_error", "std_error", "mean_seconds", "std_seconds"])?;
    for r in rows {
        w.write_record([
            r.algorithm.name().to_string(),
            r.n.to_string(),
            format!("{:e}", r.mean_error),
            format!("{:e}", r.std_error),
            format!("{:.6}", r.mean_seconds),
            format!("{:.6}", r.std_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_errors_csv(path: &Path, records: &[ExperimentRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "n", "trial", "seed", "message"])?;
    for r in records {
        if let Some(e) = &r.error {
            w.write_record([
                r.algorithm.name(),
                &r.n.to_string(),
                &r.trial.to_string(),
                &r.seed.to_string(),
                e,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Builds the problem, runs every cell and writes results.csv, summary.csv
/// (plus errors.csv when any cell failed) and two SVG plots into the output
/// directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let setup = build_setup(cfg)?;
    log::info!(
        "mesh: {} vertices, {} triangles",
        setup.mesh.num_vertices(),
        setup.mesh.num_triangles()
    );
    let records = run_cells(cfg, &setup);
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    write_results_csv(&out.join("results.csv"), &records)?;
    let summary = summarize(&records);
    write_summary_csv(&out.join("summary.csv"), &summary)?;
    if records.iter().any(|r| r.error.is_some()) {
        write_errors_csv(&out.join("errors.csv"), &records)?;
    }
    plot_errors(&out.join("error_vs_n.svg"), &summary)?;
    plot_times(&out.join("time_vs_n.svg"), &summary)?;
    Ok(records)
}
