//! Experiment configuration: `section.key = value` lines, `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::HarnessError;
use crate::fem::SourceSpec;
use crate::mesh::Geometry;
use crate::optics::{CoefficientModel, LAMBDA_MAX, LAMBDA_MIN};
use crate::rb::BasisOptions;
use crate::sampling::{
    ArmijoParams, GradientConfig, GreedyConfig, Indicator, MetropolisConfig, StoppingRule, TrainingMesh,
    DEFAULT_SIGMA_BAR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Greedy,
    Gradient,
    Metropolis,
    LogSpacing,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Greedy,
        Algorithm::Gradient,
        Algorithm::Metropolis,
        Algorithm::LogSpacing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Gradient => "gradient",
            Algorithm::Metropolis => "metropolis",
            Algorithm::LogSpacing => "log_spacing",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self != Algorithm::LogSpacing
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| format!("unknown algorithm '{s}' (expected greedy, gradient, metropolis or log_spacing)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub mesh_target_elements: usize,
    pub mesh_seed: u64,
    pub model: CoefficientModel,
    pub source: SourceSpec,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub xi_size: usize,
    pub upsilon_size: usize,
    pub lambda_coarse_size: usize,
    pub test_size: usize,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub output_dir: PathBuf,
    pub workers: usize,
    /// When false, selection_seconds is written as 0 so reruns compare bitwise.
    pub record_timings: bool,
    pub reference_lambda: f64,
    pub greedy_tolerance: f64,
    pub greedy_indicator: Indicator,
    pub gradient_tolerance: f64,
    pub gradient_fd_step: f64,
    pub gradient_tol: f64,
    pub gradient_max_descent: usize,
    pub armijo: ArmijoParams,
    pub metropolis_pilot: usize,
    pub metropolis_burn_in: usize,
    pub metropolis_samples: usize,
    pub metropolis_initial_step: f64,
    pub metropolis_likelihood_scale: f64,
    pub sigma_bar: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            mesh_target_elements: 2097,
            mesh_seed: 1,
            model: CoefficientModel::default(),
            source: SourceSpec::default(),
            lambda_min: LAMBDA_MIN,
            lambda_max: LAMBDA_MAX,
            xi_size: 400,
            upsilon_size: 50,
            lambda_coarse_size: 9,
            test_size: 100,
            sizes: vec![5, 6, 7, 8, 9, 10, 15, 20],
            trials: 10,
            seed: 0,
            algorithms: Algorithm::ALL.to_vec(),
            output_dir: PathBuf::from("results"),
            workers: 1,
            record_timings: true,
            reference_lambda: 800.0,
            greedy_tolerance: 1e-5,
            greedy_indicator: Indicator::DualNorm,
            gradient_tolerance: 1e-7,
            gradient_fd_step: 0.5,
            gradient_tol: 1e-8,
            gradient_max_descent: 50,
            armijo: ArmijoParams::default(),
            metropolis_pilot: 500,
            metropolis_burn_in: 500,
            metropolis_samples: 2000,
            metropolis_initial_step: 20.0,
            metropolis_likelihood_scale: 1.0,
            sigma_bar: DEFAULT_SIGMA_BAR,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| HarnessError::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(HarnessError::Config(format!("{key}: expected a boolean, got '{other}'"))),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_file_with(path, &[])
    }

    /// Reads a config file, applies `overrides` on top and validates the result.
    pub fn from_file_with(path: &Path, overrides: &[(&str, &str)]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse_unchecked(&text)?;
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg = Self::parse_unchecked(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse_unchecked(text: &str) -> Result<Self, HarnessError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected 'section.key = value'", n + 1)))?;
            let key = key.trim();
            if !key.contains('.') {
                return Err(HarnessError::Config(format!("line {}: key '{key}' needs a section", n + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(HarnessError::Config(format!("line {}: duplicate key '{key}'", n + 1)));
            }
        }
        let mut cfg = Self::default();
        for (key, value) in &entries {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Sets one `section.key` from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        let k = key;
        match key {
            "mesh.target_elements" => self.mesh_target_elements = parse_value(k, v)?,
            "mesh.seed" => self.mesh_seed = parse_value(k, v)?,
            "geometry.outer_radius" => self.geometry.outer_radius = parse_value(k, v)?,
            "geometry.inclusion_x" => self.geometry.inclusion_center[0] = parse_value(k, v)?,
            "geometry.inclusion_y" => self.geometry.inclusion_center[1] = parse_value(k, v)?,
            "geometry.inclusion_radius" => self.geometry.inclusion_radius = parse_value(k, v)?,
            "optics.control_points" => {
                let values: Vec<f64> = parse_list(k, v)?;
                if values.len() != 5 {
                    return Err(HarnessError::Config(format!("{k}: expected 5 absorption values")));
                }
                for (cp, val) in self.model.control_points.iter_mut().zip(values) {
                    cp.1 = val;
                }
            }
            "optics.spike1_center" => self.model.spike1.center = parse_value(k, v)?,
            "optics.spike1_amplitude" => self.model.spike1.amplitude = parse_value(k, v)?,
            "optics.spike1_width" => self.model.spike1.width = parse_value(k, v)?,
            "optics.spike2_center" => self.model.spike2.center = parse_value(k, v)?,
            "optics.spike2_amplitude" => self.model.spike2.amplitude = parse_value(k, v)?,
            "optics.spike2_width" => self.model.spike2.width = parse_value(k, v)?,
            "optics.tumor_factor" => self.model.tumor_factor = parse_value(k, v)?,
            "optics.tumor_offset" => self.model.tumor_offset = parse_value(k, v)?,
            "optics.mu_s_prime" => self.model.mu_s_prime = parse_value(k, v)?,
            "source.amplitude" => self.source.amplitude = parse_value(k, v)?,
            "source.center_x" => self.source.center[0] = parse_value(k, v)?,
            "source.center_y" => self.source.center[1] = parse_value(k, v)?,
            "source.width" => self.source.width = parse_value(k, v)?,
            "parameters.lambda_min" => self.lambda_min = parse_value(k, v)?,
            "parameters.lambda_max" => self.lambda_max = parse_value(k, v)?,
            "parameters.xi_size" => self.xi_size = parse_value(k, v)?,
            "parameters.upsilon_size" => self.upsilon_size = parse_value(k, v)?,
            "parameters.lambda_coarse_size" => self.lambda_coarse_size = parse_value(k, v)?,
            "parameters.test_size" => self.test_size = parse_value(k, v)?,
            "experiment.sizes" => self.sizes = parse_list(k, v)?,
            "experiment.trials" => self.trials = parse_value(k, v)?,
            "experiment.seed" => self.seed = parse_value(k, v)?,
            "experiment.algorithms" => {
                self.algorithms = parse_list::<Algorithm>(k, v)?;
            }
            "experiment.output_dir" => self.output_dir = PathBuf::from(v.trim()),
            "experiment.workers" => self.workers = parse_value(k, v)?,
            "output.record_timings" => self.record_timings = parse_bool(k, v)?,
            "basis.reference_lambda" => self.reference_lambda = parse_value(k, v)?,
            "greedy.tolerance" => self.greedy_tolerance = parse_value(k, v)?,
            "greedy.indicator" => {
                self.greedy_indicator = match v.trim() {
                    "dual_norm" => Indicator::DualNorm,
                    "output_bound" => Indicator::OutputBound,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "{k}: expected dual_norm or output_bound, got '{other}'"
                        )))
                    }
                }
            }
            "gradient.tolerance" => self.gradient_tolerance = parse_value(k, v)?,
            "gradient.fd_step" => self.gradient_fd_step = parse_value(k, v)?,
            "gradient.gradient_tol" => self.gradient_tol = parse_value(k, v)?,
            "gradient.max_descent_iterations" => self.gradient_max_descent = parse_value(k, v)?,
            "gradient.armijo_initial_step" => self.armijo.initial_step = parse_value(k, v)?,
            "gradient.armijo_shrink" => self.armijo.shrink = parse_value(k, v)?,
            "gradient.armijo_c" => self.armijo.sufficient_decrease = parse_value(k, v)?,
            "gradient.min_step" => self.armijo.min_step = parse_value(k, v)?,
            "metropolis.pilot_len" => self.metropolis_pilot = parse_value(k, v)?,
            "metropolis.burn_in" => self.metropolis_burn_in = parse_value(k, v)?,
            "metropolis.samples" => self.metropolis_samples = parse_value(k, v)?,
            "metropolis.initial_step" => self.metropolis_initial_step = parse_value(k, v)?,
            "metropolis.likelihood_scale" => self.metropolis_likelihood_scale = parse_value(k, v)?,
            "log_spacing.sigma_bar" => self.sigma_bar = parse_value(k, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Structural checks; model-level invariants are reported by the
    /// validation suite.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.lambda_min != LAMBDA_MIN || self.lambda_max != LAMBDA_MAX {
            return fail(format!(
                "parameter bounds are fixed at [{LAMBDA_MIN}, {LAMBDA_MAX}] nm by the coefficient model"
            ));
        }
        self.geometry
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.mesh_target_elements < 50 {
            return fail(format!("mesh.target_elements must be >= 50 (got {})", self.mesh_target_elements));
        }
        if self.lambda_coarse_size < 2
            || self.upsilon_size < self.lambda_coarse_size
            || self.xi_size < self.upsilon_size
        {
            return fail("need |Ξ| >= |Υ| >= |Λ| >= 2".into());
        }
        if self.test_size == 0 || self.trials == 0 || self.workers == 0 {
            return fail("test_size, trials and workers must be positive".into());
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n == 0 || n > self.xi_size) {
            return fail(format!("basis sizes must lie in 1..=|Ξ| (got {:?})", self.sizes));
        }
        if self.algorithms.is_empty() {
            return fail("no algorithms selected".into());
        }
        if !(self.greedy_tolerance > 0.0 && self.gradient_tolerance > 0.0) {
            return fail("tolerances must be positive".into());
        }
        if !(LAMBDA_MIN..=LAMBDA_MAX).contains(&self.reference_lambda) {
            return fail(format!("basis.reference_lambda {} out of range", self.reference_lambda));
        }
        if !(self.sigma_bar > 0.0) {
            return fail("log_spacing.sigma_bar must be positive".into());
        }
        let m = self.metropolis_config(1, 0);
        if m.pilot_len == 0 || m.burn_in == 0 || m.samples == 0 || !(m.initial_step > 0.0) || !(m.likelihood_scale > 0.0)
        {
            return fail("Metropolis counts must be >= 1 and step/scale positive".into());
        }
        if self.algorithms.contains(&Algorithm::Metropolis) {
            if let Some(&n) = self.sizes.iter().find(|&&n| n > self.upsilon_size) {
                return fail(format!("basis size {n} exceeds |Υ| = {} for Metropolis", self.upsilon_size));
            }
        }
        Ok(())
    }

    pub fn training_mesh(&self) -> TrainingMesh {
        TrainingMesh::uniform(self.xi_size, self.upsilon_size, self.lambda_coarse_size)
    }

    pub fn basis_options(&self) -> BasisOptions {
        BasisOptions {
            reference_lambda: self.reference_lambda,
            ..BasisOptions::default()
        }
    }

    pub fn greedy_config(&self, n: usize, seed: u64) -> GreedyConfig {
        GreedyConfig {
            stop: StoppingRule {
                epsilon_tol_min: self.greedy_tolerance,
                n_max: n,
            },
            indicator: self.greedy_indicator,
            seed,
            basis: self.basis_options(),
        }
    }

    pub fn gradient_config(&self, n: usize, seed: u64) -> GradientConfig {
        GradientConfig {
            basis: self.basis_options(),
            fd_step: self.gradient_fd_step,
            armijo: self.armijo,
            gradient_tol: self.gradient_tol,
            max_descent_iterations: self.gradient_max_descent,
            ..GradientConfig::new(
                StoppingRule {
                    epsilon_tol_min: self.gradient_tolerance,
                    n_max: n,
                },
                seed,
            )
        }
    }

    pub fn metropolis_config(&self, n: usize, seed: u64) -> MetropolisConfig {
        MetropolisConfig {
            pilot_len: self.metropolis_pilot,
            burn_in: self.metropolis_burn_in,
            samples: self.metropolis_samples,
            initial_step: self.metropolis_initial_step,
            likelihood_scale: self.metropolis_likelihood_scale,
            basis: self.basis_options(),
            ..MetropolisConfig::new(n, seed)
        }
    }
}
