//! Selection of the basis-generating wavelengths.
//!
//! All four selectors return a [`SelectionResult`] whose sample set lies in
//! the parameter interval with pairwise-distinct entries.

mod gradient;
mod greedy;
mod log_spacing;
mod metropolis;
mod objective;

pub use gradient::{gradient_select, gradient_select_traced, ArmijoParams, GradientConfig, GradientTrace};
pub use greedy::{greedy_select, output_bound_indicator, GreedyConfig, Indicator};
pub use log_spacing::{log_spacing_select, log_spacing_wavelengths, DEFAULT_SIGMA_BAR};
pub use metropolis::{metropolis_select, MetropolisConfig};
pub use objective::TrackedBasis;

use thiserror::Error;

use crate::optics::{LAMBDA_MAX, LAMBDA_MIN};
use crate::rb::RbError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("indicator undefined at {lambda} nm: reduced output {output:e} is not positive")]
    IndicatorUndefined { lambda: f64, output: f64 },
    #[error(transparent)]
    Rb(#[from] RbError),
}

/// Evenly spaced points including both endpoints; a single point sits at `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Parameter meshes: Ξ for greedy search, Υ for the objective, Λ for
/// gradient start points.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMesh {
    pub xi: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub lambda_coarse: Vec<f64>,
}

impl Default for TrainingMesh {
    fn default() -> Self {
        Self::uniform(400, 50, 9)
    }
}

impl TrainingMesh {
    pub fn uniform(n_xi: usize, n_upsilon: usize, n_coarse: usize) -> Self {
        Self {
            xi: linspace(LAMBDA_MIN, LAMBDA_MAX, n_xi),
            upsilon: linspace(LAMBDA_MIN, LAMBDA_MAX, n_upsilon),
            lambda_coarse: linspace(LAMBDA_MIN, LAMBDA_MAX, n_coarse),
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let in_range = |v: &[f64]| v.iter().all(|l| (LAMBDA_MIN..=LAMBDA_MAX).contains(l));
        if !(in_range(&self.xi) && in_range(&self.upsilon) && in_range(&self.lambda_coarse)) {
            return Err(SamplingError::Config(
                "training points must lie in [600, 1000]".into(),
            ));
        }
        if self.xi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SamplingError::Config("Ξ must be strictly increasing".into()));
        }
        if self.xi.is_empty() || self.upsilon.is_empty() || self.lambda_coarse.is_empty() {
            return Err(SamplingError::Config("training meshes must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub epsilon_tol_min: f64,
    pub n_max: usize,
}

impl StoppingRule {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if !(self.epsilon_tol_min > 0.0) || self.n_max == 0 {
            return Err(SamplingError::Config(format!(
                "stopping rule needs epsilon_tol_min > 0 and n_max >= 1 (got {}, {})",
                self.epsilon_tol_min, self.n_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionResult {
    pub samples: Vec<f64>,
    /// Per-iteration indicator: max greedy indicator, gradient objective at
    /// the accepted point, or the Metropolis log-posterior of the estimate.
    pub indicators: Vec<f64>,
    pub wall_clock_seconds: f64,
    pub iterations: usize,
    pub acceptance_rate: Option<f64>,
    pub warnings: Vec<String>,
}
