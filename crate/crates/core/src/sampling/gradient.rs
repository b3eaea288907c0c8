use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::TrackedBasis;
use super::{SamplingError, SelectionResult, StoppingRule, TrainingMesh};
use crate::optics::{LAMBDA_MAX, LAMBDA_MIN};
use crate::problem::{ParametricProblem, TruthCache};
use crate::rb::{BasisOptions, RbError};

/// Candidates closer than this (nm) to an existing sample are duplicates.
const CANDIDATE_DUPLICATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    /// First trial step length (nm) along the normalized descent direction.
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    /// Descent stops once the accepted step would be shorter than this (nm).
    pub min_step: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            initial_step: 10.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            min_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientConfig {
    pub stop: StoppingRule,
    pub seed: u64,
    pub basis: BasisOptions,
    pub fd_step: f64,
    pub armijo: ArmijoParams,
    pub gradient_tol: f64,
    pub max_descent_iterations: usize,
}

impl GradientConfig {
    pub fn new(stop: StoppingRule, seed: u64) -> Self {
        Self {
            stop,
            seed,
            basis: BasisOptions::default(),
            fd_step: 0.5,
            armijo: ArmijoParams::default(),
            gradient_tol: 1e-8,
            max_descent_iterations: 50,
        }
    }
}

/// One outer iteration of the gradient selector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTrace {
    pub start: f64,
    pub start_objective: f64,
    pub end: f64,
    pub end_objective: f64,
    /// Objective after every accepted descent step.
    pub descent: Vec<f64>,
}

struct Objective<'b, 'a> {
    base: &'b TrackedBasis<'a>,
}

impl Objective<'_, '_> {
    /// J with `lambda` appended, or the unaugmented J when `lambda` adds
    /// nothing to the span.
    fn eval(&self, lambda: f64) -> Result<f64, RbError> {
        if self.base.samples().iter().any(|&s| (s - lambda).abs() <= CANDIDATE_DUPLICATE_TOL) {
            return self.base.objective();
        }
        match self.base.with_candidate(lambda) {
            Ok(tb) => tb.objective(),
            Err(RbError::Dependent { .. } | RbError::Duplicate(_)) => self.base.objective(),
            Err(e) => Err(e),
        }
    }

    fn derivative(&self, lambda: f64, h: f64) -> Result<f64, RbError> {
        let lo = (lambda - h).max(LAMBDA_MIN);
        let hi = (lambda + h).min(LAMBDA_MAX);
        Ok((self.eval(hi)? - self.eval(lo)?) / (hi - lo))
    }

    /// Projected 1D descent with Armijo backtracking. Returns the final
    /// point, its objective, and the accepted objective values.
    fn descend(&self, start: f64, j0: f64, cfg: &GradientConfig) -> Result<(f64, f64, Vec<f64>), RbError> {
        let a = &cfg.armijo;
        let (mut x, mut jx) = (start, j0);
        let mut history = Vec::new();
        for _ in 0..cfg.max_descent_iterations {
            let g = self.derivative(x, cfg.fd_step)?;
            if !(g.abs() > cfg.gradient_tol) {
                break;
            }
            let dir = -g.signum();
            let mut t = a.initial_step;
            let mut accepted = None;
            while t >= a.min_step {
                let trial = (x + t * dir).clamp(LAMBDA_MIN, LAMBDA_MAX);
                let moved = (trial - x).abs();
                if moved < a.min_step {
                    break;
                }
                let jt = self.eval(trial)?;
                if jt <= jx - a.sufficient_decrease * moved * g.abs() {
                    accepted = Some((trial, jt));
                    break;
                }
                t *= a.shrink;
            }
            let Some((xn, jn)) = accepted else { break };
            x = xn;
            jx = jn;
            history.push(jx);
        }
        Ok((x, jx, history))
    }
}

/// Gradient selection. Each iteration starts from the best coarse point and
/// descends the summed relative error over Υ with respect to the new sample.
pub fn gradient_select(
    problem: &ParametricProblem,
    mesh: &TrainingMesh,
    cfg: &GradientConfig,
) -> Result<SelectionResult, SamplingError> {
    gradient_select_traced(problem, mesh, cfg).map(|(r, _)| r)
}

/// As [`gradient_select`], also returning one trace per descent.
pub fn gradient_select_traced(
    problem: &ParametricProblem,
    mesh: &TrainingMesh,
    cfg: &GradientConfig,
) -> Result<(SelectionResult, Vec<GradientTrace>), SamplingError> {
    mesh.validate()?;
    cfg.stop.validate()?;
    if !(cfg.fd_step > 0.0) || !(cfg.armijo.initial_step > 0.0) || !(0.0 < cfg.armijo.shrink && cfg.armijo.shrink < 1.0) {
        return Err(SamplingError::Config("invalid descent parameters".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cache = TruthCache::build(problem, &mesh.upsilon)?;
    let mut options = cfg.basis;
    options.n_max = options.n_max.max(cfg.stop.n_max);
    let mut tb = TrackedBasis::new(problem, &cache, options)?;
    let mut result = SelectionResult::default();
    let mut traces = Vec::new();
    let grid_step = match mesh.upsilon.len() {
        0 | 1 => (LAMBDA_MAX - LAMBDA_MIN) / 49.0,
        n => (LAMBDA_MAX - LAMBDA_MIN) / (n - 1) as f64,
    };

    let first = mesh.xi[rng.gen_range(0..mesh.xi.len())];
    tb.add(first)?;
    result.iterations = 1;
    result.indicators.push(tb.max_error()?);

    let mut previous_start: Option<f64> = None;
    let max_attempts = 3 * cfg.stop.n_max + 10;
    while tb.len() < cfg.stop.n_max
        && result.indicators.last().map_or(true, |&e| e > cfg.stop.epsilon_tol_min)
        && result.iterations < max_attempts
    {
        result.iterations += 1;
        let objective = Objective { base: &tb };
        let mut best: Option<(f64, f64)> = None;
        for &l in &mesh.lambda_coarse {
            if previous_start == Some(l) {
                continue;
            }
            let j = objective.eval(l)?;
            if best.map_or(true, |(_, b)| j < b) {
                best = Some((l, j));
            }
        }
        let Some((x0, j0)) = best else {
            result.warnings.push("no admissible start point".into());
            break;
        };
        let (x, jx, descent) = objective.descend(x0, j0, cfg)?;
        traces.push(GradientTrace {
            start: x0,
            start_objective: j0,
            end: x,
            end_objective: jx,
            descent,
        });
        previous_start = Some(x0);

        let mut added = false;
        for candidate in [x, (x + grid_step).min(LAMBDA_MAX)] {
            if tb.samples().iter().any(|&s| (s - candidate).abs() <= CANDIDATE_DUPLICATE_TOL) {
                continue;
            }
            match tb.add(candidate) {
                Ok(()) => {
                    added = true;
                    break;
                }
                Err(RbError::Dependent { .. } | RbError::Duplicate(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        if !added {
            log::info!("gradient: skipping iteration, candidate {x} nm adds nothing");
            result.warnings.push(format!("skipped candidate {x} nm"));
            continue;
        }
        result.indicators.push(tb.max_error()?);
    }

    result.samples = tb.samples().to_vec();
    result.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok((result, traces))
}
