use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::objective::TrackedBasis;
use super::{SamplingError, SelectionResult, TrainingMesh};
use crate::optics::{LAMBDA_MAX, LAMBDA_MIN};
use crate::problem::{ParametricProblem, TruthCache};
use crate::rb::{BasisOptions, RbError};

const ACCEPTANCE_WINDOW: (f64, f64) = (0.05, 0.7);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetropolisConfig {
    pub n_target: usize,
    pub pilot_len: usize,
    pub burn_in: usize,
    pub samples: usize,
    /// Proposal standard deviation (nm) during the pilot phase.
    pub initial_step: f64,
    pub rng_seed: u64,
    /// The log-posterior is −J / likelihood_scale; 1 is the plain
    /// exp(−J) noise density.
    pub likelihood_scale: f64,
    pub basis: BasisOptions,
}

impl MetropolisConfig {
    pub fn new(n_target: usize, rng_seed: u64) -> Self {
        Self {
            n_target,
            pilot_len: 500,
            burn_in: 500,
            samples: 2000,
            initial_step: 20.0,
            rng_seed,
            likelihood_scale: 1.0,
            basis: BasisOptions::default(),
        }
    }

    pub fn validate(&self, mesh: &TrainingMesh) -> Result<(), SamplingError> {
        if self.n_target == 0 || self.pilot_len == 0 || self.burn_in == 0 || self.samples == 0 {
            return Err(SamplingError::Config("Metropolis counts must be >= 1".into()));
        }
        if !(self.initial_step > 0.0) || !(self.likelihood_scale > 0.0) {
            return Err(SamplingError::Config(
                "initial_step and likelihood_scale must be positive".into(),
            ));
        }
        if self.n_target > mesh.upsilon.len() {
            return Err(SamplingError::Config(format!(
                "n_target {} exceeds |Υ| = {}",
                self.n_target,
                mesh.upsilon.len()
            )));
        }
        Ok(())
    }
}

fn in_support(x: &DVector<f64>) -> bool {
    x[0] >= LAMBDA_MIN
        && x[x.len() - 1] <= LAMBDA_MAX
        && x.as_slice().windows(2).all(|w| w[0] < w[1])
}

fn log_posterior(empty: &TrackedBasis<'_>, x: &DVector<f64>, scale: f64) -> Result<f64, RbError> {
    if !in_support(x) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut tb = empty.cleared()?;
    for &l in x.iter() {
        match tb.add(l) {
            Ok(()) | Err(RbError::Dependent { .. } | RbError::Duplicate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(-tb.objective()? / scale)
}

fn covariance(states: &[DVector<f64>]) -> DMatrix<f64> {
    let n = states[0].len();
    let m = states.len() as f64;
    let mean = states.iter().fold(DVector::zeros(n), |acc, s| acc + s) / m;
    let mut cov = DMatrix::zeros(n, n);
    for s in states {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    cov / (m - 1.0).max(1.0)
}

/// Random-walk Metropolis over ordered N-tuples of wavelengths. The proposal
/// covariance is adapted once from the pilot phase and then frozen; the
/// estimate is the mean of the retained states.
pub fn metropolis_select(
    problem: &ParametricProblem,
    mesh: &TrainingMesh,
    cfg: &MetropolisConfig,
) -> Result<SelectionResult, SamplingError> {
    mesh.validate()?;
    cfg.validate(mesh)?;
    let start = Instant::now();
    let n = cfg.n_target;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let cache = TruthCache::build(problem, &mesh.upsilon)?;
    let mut options = cfg.basis;
    options.n_max = options.n_max.max(n);
    let empty = TrackedBasis::new(problem, &cache, options)?;

    let width = LAMBDA_MAX - LAMBDA_MIN;
    let mut x = DVector::from_fn(n, |i, _| LAMBDA_MIN + (i + 1) as f64 * width / (n + 1) as f64);
    let mut lp = log_posterior(&empty, &x, cfg.likelihood_scale)?;
    let mut chol = DMatrix::identity(n, n) * cfg.initial_step;
    let mut pilot = Vec::with_capacity(cfg.pilot_len);
    let mut retained_sum = DVector::zeros(n);
    let mut retained_accepts = 0usize;
    let mut result = SelectionResult::default();
    let total = cfg.pilot_len + cfg.burn_in + cfg.samples;

    for it in 0..total {
        if it == cfg.pilot_len {
            let c = covariance(&pilot) * (2.38 * 2.38 / n as f64) + DMatrix::identity(n, n) * 1e-6;
            chol = c
                .cholesky()
                .map(|ch| ch.l())
                .ok_or_else(|| SamplingError::Config("adapted covariance is not positive definite".into()))?;
        }
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let proposal = &x + &chol * z;
        let u: f64 = rng.gen();
        let mut accepted = false;
        if in_support(&proposal) {
            let lp_new = log_posterior(&empty, &proposal, cfg.likelihood_scale)?;
            if u.ln() < lp_new - lp {
                x = proposal;
                lp = lp_new;
                accepted = true;
            }
        }
        result.indicators.push(lp);
        if it < cfg.pilot_len {
            pilot.push(x.clone());
        } else if it >= cfg.pilot_len + cfg.burn_in {
            retained_sum += &x;
            retained_accepts += accepted as usize;
        }
    }

    let rate = retained_accepts as f64 / cfg.samples as f64;
    if !(ACCEPTANCE_WINDOW.0..=ACCEPTANCE_WINDOW.1).contains(&rate) {
        let msg = format!("acceptance rate {rate:.3} outside [{}, {}]", ACCEPTANCE_WINDOW.0, ACCEPTANCE_WINDOW.1);
        log::warn!("metropolis (N = {n}): {msg}");
        result.warnings.push(msg);
    }
    let mut samples: Vec<f64> = (retained_sum / cfg.samples as f64).iter().copied().collect();
    samples.sort_by(f64::total_cmp);
    result.samples = samples;
    result.iterations = total;
    result.acceptance_rate = Some(rate);
    result.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}
