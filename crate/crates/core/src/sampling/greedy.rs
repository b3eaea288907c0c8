use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SamplingError, SelectionResult, StoppingRule, TrainingMesh};
use crate::problem::ParametricProblem;
use crate::rb::{BasisOptions, RbError, ReducedBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Indicator {
    /// Dual norm of the residual.
    #[default]
    DualNorm,
    /// Compliant output bound ε²/(α̂ s_N).
    OutputBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyConfig {
    pub stop: StoppingRule,
    pub indicator: Indicator,
    pub seed: u64,
    pub basis: BasisOptions,
}

/// ε²(λ) / (α̂(λ) s_N(λ)) with α̂ = min_q Θ^q.
pub fn output_bound_indicator(
    rb: &ReducedBasis,
    problem: &ParametricProblem,
    lambda: f64,
) -> Result<f64, SamplingError> {
    let eps = rb.residual_dual_norm(problem, lambda)?;
    let alpha = problem.alpha_lower_bound(lambda).map_err(RbError::from)?;
    let output = rb.output(problem, lambda)?;
    if !(output > 0.0) {
        return Err(SamplingError::IndicatorUndefined { lambda, output });
    }
    Ok(eps * eps / (alpha * output))
}

fn indicator_value(
    indicator: Indicator,
    rb: &ReducedBasis,
    problem: &ParametricProblem,
    lambda: f64,
) -> Result<f64, SamplingError> {
    match indicator {
        Indicator::DualNorm => Ok(rb.residual_dual_norm(problem, lambda)?),
        Indicator::OutputBound => output_bound_indicator(rb, problem, lambda),
    }
}

/// Greedy selection over Ξ. The first sample is a seeded uniform draw; each
/// later sample maximizes the indicator, ties going to the smallest λ.
pub fn greedy_select(
    problem: &ParametricProblem,
    mesh: &TrainingMesh,
    cfg: &GreedyConfig,
) -> Result<SelectionResult, SamplingError> {
    mesh.validate()?;
    cfg.stop.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut options = cfg.basis;
    options.n_max = options.n_max.max(cfg.stop.n_max);
    let mut rb = ReducedBasis::new(problem, options)?;
    let mut active = vec![true; mesh.xi.len()];
    let mut result = SelectionResult::default();

    let mut next = rng.gen_range(0..mesh.xi.len());
    loop {
        let lambda = mesh.xi[next];
        active[next] = false;
        match rb.add_snapshot(problem, lambda) {
            Ok(()) => {}
            Err(e @ RbError::Dependent { .. }) => {
                log::info!("greedy: excluding {lambda} nm ({e})");
                result.warnings.push(format!("excluded {lambda} nm: {e}"));
            }
            Err(e) => return Err(e.into()),
        }
        result.iterations += 1;
        if rb.len() >= cfg.stop.n_max {
            break;
        }

        let mut best: Option<(usize, f64)> = None;
        for (i, &l) in mesh.xi.iter().enumerate() {
            if !active[i] {
                continue;
            }
            if rb.is_empty() {
                best.get_or_insert((i, f64::INFINITY));
                continue;
            }
            let value = match indicator_value(cfg.indicator, &rb, problem, l) {
                Ok(v) => v,
                Err(e @ SamplingError::IndicatorUndefined { .. }) => {
                    log::info!("greedy: excluding {l} nm ({e})");
                    result.warnings.push(format!("excluded {l} nm: {e}"));
                    active[i] = false;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if best.map_or(true, |(_, b)| value > b) {
                best = Some((i, value));
            }
        }
        let Some((i, max)) = best else {
            result.warnings.push("training mesh exhausted".into());
            break;
        };
        if max.is_finite() {
            result.indicators.push(max);
            if max <= cfg.stop.epsilon_tol_min {
                break;
            }
        }
        next = i;
    }

    result.samples = rb.samples().to_vec();
    result.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}
