use std::time::Instant;

use super::{SamplingError, SelectionResult};
use crate::optics::{LAMBDA_MAX, LAMBDA_MIN};

pub const DEFAULT_SIGMA_BAR: f64 = 5.5e4;

/// Points satisfying ln(σ̄(λ_k − λ_min) + 1) = (k−1)/(n−1) · ln(σ̄(λ_max − λ_min) + 1).
pub fn log_spacing_wavelengths(n: usize, sigma_bar: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![LAMBDA_MIN],
        _ => {
            let top = (sigma_bar * (LAMBDA_MAX - LAMBDA_MIN)).ln_1p();
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        return LAMBDA_MAX;
                    }
                    let t = k as f64 / (n - 1) as f64;
                    LAMBDA_MIN + (t * top).exp_m1() / sigma_bar
                })
                .collect()
        }
    }
}

pub fn log_spacing_select(n: usize, sigma_bar: f64) -> Result<SelectionResult, SamplingError> {
    if n == 0 || !(sigma_bar > 0.0) {
        return Err(SamplingError::Config(format!(
            "log spacing needs n >= 1 and sigma_bar > 0 (got {n}, {sigma_bar})"
        )));
    }
    let start = Instant::now();
    let samples = log_spacing_wavelengths(n, sigma_bar);
    Ok(SelectionResult {
        iterations: samples.len(),
        samples,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        ..SelectionResult::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        for n in 2..25 {
            let l = log_spacing_wavelengths(n, DEFAULT_SIGMA_BAR);
            assert_eq!(l[0], 600.0);
            assert_eq!(l[n - 1], 1000.0);
            assert!(l.windows(2).all(|w| w[1] > w[0]), "n = {n}: {l:?}");
        }
    }

    #[test]
    fn three_points_cluster_near_lower_end() {
        let l = log_spacing_wavelengths(3, DEFAULT_SIGMA_BAR);
        let expected = 600.0 + ((0.5 * (5.5e4f64 * 400.0 + 1.0).ln()).exp() - 1.0) / 5.5e4;
        assert!((l[1] - expected).abs() < 1e-9);
        assert!((l[1] - 600.085).abs() < 1e-3);
    }

    #[test]
    fn single_point_convention() {
        assert_eq!(log_spacing_select(1, DEFAULT_SIGMA_BAR).unwrap().samples, vec![600.0]);
    }
}
