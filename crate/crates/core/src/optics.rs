//! Wavelength-dependent optical coefficients for the two tissue regions.
//!
//! Healthy absorption is a quartic interpolant through five control points
//! plus two Gaussian spikes; the inclusion absorbs `factor · μ_a⁰ + offset`.
//! Diffusion follows D = 1 / (3 (μ_a + μ_s′)).

use thiserror::Error;

pub const LAMBDA_MIN: f64 = 600.0;
pub const LAMBDA_MAX: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("wavelength {0} nm is outside the parameter space [600, 1000]")]
    OutOfRange(f64),
    #[error("region label {0} is not 0 or 1")]
    BadRegion(u8),
    #[error("invalid coefficient model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike {
    pub center: f64,
    pub amplitude: f64,
    /// Standard deviation in nm.
    pub width: f64,
}

impl Spike {
    pub fn eval(&self, lambda: f64) -> f64 {
        let z = (lambda - self.center) / self.width;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

/// The four affine coefficient functions at one wavelength, ordered to match
/// the blocks (healthy stiffness, healthy mass, inclusion stiffness, inclusion mass).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub d0: f64,
    pub mu_a0: f64,
    pub d1: f64,
    pub mu_a1: f64,
}

impl Theta {
    pub fn new(d0: f64, mu_a0: f64, d1: f64, mu_a1: f64) -> Self {
        Self { d0, mu_a0, d1, mu_a1 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.d0, self.mu_a0, self.d1, self.mu_a1]
    }

    pub fn min(&self) -> f64 {
        self.as_array().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self::new(self.d0 * t, self.mu_a0 * t, self.d1 * t, self.mu_a1 * t)
    }

    pub fn is_positive(&self) -> bool {
        self.as_array().iter().all(|&v| v > 0.0 && v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientModel {
    pub control_points: [(f64, f64); 5],
    pub spike1: Spike,
    pub spike2: Spike,
    pub tumor_factor: f64,
    pub tumor_offset: f64,
    pub mu_s_prime: f64,
}

impl Default for CoefficientModel {
    fn default() -> Self {
        Self {
            control_points: [
                (600.0, 0.13),
                (700.0, 0.05),
                (800.0, 0.03),
                (900.0, 0.06),
                (1000.0, 0.12),
            ],
            spike1: Spike {
                center: 725.0,
                amplitude: 0.04,
                width: 15.0,
            },
            spike2: Spike {
                center: 950.0,
                amplitude: 0.06,
                width: 20.0,
            },
            tumor_factor: 2.0,
            tumor_offset: 0.0,
            mu_s_prime: 17.0,
        }
    }
}

impl CoefficientModel {
    /// Checks positivity of μ_s′, and of μ_a⁰ and μ_a¹ − μ_a⁰ on a dense
    /// wavelength sweep.
    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.mu_s_prime > 0.0 && self.mu_s_prime.is_finite()) {
            return Err(OpticsError::InvalidModel(format!(
                "mu_s_prime = {} must be positive",
                self.mu_s_prime
            )));
        }
        for s in [&self.spike1, &self.spike2] {
            if !(s.width > 0.0) {
                return Err(OpticsError::InvalidModel(format!(
                    "spike at {} nm has non-positive width",
                    s.center
                )));
            }
        }
        let xs: Vec<f64> = self.control_points.iter().map(|p| p.0).collect();
        for i in 0..xs.len() {
            for j in 0..i {
                if xs[i] == xs[j] {
                    return Err(OpticsError::InvalidModel(format!(
                        "duplicate control wavelength {}",
                        xs[i]
                    )));
                }
            }
        }
        const SWEEP: usize = 4000;
        for k in 0..=SWEEP {
            let lambda = LAMBDA_MIN + (LAMBDA_MAX - LAMBDA_MIN) * k as f64 / SWEEP as f64;
            let healthy = self.healthy_absorption(lambda);
            let tumor = self.tumor_absorption(healthy);
            if !(healthy > 0.0) {
                return Err(OpticsError::InvalidModel(format!(
                    "healthy absorption {healthy} is not positive at {lambda} nm"
                )));
            }
            if !(tumor > healthy) {
                return Err(OpticsError::InvalidModel(format!(
                    "inclusion absorption {tumor} does not exceed healthy {healthy} at {lambda} nm"
                )));
            }
        }
        Ok(())
    }

    /// Lagrange form of the quartic through the control points.
    pub fn quartic(&self, lambda: f64) -> f64 {
        let pts = &self.control_points;
        let mut sum = 0.0;
        for (i, &(xi, yi)) in pts.iter().enumerate() {
            let mut basis = 1.0;
            for (j, &(xj, _)) in pts.iter().enumerate() {
                if i != j {
                    basis *= (lambda - xj) / (xi - xj);
                }
            }
            sum += yi * basis;
        }
        sum
    }

    fn healthy_absorption(&self, lambda: f64) -> f64 {
        self.quartic(lambda) + self.spike1.eval(lambda) + self.spike2.eval(lambda)
    }

    fn tumor_absorption(&self, healthy: f64) -> f64 {
        self.tumor_factor * healthy + self.tumor_offset
    }

    pub fn mu_a(&self, lambda: f64, region: u8) -> Result<f64, OpticsError> {
        check_lambda(lambda)?;
        let healthy = self.healthy_absorption(lambda);
        match region {
            0 => Ok(healthy),
            1 => Ok(self.tumor_absorption(healthy)),
            r => Err(OpticsError::BadRegion(r)),
        }
    }

    pub fn diffusion(&self, lambda: f64, region: u8) -> Result<f64, OpticsError> {
        let mu_a = self.mu_a(lambda, region)?;
        Ok(diffusion_coefficient(mu_a, self.mu_s_prime))
    }

    pub fn theta(&self, lambda: f64) -> Result<Theta, OpticsError> {
        let mu_a0 = self.mu_a(lambda, 0)?;
        let mu_a1 = self.mu_a(lambda, 1)?;
        Ok(Theta {
            d0: diffusion_coefficient(mu_a0, self.mu_s_prime),
            mu_a0,
            d1: diffusion_coefficient(mu_a1, self.mu_s_prime),
            mu_a1,
        })
    }
}

pub fn diffusion_coefficient(mu_a: f64, mu_s_prime: f64) -> f64 {
    1.0 / (3.0 * (mu_a + mu_s_prime))
}

pub fn check_lambda(lambda: f64) -> Result<(), OpticsError> {
    if (LAMBDA_MIN..=LAMBDA_MAX).contains(&lambda) {
        Ok(())
    } else {
        Err(OpticsError::OutOfRange(lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_valid() {
        CoefficientModel::default().validate().unwrap();
    }

    #[test]
    fn control_node_value_is_reproduced() {
        let m = CoefficientModel::default();
        // Spike tails contribute ~1.5e-7 at 800 nm.
        assert!((m.mu_a(800.0, 0).unwrap() - 0.03).abs() < 1e-6);
        for &(x, y) in &m.control_points {
            assert!((m.quartic(x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spike_peak_at_725() {
        let m = CoefficientModel::default();
        // Independent evaluation: Newton divided differences for the quartic.
        let xs = [600.0, 700.0, 800.0, 900.0, 1000.0];
        let mut coef = [0.13, 0.05, 0.03, 0.06, 0.12];
        for level in 1..5 {
            for i in (level..5).rev() {
                coef[i] = (coef[i] - coef[i - 1]) / (xs[i] - xs[i - level]);
            }
        }
        let x = 725.0;
        let mut q = coef[4];
        for i in (0..4).rev() {
            q = q * (x - xs[i]) + coef[i];
        }
        let tail = 0.06 * (-0.5 * (225.0f64 / 20.0).powi(2)).exp();
        let expected = q + 0.04 + tail;
        assert!((m.mu_a(725.0, 0).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn inclusion_absorbs_more_and_diffuses_less() {
        let m = CoefficientModel::default();
        for k in 0..20 {
            let lambda = 600.0 + 400.0 * (k as f64 + 0.5) / 20.0;
            assert!(m.mu_a(lambda, 1).unwrap() > m.mu_a(lambda, 0).unwrap());
            let (d0, d1) = (
                m.diffusion(lambda, 0).unwrap(),
                m.diffusion(lambda, 1).unwrap(),
            );
            assert!(d1 < d0);
            assert!(d0 > 0.0 && d0 <= 1.0 / 51.0);
        }
    }

    #[test]
    fn diffusion_formula() {
        assert!((diffusion_coefficient(0.03, 17.0) - 1.0 / (3.0 * 17.03)).abs() < 1e-15);
        assert!((diffusion_coefficient(0.03, 17.0) - 0.019573).abs() < 1e-6);
    }

    #[test]
    fn theta_at_800_and_positivity() {
        let m = CoefficientModel::default();
        let th = m.theta(800.0).unwrap();
        let mu0 = m.mu_a(800.0, 0).unwrap();
        assert_eq!(th.mu_a0, mu0);
        assert!((th.d0 - 1.0 / (3.0 * (mu0 + 17.0))).abs() < 1e-16);
        assert_eq!(th.mu_a1, 2.0 * mu0);
        assert_eq!(th.d1, diffusion_coefficient(2.0 * mu0, 17.0));
        for k in 0..=400 {
            assert!(m.theta(600.0 + k as f64).unwrap().is_positive());
        }
    }

    #[test]
    fn theta_is_continuous() {
        let m = CoefficientModel::default();
        let h = 1e-3;
        let mut lambda = 600.0;
        while lambda + h <= 1000.0 {
            let a = m.theta(lambda).unwrap().as_array();
            let b = m.theta(lambda + h).unwrap().as_array();
            for q in 0..4 {
                assert!((a[q] - b[q]).abs() < 1e-4, "jump at {lambda}");
            }
            lambda += 0.37;
        }
    }

    #[test]
    fn out_of_range_and_bad_region() {
        let m = CoefficientModel::default();
        assert_eq!(m.mu_a(599.0, 0), Err(OpticsError::OutOfRange(599.0)));
        assert_eq!(m.theta(1000.5), Err(OpticsError::OutOfRange(1000.5)));
        assert_eq!(m.mu_a(700.0, 2), Err(OpticsError::BadRegion(2)));
    }

    #[test]
    fn non_positive_perturbation_fails_validation() {
        let m = CoefficientModel {
            tumor_factor: 0.5,
            ..CoefficientModel::default()
        };
        assert!(matches!(m.validate(), Err(OpticsError::InvalidModel(_))));
    }
}
