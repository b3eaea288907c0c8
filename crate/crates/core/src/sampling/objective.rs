use std::sync::Arc;

use nalgebra::DVector;

use crate::problem::{ParametricProblem, TruthCache};
use crate::rb::{BasisOptions, RbError, ReducedBasis};

/// A reduced basis paired with cached truth solutions on a test mesh, so the
/// summed relative error J = Σ_Υ ‖u − u_N‖/‖u‖ costs no truth solves beyond
/// the snapshot itself.
///
/// Errors are evaluated as eᵀXe with Xe = Xu − Σ ĉ_j Xζ_j formed explicitly,
/// which stays accurate when the error is many orders below ‖u‖.
#[derive(Debug, Clone)]
pub struct TrackedBasis<'a> {
    problem: &'a ParametricProblem,
    cache: &'a TruthCache,
    truth_images: Arc<Vec<DVector<f64>>>,
    rb: ReducedBasis,
    basis_images: Vec<DVector<f64>>,
}

impl<'a> TrackedBasis<'a> {
    pub fn new(
        problem: &'a ParametricProblem,
        cache: &'a TruthCache,
        options: BasisOptions,
    ) -> Result<Self, RbError> {
        let gram = &problem.blocks().gram;
        let truth_images = (0..cache.len()).map(|k| gram.mul_vec(cache.solution(k))).collect();
        Ok(Self {
            problem,
            cache,
            truth_images: Arc::new(truth_images),
            rb: ReducedBasis::new(problem, options)?,
            basis_images: Vec::new(),
        })
    }

    /// The same test mesh and cached images with an empty basis.
    pub fn cleared(&self) -> Result<Self, RbError> {
        Ok(Self {
            problem: self.problem,
            cache: self.cache,
            truth_images: Arc::clone(&self.truth_images),
            rb: ReducedBasis::new(self.problem, *self.rb.options())?,
            basis_images: Vec::new(),
        })
    }

    pub fn basis(&self) -> &ReducedBasis {
        &self.rb
    }

    pub fn into_basis(self) -> ReducedBasis {
        self.rb
    }

    pub fn len(&self) -> usize {
        self.rb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rb.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        self.rb.samples()
    }

    pub fn add(&mut self, lambda: f64) -> Result<(), RbError> {
        let u = match self.cache.get(lambda) {
            Some(u) => u.clone(),
            None => {
                if self.rb.contains(lambda) {
                    return Err(RbError::Duplicate(lambda));
                }
                self.problem.truth(lambda)?
            }
        };
        self.rb.add_snapshot_vector(self.problem, lambda, u)?;
        let zeta = self.rb.basis().last().expect("snapshot just added");
        self.basis_images.push(self.problem.blocks().gram.mul_vec(zeta));
        Ok(())
    }

    /// Copy of this basis with `lambda` appended.
    pub fn with_candidate(&self, lambda: f64) -> Result<Self, RbError> {
        let mut next = self.clone();
        next.add(lambda)?;
        Ok(next)
    }

    /// Relative H1 error at every cached test point.
    pub fn errors(&self) -> Result<Vec<f64>, RbError> {
        (0..self.cache.len()).map(|k| self.error_at(k)).collect()
    }

    fn error_at(&self, k: usize) -> Result<f64, RbError> {
        if self.rb.is_empty() {
            return Ok(1.0);
        }
        let lambda = self.cache.lambdas()[k];
        let sol = self.rb.online_solve(self.problem, lambda)?;
        let mut e = self.cache.solution(k).clone();
        let mut xe = self.truth_images[k].clone();
        for ((c, z), xz) in sol.coefficients.iter().zip(self.rb.basis()).zip(&self.basis_images) {
            e.axpy(-*c, z, 1.0);
            xe.axpy(-*c, xz, 1.0);
        }
        Ok(e.dot(&xe).max(0.0).sqrt() / self.cache.norm(k))
    }

    /// J = Σ relative errors over the cached test points.
    pub fn objective(&self) -> Result<f64, RbError> {
        Ok(self.errors()?.iter().sum())
    }

    pub fn max_error(&self) -> Result<f64, RbError> {
        Ok(self.errors()?.into_iter().fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::SourceSpec;
    use crate::mesh::{generate_mesh, Geometry};
    use crate::optics::CoefficientModel;

    fn problem() -> ParametricProblem {
        let mesh = generate_mesh(&Geometry::default(), 400, 3).unwrap();
        ParametricProblem::from_mesh(&mesh, CoefficientModel::default(), &SourceSpec::default()).unwrap()
    }

    #[test]
    fn matches_direct_relative_error() {
        let p = problem();
        let test = [610.0, 700.0, 777.0, 905.0, 1000.0];
        let cache = TruthCache::build(&p, &test).unwrap();
        let mut tb = TrackedBasis::new(&p, &cache, BasisOptions::default()).unwrap();
        assert_eq!(tb.objective().unwrap(), 5.0);
        for l in [650.0, 700.0, 930.0] {
            tb.add(l).unwrap();
            let fast = tb.errors().unwrap();
            for (k, &lam) in test.iter().enumerate() {
                let direct = tb.basis().relative_error_against(&p, lam, cache.solution(k)).unwrap();
                assert!((fast[k] - direct).abs() <= 1e-9 * direct.max(1e-6), "{lam}: {} vs {direct}", fast[k]);
            }
        }
        // 700 is both a sample and a test point.
        assert!(tb.errors().unwrap()[1] < 1e-9);
    }

    #[test]
    fn candidate_does_not_mutate() {
        let p = problem();
        let cache = TruthCache::build(&p, &[650.0, 850.0]).unwrap();
        let mut tb = TrackedBasis::new(&p, &cache, BasisOptions::default()).unwrap();
        tb.add(700.0).unwrap();
        let before = tb.objective().unwrap();
        let with = tb.with_candidate(850.0).unwrap();
        assert_eq!(tb.len(), 1);
        assert_eq!(with.len(), 2);
        assert!(with.objective().unwrap() < before);
        assert!(matches!(tb.with_candidate(700.0), Err(RbError::Duplicate(_))));
    }
}
