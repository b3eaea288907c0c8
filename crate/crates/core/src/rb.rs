//! Reduced basis engine: snapshot management with Gram-Schmidt in the
//! energy inner product of a reference wavelength, incrementally projected
//! affine blocks, online solves and error measures.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::fem::FemError;
use crate::optics::{check_lambda, OpticsError};
use crate::problem::{ParametricProblem, TruthCache};
use crate::sparse::SymmetricMatrix;

/// Two samples closer than this (nm) are the same wavelength.
pub const DUPLICATE_TOL: f64 = 1e-9;
/// Post-orthogonalization norm below this fraction of the original norm
/// means the snapshot adds nothing to the span.
pub const DEPENDENCE_TOL: f64 = 1e-10;
/// Projected systems with a larger condition estimate are rejected.
pub const MAX_CONDITION: f64 = 1e15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbError {
    #[error("wavelength {0} nm is already in the sample set")]
    Duplicate(f64),
    #[error("snapshot at {lambda} nm is linearly dependent (relative residual norm {ratio:e})")]
    Dependent { lambda: f64, ratio: f64 },
    #[error("basis is full (N_max = {0})")]
    Full(usize),
    #[error("operation needs a nonempty basis")]
    EmptyBasis,
    #[error("projected system is singular (condition estimate {0:e})")]
    Conditioning(f64),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisOptions {
    /// Wavelength whose energy inner product orthogonalizes the basis.
    pub reference_lambda: f64,
    /// When false, raw snapshots are stored (conditioning experiments only).
    pub orthogonalize: bool,
    pub n_max: usize,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            reference_lambda: 800.0,
            orthogonalize: true,
            n_max: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbSolution {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct ReducedBasis {
    options: BasisOptions,
    reference: Arc<SymmetricMatrix>,
    samples: Vec<f64>,
    basis: Vec<DVector<f64>>,
    /// M_ref ζ_j, kept for modified Gram-Schmidt.
    reference_images: Vec<DVector<f64>>,
    projected: [DMatrix<f64>; 4],
    projected_load: DVector<f64>,
}

impl ReducedBasis {
    pub fn new(problem: &ParametricProblem, options: BasisOptions) -> Result<Self, RbError> {
        let reference = Arc::new(problem.operator(options.reference_lambda)?);
        Ok(Self {
            options,
            reference,
            samples: Vec::new(),
            basis: Vec::new(),
            reference_images: Vec::new(),
            projected: std::array::from_fn(|_| DMatrix::zeros(0, 0)),
            projected_load: DVector::zeros(0),
        })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn options(&self) -> &BasisOptions {
        &self.options
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    pub fn projected_blocks(&self) -> &[DMatrix<f64>; 4] {
        &self.projected
    }

    pub fn projected_load(&self) -> &DVector<f64> {
        &self.projected_load
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.samples.iter().any(|&s| (s - lambda).abs() <= DUPLICATE_TOL)
    }

    /// Solves the truth problem at `lambda` and appends the snapshot.
    pub fn add_snapshot(&mut self, problem: &ParametricProblem, lambda: f64) -> Result<(), RbError> {
        self.check_new(lambda)?;
        let u = problem.truth(lambda)?;
        self.add_snapshot_vector(problem, lambda, u)
    }

    /// Appends an already computed truth solution for `lambda`.
    pub fn add_snapshot_vector(
        &mut self,
        problem: &ParametricProblem,
        lambda: f64,
        snapshot: DVector<f64>,
    ) -> Result<(), RbError> {
        self.check_new(lambda)?;
        problem.blocks().check_dim(&snapshot)?;
        let (zeta, image) = if self.options.orthogonalize {
            self.orthogonalize(lambda, snapshot)?
        } else {
            let image = self.reference.mul_vec(&snapshot);
            (snapshot, image)
        };
        self.append(problem, lambda, zeta, image);
        Ok(())
    }

    fn check_new(&self, lambda: f64) -> Result<(), RbError> {
        check_lambda(lambda)?;
        if self.contains(lambda) {
            return Err(RbError::Duplicate(lambda));
        }
        if self.len() >= self.options.n_max {
            return Err(RbError::Full(self.options.n_max));
        }
        Ok(())
    }

    /// Modified Gram-Schmidt against the current basis with one
    /// reorthogonalization pass.
    fn orthogonalize(
        &self,
        lambda: f64,
        mut u: DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), RbError> {
        let pre = self.reference.bilinear(&u, &u).max(0.0).sqrt();
        if pre == 0.0 {
            return Err(RbError::Dependent { lambda, ratio: 0.0 });
        }
        for _pass in 0..2 {
            for (zeta, image) in self.basis.iter().zip(&self.reference_images) {
                let c = image.dot(&u);
                u.axpy(-c, zeta, 1.0);
            }
        }
        let image = self.reference.mul_vec(&u);
        let post = u.dot(&image).max(0.0).sqrt();
        let ratio = post / pre;
        if ratio < DEPENDENCE_TOL {
            return Err(RbError::Dependent { lambda, ratio });
        }
        Ok((u / post, image / post))
    }

    fn append(
        &mut self,
        problem: &ParametricProblem,
        lambda: f64,
        zeta: DVector<f64>,
        image: DVector<f64>,
    ) {
        let n = self.len();
        for (q, block) in problem.blocks().blocks().into_iter().enumerate() {
            let w = block.mul_vec(&zeta);
            let mut grown = std::mem::replace(&mut self.projected[q], DMatrix::zeros(0, 0))
                .resize(n + 1, n + 1, 0.0);
            for (i, z) in self.basis.iter().enumerate() {
                let v = z.dot(&w);
                grown[(i, n)] = v;
                grown[(n, i)] = v;
            }
            grown[(n, n)] = zeta.dot(&w);
            self.projected[q] = grown;
        }
        let f_new = zeta.dot(problem.load());
        self.projected_load = std::mem::replace(&mut self.projected_load, DVector::zeros(0))
            .resize_vertically(n + 1, 0.0);
        self.projected_load[n] = f_new;
        self.samples.push(lambda);
        self.basis.push(zeta);
        self.reference_images.push(image);
    }

    /// Â(λ) = Σ_q Θ^q(λ) Â^q.
    pub fn projected_matrix(
        &self,
        problem: &ParametricProblem,
        lambda: f64,
    ) -> Result<DMatrix<f64>, RbError> {
        let theta = problem.theta(lambda)?.as_array();
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for (w, block) in theta.iter().zip(&self.projected) {
            a += block * *w;
        }
        Ok(a)
    }

    /// 2-norm condition number of the projected matrix.
    pub fn condition_number(&self, problem: &ParametricProblem, lambda: f64) -> Result<f64, RbError> {
        if self.is_empty() {
            return Err(RbError::EmptyBasis);
        }
        Ok(condition_number(&self.projected_matrix(problem, lambda)?))
    }

    pub fn online_solve(&self, problem: &ParametricProblem, lambda: f64) -> Result<RbSolution, RbError> {
        if self.is_empty() {
            return Err(RbError::EmptyBasis);
        }
        let a = self.projected_matrix(problem, lambda)?;
        let coefficients = solve_small(a, &self.projected_load)?;
        Ok(RbSolution {
            coefficients,
            lambda,
        })
    }

    /// u_N = Σ ĉ_j ζ_j.
    pub fn reconstruct(&self, sol: &RbSolution) -> DVector<f64> {
        assert_eq!(sol.coefficients.len(), self.len(), "coefficient length");
        let dim = self.basis.first().map_or(0, |z| z.len());
        let mut u = DVector::zeros(dim);
        for (c, z) in sol.coefficients.iter().zip(&self.basis) {
            u.axpy(*c, z, 1.0);
        }
        u
    }

    /// u_N(λ) as a full vector; zero for an empty basis.
    pub fn approximation(&self, problem: &ParametricProblem, lambda: f64) -> Result<DVector<f64>, RbError> {
        if self.is_empty() {
            check_lambda(lambda)?;
            return Ok(DVector::zeros(problem.dim()));
        }
        Ok(self.reconstruct(&self.online_solve(problem, lambda)?))
    }

    /// ‖u^fe(λ) − u_N(λ)‖_H1 / ‖u^fe(λ)‖_H1 (one truth solve).
    pub fn relative_error(&self, problem: &ParametricProblem, lambda: f64) -> Result<f64, RbError> {
        let truth = problem.truth(lambda)?;
        self.relative_error_against(problem, lambda, &truth)
    }

    /// Same as [`relative_error`](Self::relative_error) with a known truth solution.
    pub fn relative_error_against(
        &self,
        problem: &ParametricProblem,
        lambda: f64,
        truth: &DVector<f64>,
    ) -> Result<f64, RbError> {
        if self.is_empty() {
            check_lambda(lambda)?;
            return Ok(1.0);
        }
        let approx = self.approximation(problem, lambda)?;
        let diff = truth - approx;
        Ok(problem.h1_norm(&diff) / problem.h1_norm(truth))
    }

    /// ‖u^fe(λ) − u_N(λ)‖_H1 with a known truth solution.
    pub fn absolute_error_against(
        &self,
        problem: &ParametricProblem,
        lambda: f64,
        truth: &DVector<f64>,
    ) -> Result<f64, RbError> {
        let approx = self.approximation(problem, lambda)?;
        Ok(problem.h1_norm(&(truth - approx)))
    }

    /// Dual norm of the residual r = F − A_λ u_N, via the Riesz representer.
    pub fn residual_dual_norm(&self, problem: &ParametricProblem, lambda: f64) -> Result<f64, RbError> {
        if self.is_empty() {
            return Err(RbError::EmptyBasis);
        }
        let approx = self.approximation(problem, lambda)?;
        let residual = problem.load() - problem.operator(lambda)?.mul_vec(&approx);
        Ok(problem.dual_norm(&residual)?)
    }

    /// Reduced output s_N(λ) = F(u_N(λ)) = F̂ᵀ ĉ.
    pub fn output(&self, problem: &ParametricProblem, lambda: f64) -> Result<f64, RbError> {
        if self.is_empty() {
            check_lambda(lambda)?;
            return Ok(0.0);
        }
        let sol = self.online_solve(problem, lambda)?;
        Ok(self.projected_load.dot(&sol.coefficients))
    }

    pub fn total_relative_error(&self, problem: &ParametricProblem, test_set: &[f64]) -> Result<f64, RbError> {
        test_set
            .iter()
            .map(|&l| self.relative_error(problem, l))
            .sum()
    }

    pub fn total_relative_error_cached(
        &self,
        problem: &ParametricProblem,
        cache: &TruthCache,
    ) -> Result<f64, RbError> {
        (0..cache.len())
            .map(|k| self.relative_error_against(problem, cache.lambdas()[k], cache.solution(k)))
            .sum()
    }

    /// max |ZᵀM_ref Z − I| computed from scratch.
    pub fn orthonormality_defect(&self) -> f64 {
        let images: Vec<DVector<f64>> = self.basis.iter().map(|z| self.reference.mul_vec(z)).collect();
        let mut worst: f64 = 0.0;
        for (i, zi) in self.basis.iter().enumerate() {
            for (j, mj) in images.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((zi.dot(mj) - target).abs());
            }
        }
        worst
    }
}

/// Builds a basis from `lambdas` in order, skipping duplicates and linearly
/// dependent snapshots. Returns the basis and the skipped wavelengths.
pub fn build_basis(
    problem: &ParametricProblem,
    options: BasisOptions,
    lambdas: &[f64],
) -> Result<(ReducedBasis, Vec<f64>), RbError> {
    let mut rb = ReducedBasis::new(problem, options)?;
    let mut skipped = Vec::new();
    for &lambda in lambdas {
        match rb.add_snapshot(problem, lambda) {
            Ok(()) => {}
            Err(RbError::Dependent { .. } | RbError::Duplicate(_)) => {
                log::debug!("skipping snapshot at {lambda} nm");
                skipped.push(lambda);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((rb, skipped))
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn solve_small(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, RbError> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    let cond = condition_number(&a);
    if !(cond < MAX_CONDITION) {
        return Err(RbError::Conditioning(cond));
    }
    a.lu().solve(b).ok_or(RbError::Conditioning(cond))
}
