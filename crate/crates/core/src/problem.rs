//! The parametric truth problem: affine blocks plus load, the coefficient
//! model, and reusable factorizations.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::fem::{self, AffineBlocks, FemError, SourceSpec};
use crate::mesh::TriMesh;
use crate::optics::{CoefficientModel, OpticsError, Theta};
use crate::rb::RbError;
use crate::sparse::{SpdFactor, SpdSymbolic, SymmetricMatrix};

/// Everything the reduced basis engine needs from the full-order model.
/// Immutable after construction and shareable across threads.
#[derive(Debug, Clone)]
pub struct ParametricProblem {
    blocks: AffineBlocks,
    model: CoefficientModel,
    symbolic: SpdSymbolic,
    gram_factor: SpdFactor,
}

impl ParametricProblem {
    pub fn new(blocks: AffineBlocks, model: CoefficientModel) -> Result<Self, FemError> {
        let symbolic = SpdSymbolic::analyze(&blocks.gram);
        let gram_factor = symbolic.factor(&blocks.gram)?;
        Ok(Self {
            blocks,
            model,
            symbolic,
            gram_factor,
        })
    }

    /// Assembles blocks and the boundary load (source snapped onto the
    /// nearest boundary vertex) for `mesh`.
    pub fn from_mesh(
        mesh: &TriMesh,
        model: CoefficientModel,
        source: &SourceSpec,
    ) -> Result<Self, FemError> {
        let source = source.snapped_to(mesh);
        let blocks = fem::assemble_affine_blocks(mesh)?.with_load(fem::assemble_load(mesh, &source));
        Self::new(blocks, model)
    }

    pub fn blocks(&self) -> &AffineBlocks {
        &self.blocks
    }

    pub fn model(&self) -> &CoefficientModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.blocks.dim()
    }

    pub fn load(&self) -> &DVector<f64> {
        &self.blocks.load
    }

    pub fn theta(&self, lambda: f64) -> Result<Theta, OpticsError> {
        self.model.theta(lambda)
    }

    /// Lower bound of the coercivity constant: min_q Θ^q(λ).
    pub fn alpha_lower_bound(&self, lambda: f64) -> Result<f64, OpticsError> {
        Ok(self.theta(lambda)?.min())
    }

    pub fn operator(&self, lambda: f64) -> Result<SymmetricMatrix, OpticsError> {
        Ok(self.blocks.combine(&self.theta(lambda)?))
    }

    /// Truth solution u^fe(λ), reusing the symbolic factorization.
    pub fn truth(&self, lambda: f64) -> Result<DVector<f64>, RbError> {
        let theta = self.theta(lambda)?;
        if !theta.is_positive() {
            return Err(FemError::NotPositive(theta).into());
        }
        let a = self.blocks.combine(&theta);
        let factor = self.symbolic.factor(&a).map_err(FemError::from)?;
        Ok(fem::solve_checked(&a, &factor, &self.blocks.load)?)
    }

    /// Riesz representer X⁻¹ r of a residual vector.
    pub fn riesz(&self, residual: &DVector<f64>) -> Result<DVector<f64>, FemError> {
        Ok(self.gram_factor.solve(residual)?)
    }

    /// sqrt(rᵀ X⁻¹ r).
    pub fn dual_norm(&self, residual: &DVector<f64>) -> Result<f64, FemError> {
        let e = self.riesz(residual)?;
        Ok(residual.dot(&e).max(0.0).sqrt())
    }

    pub fn h1_norm(&self, u: &DVector<f64>) -> f64 {
        self.blocks.gram.bilinear(u, u).max(0.0).sqrt()
    }
}

/// Truth solutions precomputed at a fixed list of wavelengths.
#[derive(Debug, Clone)]
pub struct TruthCache {
    lambdas: Vec<f64>,
    solutions: Vec<DVector<f64>>,
    norms: Vec<f64>,
    index: HashMap<u64, usize>,
}

impl TruthCache {
    pub fn build(problem: &ParametricProblem, lambdas: &[f64]) -> Result<Self, RbError> {
        let mut solutions = Vec::with_capacity(lambdas.len());
        let mut norms = Vec::with_capacity(lambdas.len());
        let mut index = HashMap::with_capacity(lambdas.len());
        for (k, &lambda) in lambdas.iter().enumerate() {
            let u = problem.truth(lambda)?;
            norms.push(problem.h1_norm(&u));
            solutions.push(u);
            index.insert(lambda.to_bits(), k);
        }
        Ok(Self {
            lambdas: lambdas.to_vec(),
            solutions,
            norms,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn solution(&self, k: usize) -> &DVector<f64> {
        &self.solutions[k]
    }

    pub fn norm(&self, k: usize) -> f64 {
        self.norms[k]
    }

    pub fn get(&self, lambda: f64) -> Option<&DVector<f64>> {
        self.index.get(&lambda.to_bits()).map(|&k| &self.solutions[k])
    }
}
