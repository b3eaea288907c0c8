//! Symmetric sparse matrices sharing one sparsity pattern, plus an SPD
//! direct solver backed by a fill-reducing LDLᵀ factorization.
//!
//! All parameter-independent blocks of the affine decomposition live on the
//! same pattern (the vertex adjacency graph of the mesh), so a parametric
//! matrix Σ θ_q A_q is a value-wise sum and the symbolic factorization can
//! be computed once and reused for every parameter value.

use std::sync::Arc;

use nalgebra::DVector;
use sprs::{CsMat, FillInReduction, PermOwned, SymmetryCheck};
use sprs_ldl::{Ldl, LdlNumeric, LdlSymbolic};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("matrix is not positive definite (pivot {index} = {value:e})")]
    NotPositiveDefinite { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sparsity pattern mismatch")]
    PatternMismatch,
    #[error("factorization failed: {0}")]
    Factorization(String),
}

/// Compressed-row sparsity pattern of a structurally symmetric matrix with
/// sorted column indices in every row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl SparsityPattern {
    /// Builds the pattern containing the diagonal and every pair of vertices
    /// that share an element.
    pub fn from_elements(n: usize, elements: &[[usize; 3]]) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in elements {
            for &a in tri {
                for &b in tri {
                    if a != b {
                        rows[a].push(b);
                    }
                }
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        Self { n, indptr, indices }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Storage offset of entry (row, col), if it is part of the pattern.
    pub fn offset(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.indptr[row];
        let end = self.indptr[row + 1];
        self.indices[start..end]
            .binary_search(&col)
            .ok()
            .map(|k| start + k)
    }

    pub fn row(&self, row: usize) -> (&[usize], std::ops::Range<usize>) {
        let range = self.indptr[row]..self.indptr[row + 1];
        (&self.indices[range.clone()], range)
    }
}

/// A symmetric matrix stored on a shared [`SparsityPattern`].
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Adds `value` to entry (row, col). Panics if the entry is not in the
    /// pattern; assembly only touches element-local pairs.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let k = self
            .pattern
            .offset(row, col)
            .unwrap_or_else(|| panic!("entry ({row}, {col}) outside sparsity pattern"));
        self.values[k] += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern.offset(row, col).map_or(0.0, |k| self.values[k])
    }

    /// Σ w_q M_q over matrices on the same pattern.
    pub fn linear_combination(terms: &[(f64, &SymmetricMatrix)]) -> Result<Self, SolverError> {
        let first = terms.first().ok_or(SolverError::PatternMismatch)?.1;
        let mut out = Self::zeros(first.pattern.clone());
        for &(w, m) in terms {
            if !Arc::ptr_eq(&m.pattern, &out.pattern) && *m.pattern != *out.pattern {
                return Err(SolverError::PatternMismatch);
            }
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "dimension mismatch in mul_vec");
        let mut y = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let (cols, range) = self.pattern.row(i);
            let vals = &self.values[range];
            y[i] = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
        y
    }

    /// xᵀ M y.
    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(y))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// ‖self − other‖_F for matrices on equal patterns.
    pub fn frobenius_distance(&self, other: &SymmetricMatrix) -> Result<f64, SolverError> {
        if *self.pattern != *other.pattern {
            return Err(SolverError::PatternMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            let (cols, range) = self.pattern.row(i);
            for (&j, &v) in cols.iter().zip(&self.values[range]) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn to_csmat(&self) -> CsMat<f64> {
        CsMat::new(
            (self.dim(), self.dim()),
            self.pattern.indptr.clone(),
            self.pattern.indices.clone(),
            self.values.clone(),
        )
    }
}

/// Symbolic LDLᵀ analysis (approximate minimum degree ordering, elimination
/// tree) of a pattern; reusable for every matrix on that pattern.
#[derive(Debug, Clone)]
pub struct SpdSymbolic {
    pattern: Arc<SparsityPattern>,
    symbolic: LdlSymbolic<usize>,
}

impl SpdSymbolic {
    pub fn analyze(matrix: &SymmetricMatrix) -> Self {
        let mat = matrix.to_csmat();
        let pattern = &matrix.pattern;
        let symbolic = match amd::order(pattern.n, &pattern.indptr, &pattern.indices, &amd::Control::default()) {
            Ok((perm, _, _)) => {
                LdlSymbolic::new_perm(mat.view(), PermOwned::new(perm), SymmetryCheck::DontCheckSymmetry)
            }
            Err(status) => {
                log::warn!("minimum degree ordering failed ({status:?}); using reverse Cuthill-McKee");
                Ldl::new()
                    .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
                    .check_symmetry(SymmetryCheck::DontCheckSymmetry)
                    .symbolic(mat.view())
            }
        };
        Self {
            pattern: matrix.pattern.clone(),
            symbolic,
        }
    }

    pub fn factor(&self, matrix: &SymmetricMatrix) -> Result<SpdFactor, SolverError> {
        if *matrix.pattern != *self.pattern {
            return Err(SolverError::PatternMismatch);
        }
        let mat = matrix.to_csmat();
        let ldl = self
            .symbolic
            .clone()
            .factor(mat.view())
            .map_err(|e| match e {
                sprs::errors::LinalgError::SingularMatrix(info) => SolverError::NotPositiveDefinite {
                    index: info.index,
                    value: 0.0,
                },
                other => SolverError::Factorization(format!("{other:?}")),
            })?;
        SpdFactor::checked(ldl)
    }
}

/// Numeric LDLᵀ factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    ldl: LdlNumeric<f64, usize>,
}

impl SpdFactor {
    pub fn new(matrix: &SymmetricMatrix) -> Result<Self, SolverError> {
        SpdSymbolic::analyze(matrix).factor(matrix)
    }

    fn checked(ldl: LdlNumeric<f64, usize>) -> Result<Self, SolverError> {
        if let Some((index, &value)) = ldl
            .d()
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d > 0.0 && d.is_finite()))
        {
            return Err(SolverError::NotPositiveDefinite { index, value });
        }
        Ok(Self { ldl })
    }

    pub fn dim(&self) -> usize {
        self.ldl.d().len()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
        if rhs.len() != self.dim() {
            return Err(SolverError::DimensionMismatch {
                expected: self.dim(),
                found: rhs.len(),
            });
        }
        let x: Vec<f64> = self.ldl.solve(rhs.as_slice());
        Ok(DVector::from_vec(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize, shift: f64) -> SymmetricMatrix {
        let elements: Vec<[usize; 3]> = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
        let pattern = Arc::new(SparsityPattern::from_elements(n, &elements));
        let mut m = SymmetricMatrix::zeros(pattern);
        for i in 0..n {
            m.add(i, i, 2.0 + shift);
            if i + 1 < n {
                m.add(i, i + 1, -1.0);
                m.add(i + 1, i, -1.0);
            }
        }
        m
    }

    #[test]
    fn pattern_contains_element_pairs_and_diagonal() {
        let p = SparsityPattern::from_elements(4, &[[0, 1, 2], [1, 2, 3]]);
        assert_eq!(p.nnz(), 4 + 2 * 5);
        assert!(p.offset(0, 3).is_none());
        assert!(p.offset(3, 1).is_some());
    }

    #[test]
    fn solve_recovers_known_solution() {
        let m = path_laplacian(30, 0.1);
        let x = DVector::from_fn(30, |i, _| (i as f64).sin());
        let b = m.mul_vec(&x);
        let f = SpdFactor::new(&m).unwrap();
        let y = f.solve(&b).unwrap();
        assert!((y - x).amax() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = path_laplacian(10, -3.0);
        assert!(matches!(
            SpdFactor::new(&m),
            Err(SolverError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn negative_pivot_is_rejected() {
        let m = path_laplacian(10, -2.5);
        assert!(matches!(
            SpdFactor::new(&m),
            Err(SolverError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn symbolic_factor_reused_across_values() {
        let a = path_laplacian(20, 0.5);
        let b = path_laplacian(20, 2.0);
        let sym = SpdSymbolic::analyze(&a);
        let rhs = DVector::from_element(20, 1.0);
        for m in [&a, &b] {
            let x = sym.factor(m).unwrap().solve(&rhs).unwrap();
            assert!((m.mul_vec(&x) - &rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = SpdFactor::new(&path_laplacian(5, 1.0)).unwrap();
        assert!(matches!(
            f.solve(&DVector::zeros(4)),
            Err(SolverError::DimensionMismatch { expected: 5, found: 4 })
        ));
    }
}
