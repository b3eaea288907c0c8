//! Piecewise-linear finite elements on a [`TriMesh`].
//!
//! The bilinear form splits by region into four parameter-independent
//! blocks: healthy stiffness, healthy mass, inclusion stiffness and
//! inclusion mass. A parameter value only reweights them.

use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::mesh::{dist, Point, TriMesh};
use crate::optics::Theta;
use crate::sparse::{SolverError, SparsityPattern, SpdFactor, SymmetricMatrix};

/// Relative residual every truth solve must meet.
pub const TRUTH_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("element {index} is degenerate (area {area:e})")]
    DegenerateElement { index: usize, area: f64 },
    #[error("coefficients {0:?} are not all positive; the system is not SPD")]
    NotPositive(Theta),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("truth solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Gaussian boundary source `amplitude · exp(−|x − center|² / width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub amplitude: f64,
    pub center: Point,
    pub width: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            amplitude: 15.0,
            center: [-24.5196, -4.8773],
            width: 10.0,
        }
    }
}

impl SourceSpec {
    pub fn eval(&self, p: Point) -> f64 {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        self.amplitude * (-(dx * dx + dy * dy) / self.width).exp()
    }

    /// Moves the center onto the nearest boundary vertex of `mesh`.
    pub fn snapped_to(&self, mesh: &TriMesh) -> Self {
        let v = mesh.nearest_boundary_vertex(self.center);
        Self {
            center: mesh.vertices()[v],
            ..*self
        }
    }
}

/// Parameter-independent operators of the truth problem.
#[derive(Debug, Clone)]
pub struct AffineBlocks {
    /// ∫_{Ω₀} ∇φ_i·∇φ_j
    pub a00: SymmetricMatrix,
    /// ∫_{Ω₀} φ_i φ_j
    pub a01: SymmetricMatrix,
    /// ∫_{Ω₁} ∇φ_i·∇φ_j
    pub a10: SymmetricMatrix,
    /// ∫_{Ω₁} φ_i φ_j
    pub a11: SymmetricMatrix,
    /// H¹(Ω) Gram matrix: full stiffness plus full mass.
    pub gram: SymmetricMatrix,
    pub load: DVector<f64>,
}

impl AffineBlocks {
    pub fn dim(&self) -> usize {
        self.gram.dim()
    }

    pub fn blocks(&self) -> [&SymmetricMatrix; 4] {
        [&self.a00, &self.a01, &self.a10, &self.a11]
    }

    pub fn with_load(mut self, load: DVector<f64>) -> Self {
        assert_eq!(load.len(), self.dim());
        self.load = load;
        self
    }

    /// A_λ = D₀A00 + μ_a⁰A01 + D₁A10 + μ_a¹A11.
    pub fn combine(&self, theta: &Theta) -> SymmetricMatrix {
        let [a, b, c, d] = self.blocks();
        SymmetricMatrix::linear_combination(&[
            (theta.d0, a),
            (theta.mu_a0, b),
            (theta.d1, c),
            (theta.mu_a1, d),
        ])
        .expect("affine blocks share one pattern")
    }

    pub fn h1_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64, FemError> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        Ok(self.gram.bilinear(u, v))
    }

    pub fn h1_norm(&self, u: &DVector<f64>) -> Result<f64, FemError> {
        Ok(self.h1_inner(u, u)?.max(0.0).sqrt())
    }

    pub fn check_dim(&self, u: &DVector<f64>) -> Result<(), FemError> {
        if u.len() != self.dim() {
            return Err(FemError::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthSolution {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
}

/// Gradients of the three barycentric hat functions and the element area.
fn element_geometry(mesh: &TriMesh, t: usize) -> Result<([[f64; 2]; 3], f64), FemError> {
    let p = mesh.triangle_points(t);
    let area = mesh.triangle_area(t);
    let scale = dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]));
    if !(area > 1e-14 * scale * scale) {
        return Err(FemError::DegenerateElement { index: t, area });
    }
    let mut grads = [[0.0; 2]; 3];
    for i in 0..3 {
        let pj = p[(i + 1) % 3];
        let pk = p[(i + 2) % 3];
        grads[i] = [(pj[1] - pk[1]) / (2.0 * area), (pk[0] - pj[0]) / (2.0 * area)];
    }
    Ok((grads, area))
}

fn local_stiffness(grads: &[[f64; 2]; 3], area: f64) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
        }
    }
    k
}

fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

pub fn mesh_pattern(mesh: &TriMesh) -> Arc<SparsityPattern> {
    Arc::new(SparsityPattern::from_elements(
        mesh.num_vertices(),
        mesh.triangles(),
    ))
}

/// Assembles the four region blocks and the H¹ Gram matrix. The load is
/// left at zero; see [`assemble_load`].
pub fn assemble_affine_blocks(mesh: &TriMesh) -> Result<AffineBlocks, FemError> {
    let pattern = mesh_pattern(mesh);
    let zero = SymmetricMatrix::zeros(pattern);
    let mut blocks = [zero.clone(), zero.clone(), zero.clone(), zero.clone()];
    let mut gram = zero;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = element_geometry(mesh, t)?;
        let k = local_stiffness(&grads, area);
        let m = local_mass(area);
        let offset = 2 * mesh.regions()[t] as usize;
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (tri[i], tri[j]);
                blocks[offset].add(a, b, k[i][j]);
                blocks[offset + 1].add(a, b, m[i][j]);
                // Keep the untouched region's pattern entries explicit.
                blocks[2 - offset].add(a, b, 0.0);
                gram.add(a, b, k[i][j] + m[i][j]);
            }
        }
    }
    let [a00, a01, a10, a11] = blocks;
    let n = mesh.num_vertices();
    Ok(AffineBlocks {
        a00,
        a01,
        a10,
        a11,
        gram,
        load: DVector::zeros(n),
    })
}

/// Two-point Gauss nodes on [0, 1] with equal weights ½.
const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// F_i = ∫_∂Ω f φ_i ds, edge by edge with two-point Gauss quadrature.
pub fn assemble_load(mesh: &TriMesh, source: &SourceSpec) -> DVector<f64> {
    assemble_boundary_load(mesh, |p, _| source.eval(p))
}

/// ∫_∂Ω g(x, n) φ_i ds where `n` is the outward unit normal of the edge.
pub fn assemble_boundary_load(mesh: &TriMesh, g: impl Fn(Point, Point) -> f64) -> DVector<f64> {
    let mut f = DVector::zeros(mesh.num_vertices());
    for &[a, b] in mesh.boundary_edges() {
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let len = dist(pa, pb);
        // Boundary loop runs counter-clockwise, so the outward normal is the
        // tangent rotated clockwise.
        let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        for s in GAUSS2 {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let w = 0.5 * len * g(x, normal);
            f[a] += w * (1.0 - s);
            f[b] += w * s;
        }
    }
    f
}

/// Degree-5 seven-point rule on the reference triangle: barycentric
/// coordinates and weights summing to one.
fn triangle_rule() -> [([f64; 3], f64); 7] {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let third = 1.0 / 3.0;
    [
        ([third, third, third], 9.0 / 40.0),
        ([a1, a1, 1.0 - 2.0 * a1], w1),
        ([a1, 1.0 - 2.0 * a1, a1], w1),
        ([1.0 - 2.0 * a1, a1, a1], w1),
        ([a2, a2, 1.0 - 2.0 * a2], w2),
        ([a2, 1.0 - 2.0 * a2, a2], w2),
        ([1.0 - 2.0 * a2, a2, a2], w2),
    ]
}

/// ∫_Ω h φ_i dx with the seven-point rule.
pub fn assemble_interior_load(
    mesh: &TriMesh,
    h: impl Fn(Point) -> f64,
) -> Result<DVector<f64>, FemError> {
    let rule = triangle_rule();
    let mut f = DVector::zeros(mesh.num_vertices());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (_, area) = element_geometry(mesh, t)?;
        let p = mesh.triangle_points(t);
        for (bary, w) in rule {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let value = w * area * h(x);
            for i in 0..3 {
                f[tri[i]] += value * bary[i];
            }
        }
    }
    Ok(f)
}

/// H¹ norm of `u_h − u` for a nodal field against an exact function and its
/// gradient, by element quadrature.
pub fn h1_error_against(
    mesh: &TriMesh,
    coefficients: &DVector<f64>,
    exact: impl Fn(Point) -> f64,
    exact_grad: impl Fn(Point) -> [f64; 2],
) -> Result<f64, FemError> {
    let rule = triangle_rule();
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = element_geometry(mesh, t)?;
        let p = mesh.triangle_points(t);
        let mut grad_h = [0.0; 2];
        for i in 0..3 {
            grad_h[0] += coefficients[tri[i]] * grads[i][0];
            grad_h[1] += coefficients[tri[i]] * grads[i][1];
        }
        for (bary, w) in rule {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let uh: f64 = (0..3).map(|i| bary[i] * coefficients[tri[i]]).sum();
            let g = exact_grad(x);
            let e0 = uh - exact(x);
            let e1 = grad_h[0] - g[0];
            let e2 = grad_h[1] - g[1];
            sum += w * area * (e0 * e0 + e1 * e1 + e2 * e2);
        }
    }
    Ok(sum.sqrt())
}

/// Solves (Σ θ_q A_q) c = F with a fresh factorization.
pub fn solve_truth(
    blocks: &AffineBlocks,
    theta: &Theta,
    lambda: f64,
) -> Result<TruthSolution, FemError> {
    if !theta.is_positive() {
        return Err(FemError::NotPositive(*theta));
    }
    let a = blocks.combine(theta);
    let factor = SpdFactor::new(&a)?;
    let coefficients = solve_checked(&a, &factor, &blocks.load)?;
    Ok(TruthSolution {
        coefficients,
        lambda,
    })
}

pub(crate) fn solve_checked(
    a: &SymmetricMatrix,
    factor: &SpdFactor,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>, FemError> {
    let x = factor.solve(rhs)?;
    let residual = (a.mul_vec(&x) - rhs).norm();
    let tolerance = TRUTH_RESIDUAL_TOL * rhs.norm();
    if residual > tolerance {
        return Err(FemError::Residual {
            residual,
            tolerance,
        });
    }
    Ok(x)
}

/// Single-pass assembly of A_λ with each element's coefficients picked from
/// its region label. Serves as an oracle for the affine split.
pub fn assemble_direct(mesh: &TriMesh, theta: &Theta) -> Result<SymmetricMatrix, FemError> {
    let mut a = SymmetricMatrix::zeros(mesh_pattern(mesh));
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (diffusion, absorption) = match mesh.regions()[t] {
            0 => (theta.d0, theta.mu_a0),
            _ => (theta.d1, theta.mu_a1),
        };
        let (grads, area) = element_geometry(mesh, t)?;
        for i in 0..3 {
            for j in 0..3 {
                let stiff = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                let mass = if i == j { area / 6.0 } else { area / 12.0 };
                a.add(tri[i], tri[j], diffusion * stiff + absorption * mass);
            }
        }
    }
    Ok(a)
}

/// H¹ error of the P1 solution of −Δu + u = h with Neumann data taken from
/// u = x² + y², posed on the mesh's own polygonal domain.
pub fn manufactured_h1_error(mesh: &TriMesh) -> Result<f64, FemError> {
    let blocks = assemble_affine_blocks(mesh)?;
    let exact = |p: Point| p[0] * p[0] + p[1] * p[1];
    let grad = |p: Point| [2.0 * p[0], 2.0 * p[1]];
    let interior = assemble_interior_load(mesh, |p| exact(p) - 4.0)?;
    let boundary = assemble_boundary_load(mesh, |p, n| {
        let g = grad(p);
        g[0] * n[0] + g[1] * n[1]
    });
    let rhs = interior + boundary;
    let factor = SpdFactor::new(&blocks.gram)?;
    let u = solve_checked(&blocks.gram, &factor, &rhs)?;
    h1_error_against(mesh, &u, exact, grad)
}

/// Manufactured-solution errors on `base` and `levels` successive uniform
/// refinements, coarsest first.
pub fn manufactured_convergence(base: &TriMesh, levels: usize) -> Result<Vec<f64>, FemError> {
    let mut mesh = base.clone();
    let mut errors = vec![manufactured_h1_error(&mesh)?];
    for _ in 0..levels {
        mesh = mesh.refine_uniform();
        errors.push(manufactured_h1_error(&mesh)?);
    }
    Ok(errors)
}
