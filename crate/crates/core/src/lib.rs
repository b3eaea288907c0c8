//! Reduced basis toolkit for the wavelength-parameterized diffusion model of
//! diffuse optical tomography.
//!
//! The crate provides a P1 finite-element truth solver on a disk with a
//! circular inclusion, a reduced basis engine with an affine offline/online
//! split, and four strategies for choosing the basis-generating wavelengths:
//! greedy with a residual-based indicator, gradient descent on a surrogate
//! error objective, Metropolis-Hastings over whole sample sets, and
//! logarithmic spacing. The [`harness`] module runs and reports the
//! comparison experiment.

pub mod fem;
pub mod harness;
pub mod mesh;
pub mod optics;
pub mod problem;
pub mod rb;
pub mod sampling;
pub mod sparse;

pub use fem::{AffineBlocks, SourceSpec, TruthSolution};
pub use mesh::{generate_mesh, Geometry, TriMesh};
pub use optics::{CoefficientModel, Theta};
pub use problem::{ParametricProblem, TruthCache};
pub use rb::{BasisOptions, RbError, RbSolution, ReducedBasis};
