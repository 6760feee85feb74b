//! Diagonal sweeping domain decomposition for the Helmholtz equation.
//!
//! The crate solves `Δu + κ²u = f` on structured 2D/3D grids truncated by
//! uniaxial perfectly matched layers. A checkerboard partition is swept along
//! every diagonal direction; each subdomain problem is solved with a cached
//! multifrontal LU factorization and the residual of the local solution is
//! handed to its neighbours as a transferred source.
//!
//! Module map:
//! - [`grid`]: grids, complex nodal fields, discrete norms and field dumps.
//! - [`media`]: velocity models and sources.
//! - [`pml`]: stretching profiles and the discrete PML operator.
//! - [`partition`]: checkerboard partition, cutoffs and truncations.
//! - [`transfer`]: source-transfer operator and sweep admissibility rules.
//! - [`solver`]: nested-dissection multifrontal LU.
//! - [`ddm`]: additive and diagonal sweeping engines.
//! - [`krylov`]: restarted right-preconditioned GMRES.
//! - [`pipeline`]: multi-RHS pipeline timing model.
//! - [`analytic`]: free-space reference solutions.
//! - [`problem`]: glue that assembles a complete Helmholtz problem.
//! - [`study`]: experiment drivers (preconditioned GMRES, refinement, decay).

pub mod analytic;
pub mod ddm;
pub mod dense;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod media;
pub mod partition;
pub mod pipeline;
pub mod pml;
pub mod problem;
pub mod solver;
pub mod study;
pub mod transfer;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
