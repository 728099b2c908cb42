//! Numerical laboratory for multidimensional BSDEs with logarithmic-growth
//! drivers and the degenerate semilinear PDEs they represent.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod error;
pub mod estimates;
pub mod forward;
pub mod generator;
pub mod grid;
pub mod mollify;
pub mod ode;
pub mod pde;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use forward::{simulate_paths, DiffusionSpec, PathBatch};
pub use generator::{AssumptionEnvelope, ExampleSpec, Generator};
pub use grid::{SpaceGrid, TimeGrid};
