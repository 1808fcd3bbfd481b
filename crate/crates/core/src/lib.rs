//! Certified lower bounds for critical points of oriented percolation.
//!
//! Windows of same-height vertices are the types of a multitype
//! Galton-Watson process that dominates the percolation cluster. Its mean
//! matrix has polynomial entries in the model parameters; the largest
//! parameter at which the spectral radius stays below 1 is a lower bound
//! for the critical point.

pub mod cache;
pub mod error;
pub mod model;
pub mod operator;
pub mod oracle;
pub mod poly;
pub mod search;
pub mod space;
pub mod spectral;
pub mod transition;

pub use error::{Error, Result};
pub use model::{Lattice, ModelSpec, Percolation, VariantTag, WindowGeometry};
pub use operator::{TransferOperator, TransferPlan};
pub use poly::{Poly, PolyPool};
pub use search::{lower_bound, reproduce_tables, Backend, BoundResult, SearchOptions, TableSelector};
pub use space::{SpaceSpec, StateBits, StateSpace};
pub use spectral::{evaluate, is_subcritical, spectral_radius, LinearOperator, PowerOptions, SpectralReport};
pub use transition::{build_matrix, BuildOptions, MeanMatrix};
