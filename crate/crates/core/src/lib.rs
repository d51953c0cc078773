//! Community detection and parameter estimation for directed networks whose
//! edges are observed through nominations.
//!
//! The observed graph is modelled as `P[i, j] = theta_i * B[c_i, c_j]^lambda_i`:
//! each node nominates its true connections at its own rate and with its own
//! preference for strong ties. Communities are recovered from the right
//! singular vectors of the adjacency matrix, which are unaffected by how
//! individual nodes nominate, and the nomination parameters are then fitted
//! by the method of moments.

pub mod error;
pub mod estimate;
pub mod generate;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{DirectedGraph, LabelVector, Matrix, NsbmParams};
