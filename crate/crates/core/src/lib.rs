//! Mixed finite element solver for the fully nonlinear Monge-Ampère
//! equation `det(D²u) = f` via the vanishing-moment regularization
//! `-ε Δ²u + det(D²u) = f` with Hermann-Miyoshi type `(σ, u)` pairs.

pub mod assembly;
pub mod element;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
