//! Explicit solutions of multiparametric quadratic programs and their compression into
//! storage trees of rank-1 modifications.

pub mod enumerator;
pub mod error;
pub mod eval;
pub mod io;
pub mod lowrank;
pub mod lp;
pub mod mpc;
pub mod numerics;
pub mod oracle;
pub mod tree;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use types::{ActiveSet, ExplicitSolution, MpQpProblem, MpQpRawProblem, ParamDomain, RegionSolution};
