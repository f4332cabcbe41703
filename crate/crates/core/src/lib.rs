//! Numerical toolkit for convex Hamiltonians on the plane: conjugates,
//! level-set geometry, cone functions, Hopf-Lax flows and absolute minimizers.

pub mod analysis;
pub mod cone;
pub mod convex;
pub mod counterexamples;
pub mod error;
pub mod flow;
pub mod geom;
pub mod grid;
pub mod hamiltonian;
pub mod solver;
mod optim;

pub use error::{Error, Result};
pub use geom::{Rect, Vec2};
pub use grid::GridField;
pub use hamiltonian::{
    build_hamiltonian, find_minimum, normalize_hamiltonian, ConvexOracle, Family, FamilyDescriptor, Hamiltonian,
    Minimum,
};
