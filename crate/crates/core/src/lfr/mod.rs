//! Linear-fractional interconnection of a baseline model and a learned component.
//!
//! One step of the model reads
//!
//! ```text
//! [x+; y; z1; z2] = S [x; u; w1; w2],   w1 = phi_base(z1),   w2 = phi_aug(z2)
//! ```
//!
//! and is solved by evaluating the ports in a topological order of their
//! instantaneous dependencies. A cyclic dependency (an algebraic loop) is
//! rejected when the model is built.

mod graph;
mod matrix;
mod model;
mod port;

pub use graph::{build_dependency_graph, check_well_posedness, DependencyGraph, AUG_NODE, BASE_NODE};
pub use matrix::{ColBlock, Dims, InterconnectionMatrix, MatrixDocument, RowBlock};
pub use model::{LfrModel, StepSignals};
pub use port::{LinearPort, PortFunction, ZeroPort};
