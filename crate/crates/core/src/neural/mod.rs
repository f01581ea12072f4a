//! Feed-forward networks, encoder and parameter bookkeeping.

mod encoder;
mod gradcheck;
mod net;
mod params;

pub use encoder::Encoder;
pub use gradcheck::{grad_check, GradCheck, MAX_CHECKED};
pub use net::{Activation, InitMode, LayerLayout, NetShape, NeuralNet, Skip};
pub use params::{ParamSlice, ParameterVector};
