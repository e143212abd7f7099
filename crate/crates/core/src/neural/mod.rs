//! Learnable forward computation with hand-derived reverse-mode gradients.
//!
//! Every forward function has a `*_cached` twin that records what its backward
//! pass needs; backward functions accumulate parameter gradients into a
//! shape-congruent parameter struct and return the gradient w.r.t. their input.

mod cgan;
mod gradcheck;
mod linear;
mod params;
mod projection;
mod rwgcn;

pub use cgan::{cgan_backward, cgan_forward, cgan_forward_cached, CganCache, CganParams};
pub use gradcheck::{central_difference, finite_difference_gradient, max_relative_error};
pub use linear::{Activation, LinearMap};
pub use params::{init_parameters, ArchSpec, Checkpoint, Gradients, ModelParameters};
pub use projection::{project, project_backward, project_cached, ProjectionCache, ProjectionParams};
pub use rwgcn::{
    rwgcn_backward, rwgcn_forward, rwgcn_forward_cached, rwgcn_stack, rwgcn_stack_backward,
    rwgcn_stack_cached, GateKind, RwGcnCache, RwGcnLayerParams,
};

/// Dense row-major matrix; rows are nodes.
pub type Matrix = ndarray::Array2<f64>;

pub(crate) fn check_cols(m: &Matrix, cols: usize, what: &str) -> crate::Result<()> {
    if m.ncols() != cols {
        return Err(crate::Error::Shape(format!(
            "{what}: expected {cols} columns, got {}",
            m.ncols()
        )));
    }
    Ok(())
}
