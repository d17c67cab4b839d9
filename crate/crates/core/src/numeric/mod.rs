//! Dense linear algebra with reverse-mode gradients, parameter storage,
//! initialization, and the Adam optimizer.

mod check;
mod graph;
mod init;
mod matrix;
mod optim;
mod params;

pub use check::{finite_diff_check, finite_diff_check_steps, FiniteDiffReport};
pub use graph::{sigmoid, softmax_columns, Activation, Gradients, Graph, NodeId};
pub use init::{derive_seed, rng_from_seed, stable_hash, xavier_fill, xavier_matrix, Rng};
pub use matrix::Matrix;
pub use optim::{adam_update, Adam};
pub use params::{ParamId, ParamSet, ParamTensor};

use serde::{Deserialize, Serialize};

/// Numeric precision of stored parameters.
///
/// Arithmetic always runs in `f64`; `F32` rounds parameters to single
/// precision after every update and stores checkpoints as 32-bit floats.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Reverse pass from `loss`, accumulating into the parameter gradient buffers.
pub fn backprop(graph: &Graph, loss: NodeId, params: &mut ParamSet) -> crate::Result<()> {
    let grads = graph.backward(loss)?;
    grads.add_to(params, 1.0);
    Ok(())
}
