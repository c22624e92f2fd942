//! Dense tensors and a tape-based reverse-mode automatic differentiation
//! engine, sized for recurrent text models on the CPU.
//!
//! ```
//! use apjfnn_autograd::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let w = g.leaf(Tensor::vector(vec![0.0, 0.0]));
//! let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
//! let p = g.mul(w, x).unwrap();
//! let s = g.sigmoid(p);
//! let loss = g.sum(s);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(w).unwrap(), &[0.25, 0.5]);
//! ```

mod error;
mod graph;
mod params;
mod tensor;

pub use error::TensorError;
pub use graph::{Graph, Var};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::{Real, Tensor};
