//! Layers with explicit forward caches and backward passes.
//!
//! Every layer owns its parameters as [`Tensor`]s. A gradient accumulator is
//! simply another instance of the same layer with zeroed tensors (see
//! [`Params::zeroed`]); `backward` adds into it and returns the gradient with
//! respect to the layer input.

mod attention;
mod block;
mod conv;
pub mod init;
mod linear;
mod norm;

pub use attention::{Attention, AttentionCache};
pub use block::{gelu, gelu_grad, Mlp, TransformerBlock, TransformerBlockCache};
pub use conv::{Conv2d, ConvBlock, ConvBlockCache};
pub use linear::Linear;
pub use norm::{LayerNorm, LayerNormCache};

use alloc::format;
use alloc::string::String;

use crate::tensor::Tensor;

/// Named parameter traversal. Visiting order is fixed, so two instances of
/// the same architecture visit matching tensors in the same sequence.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    /// Same architecture, all parameters zero.
    fn zeroed(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.visit_mut("", &mut |_, t| t.zero_());
        z
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}
