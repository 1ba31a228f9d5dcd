//! Layer primitives with hand-written forward and backward passes.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod pool;
pub mod vecops;

pub use activation::{activation_backward, activation_forward, ActivationKind};
pub use adam::{adam_step, AdamConfig, OptimizerState, ParamMut};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormState, BnMode};
pub use conv::{conv1d_backward, conv1d_forward, ConvLayerState, Padding};
pub use dense::{dense_backward, dense_forward, DenseLayerState};
pub use dropout::{dropout, dropout_backward, DropoutMode};
pub use gradcheck::{grad_check, Differentiable};
pub use loss::{argmax, softmax, softmax_cross_entropy};
pub use pool::{pool1d_backward, pool1d_forward, PoolKind};
