//! Sample-by-sample WaveNet inference built the way a streaming accelerator
//! runs it: every dilated layer keeps a ring buffer of past activations, so
//! each generated sample costs a fixed number of matrix-vector products no
//! matter how long the waveform already is.
//!
//! The crate is organised bottom-up:
//!
//! * [`config`], [`tensor`] and [`weights`] describe the network and own the
//!   weight file format.
//! * [`fixed`] and [`arith`] provide the number systems inference runs in
//!   (32-bit reals, parameterised fixed point, and an exact integer ring used
//!   for verification).
//! * [`matmul`] is the two-level parallel matrix-vector engine plus its cycle
//!   cost model.
//! * [`queue`] holds the per-layer cyclic queues and the dilated convolution
//!   step, alongside the history-based reference convolution.
//! * [`inference`] drives the autoregressive loop and its naive reference.
//! * [`metrics`], [`wav`] and [`cli`] cover evaluation and the command line.

pub mod arith;
pub mod cli;
pub mod config;
pub mod error;
pub mod fixed;
pub mod inference;
pub mod matmul;
pub mod metrics;
pub mod queue;
pub mod tensor;
pub mod wav;
pub mod weights;

pub use arith::{Arithmetic, FixedArith, IntRing, RealArith};
pub use config::{LayerSpec, ModelConfig, NumberMode, QueueMemory};
pub use error::{Error, Result};
pub use fixed::{FxFormat, FxValue};
pub use inference::{
    generate, generate_naive, teacher_forced_layer_outputs, GenerationState, NaiveSession,
    Session, Waveform,
};
pub use matmul::{CostEstimate, ParallelismParams};
pub use metrics::{MetricReport, SpectrogramParams, Window};
pub use queue::{CyclicQueue, LayerState};
pub use tensor::Matrix;
pub use weights::{KernelPair, WeightSet};
