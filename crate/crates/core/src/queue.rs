//! Per-layer cyclic queues and the dilated convolution step.

use crate::arith::Arithmetic;
use crate::config::LayerSpec;
use crate::error::{Error, Result};
use crate::matmul::{matvec_into, ParallelismParams};
use crate::tensor::Matrix;

/// Fixed-length ring of channel vectors. The slot at `head` is always the
/// oldest entry; a push overwrites it and advances `head`, so pop and push
/// together cost one slot write and nothing is ever shifted.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicQueue<T> {
    storage: Vec<T>,
    head: usize,
    length: usize,
    channels: usize,
}

impl<T: Copy> CyclicQueue<T> {
    /// Every slot starts as a copy of `init`.
    pub fn new(length: usize, init: &[T]) -> Result<Self> {
        if length == 0 {
            return Err(Error::ZeroLength);
        }
        if init.is_empty() {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: 0,
            });
        }
        let channels = init.len();
        let mut storage = Vec::with_capacity(length * channels);
        for _ in 0..length {
            storage.extend_from_slice(init);
        }
        Ok(Self {
            storage,
            head: 0,
            length,
            channels,
        })
    }

    pub fn filled(length: usize, channels: usize, value: T) -> Result<Self> {
        if channels == 0 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: 0,
            });
        }
        Self::new(length, &vec![value; channels])
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn element_count(&self) -> usize {
        self.storage.len()
    }

    /// The oldest entry.
    #[inline]
    pub fn front(&self) -> &[T] {
        let start = self.head * self.channels;
        &self.storage[start..start + self.channels]
    }

    /// Replaces the oldest entry with `v` and advances the head.
    #[inline]
    pub fn push(&mut self, v: &[T]) -> Result<()> {
        if v.len() != self.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                actual: v.len(),
            });
        }
        let start = self.head * self.channels;
        self.storage[start..start + self.channels].copy_from_slice(v);
        self.head += 1;
        if self.head == self.length {
            self.head = 0;
        }
        Ok(())
    }
}

impl CyclicQueue<f32> {
    pub fn zeros(length: usize, channels: usize) -> Result<Self> {
        Self::filled(length, channels, 0.0)
    }
}

/// Both taps of one layer's kernel, already converted to the arithmetic in
/// use.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerKernels<T> {
    pub delayed: Matrix<T>,
    pub current: Matrix<T>,
}

/// Mutable per-layer state of one generation session.
#[derive(Debug, Clone)]
pub struct LayerState<A: Arithmetic> {
    pub spec: LayerSpec,
    pub queue: CyclicQueue<A::Value>,
    pub last_output: Vec<A::Value>,
    pushes: u64,
    scratch: Vec<A::Value>,
}

impl<A: Arithmetic> LayerState<A> {
    /// Zero-initialised queue and output.
    pub fn new(arith: &A, spec: LayerSpec) -> Result<Self> {
        Ok(Self {
            spec,
            queue: CyclicQueue::filled(spec.queue_length, spec.in_channels, arith.zero())?,
            last_output: vec![arith.zero(); spec.out_channels],
            pushes: 0,
            scratch: vec![arith.zero(); spec.out_channels],
        })
    }

    /// Total pushes this layer's queue has received.
    pub fn pushes(&self) -> u64 {
        self.pushes
    }
}

/// One time step of a dilated layer:
/// `O = K_delayed * front(Q) + K_current * prev_out`, optionally through
/// `tanh`, after which `prev_out` is pushed into the queue. The result is
/// left in `state.last_output` and also returned.
pub fn dilated_conv_step<'s, A: Arithmetic>(
    arith: &A,
    state: &'s mut LayerState<A>,
    prev_out: &[A::Value],
    kernels: &LayerKernels<A::Value>,
    p: ParallelismParams,
    apply_tanh: bool,
) -> Result<&'s [A::Value]> {
    let spec = state.spec;
    if prev_out.len() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "layer input has {} channels, expected {}",
            prev_out.len(),
            spec.in_channels
        )));
    }
    let want = (spec.out_channels, spec.in_channels);
    if kernels.delayed.shape() != want || kernels.current.shape() != want {
        return Err(Error::ShapeMismatch(format!(
            "kernels {:?}/{:?}, expected {want:?}",
            kernels.delayed.shape(),
            kernels.current.shape()
        )));
    }

    matvec_into(
        arith,
        &kernels.delayed,
        state.queue.front(),
        None,
        p,
        &mut state.last_output,
    )?;
    matvec_into(arith, &kernels.current, prev_out, None, p, &mut state.scratch)?;
    for (o, &s) in state.last_output.iter_mut().zip(&state.scratch) {
        let sum = arith.add(*o, s);
        *o = if apply_tanh { arith.tanh(sum) } else { sum };
    }
    state.queue.push(prev_out)?;
    state.pushes += 1;
    Ok(&state.last_output)
}

fn naive_matvec_acc<A: Arithmetic>(
    arith: &A,
    w: &Matrix<A::Value>,
    x: &[A::Value],
    out: &mut [A::Value],
) {
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = arith.zero();
        for (&wv, &xv) in w.row(r).iter().zip(x) {
            acc = arith.add(acc, arith.mul(xv, wv));
        }
        *o = arith.add(*o, acc);
    }
}

/// Reference causal dilated convolution evaluated straight from the input
/// history: `K_delayed * history[t - d] + K_current * history[t]` with
/// `t = history.len() - 1` and zero padding before the start. No
/// activation is applied.
pub fn naive_dilated_conv<A: Arithmetic>(
    arith: &A,
    history: &[Vec<A::Value>],
    kernels: &LayerKernels<A::Value>,
    dilation: usize,
) -> Result<Vec<A::Value>> {
    let t = history.len().checked_sub(1).ok_or(Error::EmptyInput)?;
    let (rows, cols) = kernels.current.shape();
    if kernels.delayed.shape() != (rows, cols) {
        return Err(Error::ShapeMismatch("kernel taps differ in shape".into()));
    }
    let current = &history[t];
    if current.len() != cols {
        return Err(Error::ShapeMismatch(format!(
            "history vectors have {} channels, kernels expect {cols}",
            current.len()
        )));
    }
    let mut out = vec![arith.zero(); rows];
    if let Some(past) = t.checked_sub(dilation).map(|i| &history[i]) {
        if past.len() != cols {
            return Err(Error::ShapeMismatch("ragged history".into()));
        }
        naive_matvec_acc(arith, &kernels.delayed, past, &mut out);
    }
    let mut cur = vec![arith.zero(); rows];
    naive_matvec_acc(arith, &kernels.current, current, &mut cur);
    for (o, c) in out.iter_mut().zip(cur) {
        *o = arith.add(*o, c);
    }
    Ok(out)
}
