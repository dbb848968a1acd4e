//! Two-level parallel matrix-vector engine.
//!
//! Rows are processed in contiguous chunks of `num_parallel_out`. Within a
//! row, input indices are dealt round-robin to `num_parallel_in` MAC lanes
//! (lane `j` owns every index `i` with `i % p_in == j`, accumulated in
//! increasing `i`), and the lane partials are combined by [`reduce_sum`].
//! The order is fixed, so results never depend on how the work is
//! scheduled.

use serde::{Deserialize, Serialize};

use crate::arith::Arithmetic;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelismParams {
    pub num_parallel_out: usize,
    pub num_parallel_in: usize,
}

impl ParallelismParams {
    pub const SERIAL: ParallelismParams = ParallelismParams {
        num_parallel_out: 1,
        num_parallel_in: 1,
    };

    pub fn new(num_parallel_out: usize, num_parallel_in: usize) -> Result<Self> {
        let p = Self {
            num_parallel_out,
            num_parallel_in,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_parallel_out == 0 || self.num_parallel_in == 0 {
            return Err(Error::InvalidParallelism(format!(
                "parallelism must be at least 1, got out={} in={}",
                self.num_parallel_out, self.num_parallel_in
            )));
        }
        if !self.num_parallel_in.is_power_of_two() {
            return Err(Error::InvalidParallelism(format!(
                "num_parallel_in must be a power of two, got {}",
                self.num_parallel_in
            )));
        }
        Ok(())
    }
}

impl Default for ParallelismParams {
    /// The engine setting used for every 128-channel layer and the FC layer.
    fn default() -> Self {
        Self {
            num_parallel_out: 8,
            num_parallel_in: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mac_count: u64,
    pub estimated_cycles: u64,
    pub weight_buffer_elems: u64,
}

/// One level of the tree: pairs `(0,1), (2,3), ...` are summed into `dst`;
/// an odd trailing element is carried through unchanged.
#[inline]
fn reduce_level<A: Arithmetic>(arith: &A, src: &[A::Value], dst: &mut [A::Value]) -> usize {
    let pairs = src.len() / 2;
    for i in 0..pairs {
        dst[i] = arith.add(src[2 * i], src[2 * i + 1]);
    }
    if src.len() % 2 == 1 {
        dst[pairs] = src[src.len() - 1];
        pairs + 1
    } else {
        pairs
    }
}

/// Tree reduction that ping-pongs between the working array and a
/// temporary: even levels reduce `a` into `temp`, odd levels reduce `temp`
/// back into `a`.
fn tree_reduce<A: Arithmetic>(arith: &A, a: &mut [A::Value], temp: &mut [A::Value]) -> A::Value {
    let mut len = a.len();
    let mut in_temp = false;
    while len > 1 {
        len = if in_temp {
            reduce_level(arith, &temp[..len], a)
        } else {
            reduce_level(arith, &a[..len], temp)
        };
        in_temp = !in_temp;
    }
    if in_temp {
        temp[0]
    } else {
        a[0]
    }
}

pub fn reduce_sum<A: Arithmetic>(arith: &A, partials: &[A::Value]) -> Result<A::Value> {
    if partials.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut a = partials.to_vec();
    let mut temp = vec![arith.zero(); partials.len().div_ceil(2)];
    Ok(tree_reduce(arith, &mut a, &mut temp))
}

#[inline(always)]
fn dot_lanes<A: Arithmetic, const P: usize>(arith: &A, x: &[A::Value], w: &[A::Value]) -> A::Value {
    if A::BATCH_PRODUCTS {
        return dot_lanes_batched::<A, P>(arith, x, w);
    }
    let mut acc = [arith.zero(); P];
    let mut xc = x.chunks_exact(P);
    let mut wc = w.chunks_exact(P);
    for (xs, ws) in (&mut xc).zip(&mut wc) {
        for j in 0..P {
            acc[j] = arith.mac(acc[j], xs[j], ws[j]);
        }
    }
    for (j, (&xv, &wv)) in xc.remainder().iter().zip(wc.remainder()).enumerate() {
        acc[j] = arith.mac(acc[j], xv, wv);
    }
    let mut temp = [arith.zero(); P];
    tree_reduce(arith, &mut acc, &mut temp)
}

/// Products per block; a multiple of every specialised lane count so that
/// element `i` of a block always lands in lane `i % P`.
const PRODUCT_BLOCK: usize = 64;

#[inline(always)]
fn dot_lanes_batched<A: Arithmetic, const P: usize>(arith: &A, x: &[A::Value], w: &[A::Value]) -> A::Value {
    let mut acc = [arith.zero(); P];
    let mut prod = [arith.zero(); PRODUCT_BLOCK];
    for (xb, wb) in x.chunks(PRODUCT_BLOCK).zip(w.chunks(PRODUCT_BLOCK)) {
        let prod = &mut prod[..xb.len()];
        for ((p, &xv), &wv) in prod.iter_mut().zip(xb).zip(wb) {
            *p = arith.mul(xv, wv);
        }
        let mut lanes = prod.chunks_exact(P);
        for group in &mut lanes {
            for j in 0..P {
                acc[j] = arith.add(acc[j], group[j]);
            }
        }
        for (j, &p) in lanes.remainder().iter().enumerate() {
            acc[j] = arith.add(acc[j], p);
        }
    }
    let mut temp = [arith.zero(); P];
    tree_reduce(arith, &mut acc, &mut temp)
}

fn dot_lanes_dyn<A: Arithmetic>(arith: &A, x: &[A::Value], w: &[A::Value], p: usize) -> A::Value {
    let mut acc = vec![arith.zero(); p];
    for (i, (&xv, &wv)) in x.iter().zip(w).enumerate() {
        let j = i % p;
        acc[j] = arith.mac(acc[j], xv, wv);
    }
    let mut temp = vec![arith.zero(); p.div_ceil(2)];
    tree_reduce(arith, &mut acc, &mut temp)
}

/// Dot product without argument checks; `x.len() == w.len()` and
/// `p_in >= 1` are the caller's responsibility.
#[inline]
pub(crate) fn dot_unchecked<A: Arithmetic>(
    arith: &A,
    x: &[A::Value],
    w: &[A::Value],
    p_in: usize,
) -> A::Value {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { dot_avx2(arith, x, w, p_in) };
    }
    dot_portable(arith, x, w, p_in)
}

/// Same code compiled with AVX2 enabled. Only the instruction selection
/// changes; the lane assignment and reduction order stay identical, so
/// results are bit-for-bit the same as the portable path.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2<A: Arithmetic>(arith: &A, x: &[A::Value], w: &[A::Value], p_in: usize) -> A::Value {
    dot_portable(arith, x, w, p_in)
}

#[inline(always)]
fn dot_portable<A: Arithmetic>(arith: &A, x: &[A::Value], w: &[A::Value], p_in: usize) -> A::Value {
    if let Some(v) = arith.order_free_dot(x, w) {
        return v;
    }
    match p_in {
        1 => dot_lanes::<A, 1>(arith, x, w),
        2 => dot_lanes::<A, 2>(arith, x, w),
        4 => dot_lanes::<A, 4>(arith, x, w),
        8 => dot_lanes::<A, 8>(arith, x, w),
        16 => dot_lanes::<A, 16>(arith, x, w),
        _ => dot_lanes_dyn(arith, x, w, p_in),
    }
}

pub fn dot_product<A: Arithmetic>(
    arith: &A,
    x: &[A::Value],
    w: &[A::Value],
    p_in: usize,
) -> Result<A::Value> {
    if x.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: w.len(),
        });
    }
    if p_in == 0 {
        return Err(Error::InvalidParallelism("num_parallel_in must be at least 1".into()));
    }
    Ok(dot_unchecked(arith, x, w, p_in))
}

fn check_matvec<T: Copy>(
    w: &Matrix<T>,
    x: &[T],
    bias: Option<&[T]>,
    out_len: usize,
) -> Result<()> {
    if x.len() != w.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} matrix applied to a vector of {}",
            w.rows(),
            w.cols(),
            x.len()
        )));
    }
    if let Some(b) = bias {
        if b.len() != w.rows() {
            return Err(Error::ShapeMismatch(format!(
                "bias of {} for {} rows",
                b.len(),
                w.rows()
            )));
        }
    }
    if out_len != w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "output buffer of {} for {} rows",
            out_len,
            w.rows()
        )));
    }
    Ok(())
}

/// `out = W x (+ bias)`, writing into a caller-provided buffer.
pub fn matvec_into<A: Arithmetic>(
    arith: &A,
    w: &Matrix<A::Value>,
    x: &[A::Value],
    bias: Option<&[A::Value]>,
    p: ParallelismParams,
    out: &mut [A::Value],
) -> Result<()> {
    p.validate()?;
    check_matvec(w, x, bias, out.len())?;
    let rows = w.rows();
    for chunk_start in (0..rows).step_by(p.num_parallel_out) {
        let chunk_end = (chunk_start + p.num_parallel_out).min(rows);
        for r in chunk_start..chunk_end {
            let dot = dot_unchecked(arith, x, w.row(r), p.num_parallel_in);
            out[r] = match bias {
                Some(b) => arith.add(dot, b[r]),
                None => dot,
            };
        }
    }
    Ok(())
}

pub fn matvec<A: Arithmetic>(
    arith: &A,
    w: &Matrix<A::Value>,
    x: &[A::Value],
    bias: Option<&[A::Value]>,
    p: ParallelismParams,
) -> Result<Vec<A::Value>> {
    let mut out = vec![arith.zero(); w.rows()];
    matvec_into(arith, w, x, bias, p, &mut out)?;
    Ok(out)
}

/// Cycle model of one `rows x cols` matvec: each chunk of `p_out` rows
/// streams `ceil(cols / p_in)` MAC cycles per lane, then `log2(p_in)` tree
/// levels and one final accumulate.
pub fn estimate_cycles(rows: usize, cols: usize, p: ParallelismParams) -> Result<CostEstimate> {
    p.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::ShapeMismatch(format!(
            "matvec dimensions must be positive, got {rows}x{cols}"
        )));
    }
    let chunks = rows.div_ceil(p.num_parallel_out) as u64;
    let per_chunk = cols.div_ceil(p.num_parallel_in) as u64
        + p.num_parallel_in.trailing_zeros() as u64
        + 1;
    Ok(CostEstimate {
        mac_count: (rows * cols) as u64,
        estimated_cycles: chunks * per_chunk,
        weight_buffer_elems: (p.num_parallel_out * cols) as u64,
    })
}
