//! The autoregressive generation loop.
//!
//! Each step feeds one scalar through every dilated layer (block-major),
//! applies the fully connected layer, picks the highest logit and feeds the
//! dequantized bin back as the next input. [`Session`] does this with
//! cyclic queues in constant work per sample; [`NaiveSession`] recomputes
//! every activation in the receptive field from the raw input history and
//! serves as the reference.

use serde::{Deserialize, Serialize};

use crate::arith::{Arithmetic, FixedArith, RealArith};
use crate::config::{validate_config, LayerSpec, ModelConfig, NumberMode};
use crate::error::{Error, Result};
use crate::matmul::{matvec_into, ParallelismParams};
use crate::queue::{dilated_conv_step, naive_dilated_conv, LayerKernels, LayerState};
use crate::tensor::Matrix;
use crate::weights::WeightSet;

/// Bin of `x` after clamping to `[-1, 1]`:
/// `round((x + 1) / 2 * (levels - 1))`, ties away from zero.
pub fn quantize(x: f64, levels: usize) -> usize {
    let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
    let top = (levels - 1) as f64;
    ((x + 1.0) / 2.0 * top).round().clamp(0.0, top) as usize
}

pub fn dequantize(bin: usize, levels: usize) -> Result<f64> {
    if levels < 2 || bin >= levels {
        return Err(Error::BinOutOfRange { bin, levels });
    }
    Ok(2.0 * bin as f64 / (levels - 1) as f64 - 1.0)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax_sample<T: PartialOrd + Copy>(logits: &[T]) -> Result<usize> {
    let (first, rest) = logits.split_first().ok_or(Error::EmptyInput)?;
    let mut best = *first;
    let mut best_idx = 0;
    for (i, &v) in rest.iter().enumerate() {
        if v > best {
            best = v;
            best_idx = i + 1;
        }
    }
    Ok(best_idx)
}

/// `logits = x * W + b` with `W` shaped `inputs x outputs`.
pub fn fc_forward<A: Arithmetic>(
    arith: &A,
    w: &Matrix<A::Value>,
    b: &[A::Value],
    x: &[A::Value],
    p: ParallelismParams,
) -> Result<Vec<A::Value>> {
    if x.len() != w.rows() || b.len() != w.cols() {
        return Err(Error::ShapeMismatch(format!(
            "fc weight {:?} with input {} and bias {}",
            w.shape(),
            x.len(),
            b.len()
        )));
    }
    let wt = w.transpose();
    let mut out = vec![arith.zero(); wt.rows()];
    matvec_into(arith, &wt, x, Some(b), p, &mut out)?;
    Ok(out)
}

/// Engine settings for every conv layer plus the FC layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parallelism {
    pub layers: Vec<ParallelismParams>,
    pub fc: ParallelismParams,
}

impl Parallelism {
    /// `8 x 4` everywhere except the single-input first layer, which runs
    /// serially.
    pub fn default_for(cfg: &ModelConfig) -> Result<Self> {
        let layers = validate_config(cfg)?
            .iter()
            .map(|s| {
                if s.in_channels == 1 {
                    ParallelismParams::SERIAL
                } else {
                    ParallelismParams::default()
                }
            })
            .collect();
        Ok(Self {
            layers,
            fc: ParallelismParams::default(),
        })
    }

    pub fn uniform(cfg: &ModelConfig, p: ParallelismParams) -> Result<Self> {
        Ok(Self {
            layers: vec![p; cfg.total_layers()],
            fc: p,
        })
    }

    fn validate(&self, layers: usize) -> Result<()> {
        if self.layers.len() != layers {
            return Err(Error::InvalidParallelism(format!(
                "{} layer settings for {layers} layers",
                self.layers.len()
            )));
        }
        self.layers.iter().try_for_each(|p| p.validate())?;
        self.fc.validate()
    }
}

/// Weights converted into one arithmetic, ready for inference.
#[derive(Debug, Clone)]
pub struct Network<A: Arithmetic> {
    arith: A,
    specs: Vec<LayerSpec>,
    kernels: Vec<LayerKernels<A::Value>>,
    /// FC weight transposed to `levels x channels` for row-wise dot products.
    fc_rows: Matrix<A::Value>,
    fc_bias: Vec<A::Value>,
    parallelism: Parallelism,
    quant_levels: usize,
}

impl<A: Arithmetic> Network<A> {
    pub fn new(
        arith: A,
        cfg: &ModelConfig,
        ws: &WeightSet,
        parallelism: Parallelism,
    ) -> Result<Self> {
        let specs = ws.check_shapes(cfg)?;
        parallelism.validate(specs.len())?;
        let conv = |m: &Matrix<f32>| m.map(|v| arith.from_f64(v as f64));
        let kernels = ws
            .kernels
            .iter()
            .map(|k| LayerKernels {
                delayed: conv(&k.delayed),
                current: conv(&k.current),
            })
            .collect();
        Ok(Self {
            arith,
            specs,
            kernels,
            fc_rows: conv(&ws.fc_weight.transpose()),
            fc_bias: ws.fc_bias.iter().map(|&b| arith.from_f64(b as f64)).collect(),
            parallelism,
            quant_levels: cfg.quant_levels,
        })
    }

    pub fn arith(&self) -> &A {
        &self.arith
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn quant_levels(&self) -> usize {
        self.quant_levels
    }

    pub fn parallelism(&self) -> &Parallelism {
        &self.parallelism
    }

    /// Matvec invocations one queue-based step performs.
    pub fn matvecs_per_step(&self) -> u64 {
        2 * self.specs.len() as u64 + 1
    }
}

/// Something that maps one input sample to a logit vector, advancing its
/// internal time by one step.
pub trait Stepper<A: Arithmetic> {
    fn network(&self) -> &Network<A>;
    fn step(&mut self, input: f64) -> Result<&[A::Value]>;
    /// Logits of the most recent step.
    fn logits(&self) -> &[A::Value];
    /// Matvecs performed by the most recent step.
    fn last_step_matvecs(&self) -> u64;
    fn steps(&self) -> u64;
}

/// Mutable state of one queue-based generation session.
#[derive(Debug, Clone)]
pub struct GenerationState<A: Arithmetic> {
    /// Block-major, then layer order.
    pub layers: Vec<LayerState<A>>,
    pub step: u64,
}

/// Queue-based generator: constant work per sample.
#[derive(Debug, Clone)]
pub struct Session<'n, A: Arithmetic> {
    net: &'n Network<A>,
    state: GenerationState<A>,
    input: [A::Value; 1],
    logits: Vec<A::Value>,
    last_matvecs: u64,
    total_matvecs: u64,
}

impl<'n, A: Arithmetic> Session<'n, A> {
    pub fn new(net: &'n Network<A>) -> Result<Self> {
        let layers = net
            .specs
            .iter()
            .map(|&s| LayerState::new(&net.arith, s))
            .collect::<Result<_>>()?;
        Ok(Self {
            net,
            state: GenerationState { layers, step: 0 },
            input: [net.arith.zero()],
            logits: vec![net.arith.zero(); net.quant_levels],
            last_matvecs: 0,
            total_matvecs: 0,
        })
    }

    pub fn state(&self) -> &GenerationState<A> {
        &self.state
    }

    pub fn total_matvecs(&self) -> u64 {
        self.total_matvecs
    }

    /// Output of layer `index` from the most recent step.
    pub fn layer_output(&self, index: usize) -> &[A::Value] {
        &self.state.layers[index].last_output
    }
}

impl<A: Arithmetic> Stepper<A> for Session<'_, A> {
    fn network(&self) -> &Network<A> {
        self.net
    }

    fn step(&mut self, input: f64) -> Result<&[A::Value]> {
        let net = self.net;
        let arith = &net.arith;
        self.input[0] = arith.from_f64(input);
        let mut matvecs = 0;
        let layers = &mut self.state.layers;
        for i in 0..layers.len() {
            let (done, rest) = layers.split_at_mut(i);
            let prev: &[A::Value] = match done.last() {
                Some(l) => &l.last_output,
                None => &self.input,
            };
            dilated_conv_step(
                arith,
                &mut rest[0],
                prev,
                &net.kernels[i],
                net.parallelism.layers[i],
                true,
            )?;
            matvecs += 2;
        }
        let last: &[A::Value] = match layers.last() {
            Some(l) => &l.last_output,
            None => &self.input,
        };
        matvec_into(
            arith,
            &net.fc_rows,
            last,
            Some(&net.fc_bias),
            net.parallelism.fc,
            &mut self.logits,
        )?;
        matvecs += 1;
        self.state.step += 1;
        self.last_matvecs = matvecs;
        self.total_matvecs += matvecs;
        Ok(&self.logits)
    }

    fn logits(&self) -> &[A::Value] {
        &self.logits
    }

    fn last_step_matvecs(&self) -> u64 {
        self.last_matvecs
    }

    fn steps(&self) -> u64 {
        self.state.step
    }
}

/// Reference generator that keeps only the raw input history and, at every
/// step, recomputes each layer over all positions the current output
/// depends on. Work per sample grows with `t` until the receptive field is
/// full.
#[derive(Debug, Clone)]
pub struct NaiveSession<'n, A: Arithmetic> {
    net: &'n Network<A>,
    inputs: Vec<Vec<A::Value>>,
    /// For layer `n`, how many positions back its outputs are still needed.
    spans: Vec<usize>,
    logits: Vec<A::Value>,
    last_outputs: Vec<Vec<A::Value>>,
    last_matvecs: u64,
}

impl<'n, A: Arithmetic> NaiveSession<'n, A> {
    pub fn new(net: &'n Network<A>) -> Self {
        let n = net.specs.len();
        let mut spans = vec![0; n];
        for i in (0..n.saturating_sub(1)).rev() {
            spans[i] = spans[i + 1] + net.specs[i + 1].dilation;
        }
        Self {
            net,
            inputs: Vec::new(),
            spans,
            logits: vec![net.arith.zero(); net.quant_levels],
            last_outputs: net
                .specs
                .iter()
                .map(|s| vec![net.arith.zero(); s.out_channels])
                .collect(),
            last_matvecs: 0,
        }
    }

    pub fn layer_output(&self, index: usize) -> &[A::Value] {
        &self.last_outputs[index]
    }
}

impl<A: Arithmetic> Stepper<A> for NaiveSession<'_, A> {
    fn network(&self) -> &Network<A> {
        self.net
    }

    fn step(&mut self, input: f64) -> Result<&[A::Value]> {
        let net = self.net;
        let arith = &net.arith;
        self.inputs.push(vec![arith.from_f64(input)]);
        let t = self.inputs.len() - 1;
        let mut matvecs = 0;

        // `window[k]` holds the previous layer's output at position `lo + k`.
        let first_span = self.spans.first().copied().unwrap_or(0)
            + net.specs.first().map_or(0, |s| s.dilation);
        let mut lo = t.saturating_sub(first_span);
        let mut window: Vec<Vec<A::Value>> = self.inputs[lo..=t].to_vec();

        for (n, spec) in net.specs.iter().enumerate() {
            let out_lo = t.saturating_sub(self.spans[n]);
            let mut next = Vec::with_capacity(t - out_lo + 1);
            for q in out_lo..=t {
                let mut o = naive_dilated_conv(arith, &window[..=q - lo], &net.kernels[n], spec.dilation)?;
                for v in &mut o {
                    *v = arith.tanh(*v);
                }
                next.push(o);
                matvecs += 2;
            }
            if let Some(o) = next.last() {
                self.last_outputs[n].clone_from(o);
            }
            window = next;
            lo = out_lo;
        }

        let last = match window.last() {
            Some(v) => v.clone(),
            None => vec![arith.from_f64(input)],
        };
        for (j, logit) in self.logits.iter_mut().enumerate() {
            let mut acc = arith.zero();
            for (i, &x) in last.iter().enumerate() {
                acc = arith.add(acc, arith.mul(x, net.fc_rows.get(j, i)));
            }
            *logit = arith.add(acc, net.fc_bias[j]);
        }
        matvecs += 1;

        self.last_matvecs = matvecs;
        Ok(&self.logits)
    }

    fn logits(&self) -> &[A::Value] {
        &self.logits
    }

    fn last_step_matvecs(&self) -> u64 {
        self.last_matvecs
    }

    fn steps(&self) -> u64 {
        self.inputs.len() as u64
    }
}

/// Matvec count of the naive reference at 0-based step `t`.
pub fn naive_matvecs_at_step(cfg: &ModelConfig, t: usize) -> Result<u64> {
    let specs = validate_config(cfg)?;
    let mut span = 0usize;
    let mut total = 1u64;
    for s in specs.iter().rev() {
        total += 2 * (span.min(t) as u64 + 1);
        span += s.dilation;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    /// Samples in `[-1, 1]`, each exactly `dequantize(bins[i])`.
    pub samples: Vec<f64>,
    pub bins: Vec<usize>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// What a generation step observed, passed to the callback of
/// [`run_generation`].
pub struct StepRecord<'a, V> {
    /// 0-based index of the emitted sample, `None` while warming up on the
    /// seed.
    pub emitted: Option<usize>,
    pub logits: &'a [V],
    pub bin: usize,
    pub matvecs: u64,
}

/// Drives any [`Stepper`] through seed warm-up and `n` emitted samples.
///
/// Seed samples are teacher-forced; the argmax of the last seed step
/// becomes the first generated input. An empty seed means a single zero
/// sample. Every layer therefore sees `n + max(len(seed), 1)` steps.
pub fn run_generation<A: Arithmetic, S: Stepper<A>>(
    stepper: &mut S,
    seed: &[f64],
    n: usize,
    sample_rate: u32,
    mut observe: impl FnMut(&StepRecord<'_, A::Value>),
) -> Result<Waveform> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    if let Some(bad) = seed.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
        return Err(Error::InvalidConfig(format!("seed sample {bad} outside [-1, 1]")));
    }
    let levels = stepper.network().quant_levels();
    let zero_seed = [0.0];
    let seed = if seed.is_empty() { &zero_seed[..] } else { seed };

    let mut bin = 0;
    for &s in seed {
        stepper.step(s)?;
        bin = argmax_sample(stepper.logits())?;
        observe(&StepRecord {
            emitted: None,
            logits: stepper.logits(),
            bin,
            matvecs: stepper.last_step_matvecs(),
        });
    }

    let mut samples = Vec::with_capacity(n);
    let mut bins = Vec::with_capacity(n);
    let mut x = dequantize(bin, levels)?;
    for k in 0..n {
        stepper.step(x)?;
        bin = argmax_sample(stepper.logits())?;
        x = dequantize(bin, levels)?;
        samples.push(x);
        bins.push(bin);
        observe(&StepRecord {
            emitted: Some(k),
            logits: stepper.logits(),
            bin,
            matvecs: stepper.last_step_matvecs(),
        });
    }
    Ok(Waveform {
        samples,
        bins,
        sample_rate,
    })
}

/// Queue-based generation in the requested number mode.
pub fn generate(
    cfg: &ModelConfig,
    ws: &WeightSet,
    seed: &[f64],
    n: usize,
    mode: NumberMode,
    parallelism: &Parallelism,
) -> Result<Waveform> {
    match mode {
        NumberMode::Real => generate_with(RealArith, cfg, ws, seed, n, parallelism),
        NumberMode::Fixed(fmt) => generate_with(FixedArith::new(fmt), cfg, ws, seed, n, parallelism),
    }
}

pub fn generate_with<A: Arithmetic>(
    arith: A,
    cfg: &ModelConfig,
    ws: &WeightSet,
    seed: &[f64],
    n: usize,
    parallelism: &Parallelism,
) -> Result<Waveform> {
    let net = Network::new(arith, cfg, ws, parallelism.clone())?;
    let mut session = Session::new(&net)?;
    run_generation(&mut session, seed, n, cfg.sample_rate, |_| {})
}

/// Naive reference generation in 32-bit reals.
pub fn generate_naive(cfg: &ModelConfig, ws: &WeightSet, seed: &[f64], n: usize) -> Result<Waveform> {
    generate_naive_with(RealArith, cfg, ws, seed, n)
}

pub fn generate_naive_with<A: Arithmetic>(
    arith: A,
    cfg: &ModelConfig,
    ws: &WeightSet,
    seed: &[f64],
    n: usize,
) -> Result<Waveform> {
    let net = Network::new(arith, cfg, ws, Parallelism::uniform(cfg, ParallelismParams::SERIAL)?)?;
    let mut session = NaiveSession::new(&net);
    run_generation(&mut session, seed, n, cfg.sample_rate, |_| {})
}

/// Feeds `inputs` through the conv stack without feedback, calling
/// `visit(step, layer, output)` for every layer output as f64.
pub fn teacher_force<A: Arithmetic>(
    net: &Network<A>,
    inputs: &[f64],
    mut visit: impl FnMut(usize, usize, &[f64]),
) -> Result<()> {
    let mut session = Session::new(net)?;
    let mut buf = Vec::new();
    for (t, &x) in inputs.iter().enumerate() {
        session.step(x)?;
        for layer in 0..net.specs.len() {
            buf.clear();
            buf.extend(session.layer_output(layer).iter().map(|&v| net.arith.to_f64(v)));
            visit(t, layer, &buf);
        }
    }
    Ok(())
}

/// Per-layer activation traces: `traces[layer][step][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTraces {
    pub traces: Vec<Vec<Vec<f64>>>,
}

pub fn teacher_forced_layer_outputs(
    cfg: &ModelConfig,
    ws: &WeightSet,
    inputs: &[f64],
    mode: NumberMode,
) -> Result<LayerTraces> {
    let parallelism = Parallelism::default_for(cfg)?;
    let mut traces = vec![Vec::with_capacity(inputs.len()); cfg.total_layers()];
    let mut visit = |_t: usize, layer: usize, out: &[f64]| traces[layer].push(out.to_vec());
    match mode {
        NumberMode::Real => {
            teacher_force(&Network::new(RealArith, cfg, ws, parallelism)?, inputs, &mut visit)?
        }
        NumberMode::Fixed(fmt) => teacher_force(
            &Network::new(FixedArith::new(fmt), cfg, ws, parallelism)?,
            inputs,
            &mut visit,
        )?,
    }
    Ok(LayerTraces { traces })
}
