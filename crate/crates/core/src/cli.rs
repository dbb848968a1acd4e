//! Command-line front end.

use std::collections::VecDeque;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{Arithmetic, FixedArith, IntRing, RealArith};
use crate::config::{validate_config, ModelConfig, NumberMode};
use crate::inference::{run_generation, NaiveSession, Network, Parallelism, Session, Waveform};
use crate::matmul::{estimate_cycles, matvec, ParallelismParams};
use crate::metrics::{self, SpectrogramParams, Window};
use crate::queue::CyclicQueue;
use crate::tensor::Matrix;
use crate::wav;
use crate::weights::{lattice_weights, load_weights, random_weights, save_weights};

#[derive(Debug, Parser)]
#[command(name = "fastwave", version, about = "Autoregressive WaveNet inference with cyclic queues")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate audio and write it as 16-bit PCM WAV.
    Generate(GenerateArgs),
    /// Check the queue-based engine against its reference implementations.
    Verify(VerifyArgs),
    /// Print MSE and log-spectral distance between two WAV files.
    Compare(CompareArgs),
    /// Tabulate the matvec cycle model per layer and parallelism setting.
    Explore(ExploreArgs),
    /// Write a normalized log spectrogram of a WAV file as CSV.
    Spectrogram(SpectrogramArgs),
    /// Write a config file and seeded random weights for it.
    Init(InitArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Seconds of audio at the configured sample rate.
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    /// Exact sample count; overrides --seconds.
    #[arg(long)]
    pub samples: Option<usize>,
    /// `real` or `fixed<T,I>`; defaults to the config's number_format.
    #[arg(long)]
    pub mode: Option<NumberMode>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Comma-separated seed samples in [-1, 1].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub seed_samples: Vec<f64>,
    /// num_parallel_out for every multi-channel layer and the FC layer.
    #[arg(long)]
    pub pout: Option<usize>,
    /// num_parallel_in for every multi-channel layer and the FC layer.
    #[arg(long)]
    pub pin: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub samples: usize,
}

#[derive(Debug, Args, Clone)]
pub struct StftArgs {
    #[arg(long, default_value_t = 512)]
    pub window_size: usize,
    #[arg(long, default_value_t = 128)]
    pub hop: usize,
    #[arg(long, default_value = "hann")]
    pub window: Window,
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
}

impl StftArgs {
    fn params(&self) -> SpectrogramParams {
        SpectrogramParams {
            window_size: self.window_size,
            hop: self.hop,
            window: self.window,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[command(flatten)]
    pub stft: StftArgs,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub pout_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub pin_list: Vec<usize>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub stft: StftArgs,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Config to write; an existing file is read instead of overwritten.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.25)]
    pub scale: f32,
}

/// Throughput and provenance of one `generate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub samples_generated: usize,
    pub wall_time: f64,
    pub throughput_hz: f64,
    pub number_mode: String,
    pub sample_rate: u32,
    pub parallelism: Parallelism,
    pub config_hash: String,
    pub weights_hash: String,
}

impl RunReport {
    pub fn new(
        samples_generated: usize,
        wall_time: f64,
        mode: NumberMode,
        cfg: &ModelConfig,
        parallelism: Parallelism,
        weights_hash: String,
    ) -> anyhow::Result<Self> {
        Ok(Self {
            samples_generated,
            wall_time,
            throughput_hz: samples_generated as f64 / wall_time,
            number_mode: mode.to_string(),
            sample_rate: cfg.sample_rate,
            parallelism,
            config_hash: sha256_hex(cfg.to_json_string()?.as_bytes()),
            weights_hash,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on failure, 2 on bad
/// arguments.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Runs a parsed command, writing its normal output to `out`.
pub fn execute(command: Command, out: &mut dyn Write) -> anyhow::Result<i32> {
    match command {
        Command::Generate(args) => cmd_generate(args, out),
        Command::Verify(args) => cmd_verify(args, out),
        Command::Compare(args) => cmd_compare(args, out),
        Command::Explore(args) => cmd_explore(args, out),
        Command::Spectrogram(args) => cmd_spectrogram(args, out),
        Command::Init(args) => cmd_init(args, out),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ModelConfig> {
    match path {
        Some(p) => ModelConfig::load_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ModelConfig::default()),
    }
}

fn cmd_init(args: InitArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = if args.config.exists() {
        load_config(Some(&args.config))?
    } else {
        let cfg = ModelConfig::default();
        cfg.save_json(&args.config)?;
        cfg
    };
    let ws = random_weights(&cfg, args.seed, args.scale)?;
    save_weights(&args.weights, &cfg, &ws)?;
    writeln!(
        out,
        "wrote {} layers of weights to {}",
        cfg.total_layers(),
        args.weights.display()
    )?;
    Ok(0)
}

fn cmd_generate(args: GenerateArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = load_config(Some(&args.config))?;
    let ws = load_weights(&args.weights, &cfg)
        .with_context(|| format!("reading weights {}", args.weights.display()))?;
    let weights_hash = sha256_hex(&std::fs::read(&args.weights)?);
    let mode = match args.mode {
        Some(m) => m,
        None => cfg.number_mode()?,
    };
    let n = match args.samples {
        Some(n) => n,
        None => {
            ensure!(args.seconds > 0.0, "--seconds must be positive");
            (args.seconds * cfg.sample_rate as f64).round() as usize
        }
    };
    ensure!(n >= 1, "nothing to generate");

    let mut parallelism = Parallelism::default_for(&cfg)?;
    if args.pout.is_some() || args.pin.is_some() {
        let p = ParallelismParams::new(
            args.pout.unwrap_or(ParallelismParams::default().num_parallel_out),
            args.pin.unwrap_or(ParallelismParams::default().num_parallel_in),
        )?;
        for (slot, spec) in parallelism.layers.iter_mut().zip(validate_config(&cfg)?) {
            if spec.in_channels > 1 {
                *slot = p;
            }
        }
        parallelism.fc = p;
    }

    let start = Instant::now();
    let waveform = match mode {
        NumberMode::Real => timed_generation(RealArith, &cfg, &ws, &args.seed_samples, n, &parallelism)?,
        NumberMode::Fixed(fmt) => timed_generation(
            FixedArith::new(fmt),
            &cfg,
            &ws,
            &args.seed_samples,
            n,
            &parallelism,
        )?,
    };
    let wall = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    wav::write_wav(&args.out, &waveform)?;

    let report = RunReport::new(n, wall, mode, &cfg, parallelism, weights_hash)?;
    writeln!(
        out,
        "generated {} samples in {:.3} s ({:.1} samples/s, {})",
        report.samples_generated, report.wall_time, report.throughput_hz, report.number_mode
    )?;
    if let Some(path) = args.report {
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(0)
}

fn timed_generation<A: Arithmetic>(
    arith: A,
    cfg: &ModelConfig,
    ws: &crate::weights::WeightSet,
    seed: &[f64],
    n: usize,
    parallelism: &Parallelism,
) -> anyhow::Result<Waveform> {
    let net = Network::new(arith, cfg, ws, parallelism.clone())?;
    let mut session = Session::new(&net)?;
    Ok(run_generation(&mut session, seed, n, cfg.sample_rate, |_| {})?)
}

fn cmd_compare(args: CompareArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let (a, rate_a) = wav::read_wav(&args.a).with_context(|| format!("reading {}", args.a.display()))?;
    let (b, rate_b) = wav::read_wav(&args.b).with_context(|| format!("reading {}", args.b.display()))?;
    ensure!(rate_a == rate_b, "sample rates differ: {rate_a} vs {rate_b}");
    let report = metrics::compare(&a, &b, &args.stft.params())?;
    writeln!(out, "{}", serde_json::to_string(&report)?)?;
    Ok(0)
}

fn cmd_spectrogram(args: SpectrogramArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let (x, _) = wav::read_wav(&args.input)?;
    let params = args.stft.params();
    metrics::export_spectrogram(&x, &params, &args.out)?;
    writeln!(
        out,
        "wrote {} frames x {} bins to {}",
        params.frame_count(x.len()),
        params.bin_count(),
        args.out.display()
    )?;
    Ok(0)
}

pub const EXPLORE_HEADER: &str = "layer,block,layer_index,rows,cols,matvecs_per_step,num_parallel_out,num_parallel_in,mac_count,estimated_cycles,weight_buffer_elems";

/// Cost-model table for every conv layer and the FC layer under every
/// parallelism combination.
pub fn explore_csv(cfg: &ModelConfig, pouts: &[usize], pins: &[usize]) -> anyhow::Result<String> {
    let specs = validate_config(cfg)?;
    let mut shapes: Vec<(String, String, String, usize, usize, u32)> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (
                i.to_string(),
                s.block_index.to_string(),
                s.layer_index.to_string(),
                s.out_channels,
                s.in_channels,
                2,
            )
        })
        .collect();
    shapes.push((
        "fc".into(),
        String::new(),
        String::new(),
        cfg.quant_levels,
        cfg.channels,
        1,
    ));

    let mut csv = String::from(EXPLORE_HEADER);
    csv.push('\n');
    for (name, block, layer, rows, cols, per_step) in &shapes {
        for &pout in pouts {
            for &pin in pins {
                let p = ParallelismParams::new(pout, pin)?;
                let c = estimate_cycles(*rows, *cols, p)?;
                csv.push_str(&format!(
                    "{name},{block},{layer},{rows},{cols},{per_step},{pout},{pin},{},{},{}\n",
                    c.mac_count, c.estimated_cycles, c.weight_buffer_elems
                ));
            }
        }
    }
    Ok(csv)
}

fn cmd_explore(args: ExploreArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = load_config(args.config.as_deref())?;
    let csv = explore_csv(&cfg, &args.pout_list, &args.pin_list)?;
    match args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(0)
}

/// Shrinks a config to something the naive reference can run quickly.
pub fn reduced_config(cfg: &ModelConfig) -> ModelConfig {
    ModelConfig {
        num_blocks: cfg.num_blocks.min(2),
        layers_per_block: cfg.layers_per_block.min(5),
        channels: cfg.channels.min(8),
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Oracle-equivalence checks run by `verify`.
pub fn verification_suite(cfg: &ModelConfig, seed: u64, samples: usize) -> anyhow::Result<Vec<CheckOutcome>> {
    let cfg = reduced_config(cfg);
    validate_config(&cfg)?;
    let mut outcomes = Vec::new();

    // Queue-based vs naive generation, 32-bit reals.
    let ws = random_weights(&cfg, seed, 0.25)?;
    let par = Parallelism::default_for(&cfg)?;
    let net = Network::new(RealArith, &cfg, &ws, par.clone())?;
    let naive_net = Network::new(RealArith, &cfg, &ws, Parallelism::uniform(&cfg, ParallelismParams::SERIAL)?)?;
    let (fast, fast_logits) = logged_generation(&mut Session::new(&net)?, samples, cfg.sample_rate)?;
    let (slow, slow_logits) = logged_generation(&mut NaiveSession::new(&naive_net), samples, cfg.sample_rate)?;
    let max_dev = fast_logits
        .iter()
        .flatten()
        .zip(slow_logits.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    outcomes.push(CheckOutcome {
        name: "generate-vs-naive-real",
        passed: fast.bins == slow.bins && max_dev <= 1e-5,
        detail: format!("{samples} samples, max logit deviation {max_dev:.3e}"),
    });

    // Same, exact ring arithmetic.
    let ws = lattice_weights(&cfg, seed, 2)?;
    let net = Network::new(IntRing, &cfg, &ws, par)?;
    let naive_net = Network::new(IntRing, &cfg, &ws, Parallelism::uniform(&cfg, ParallelismParams::SERIAL)?)?;
    let (fast, fast_logits) = logged_generation(&mut Session::new(&net)?, samples, cfg.sample_rate)?;
    let (slow, slow_logits) = logged_generation(&mut NaiveSession::new(&naive_net), samples, cfg.sample_rate)?;
    outcomes.push(CheckOutcome {
        name: "generate-vs-naive-exact",
        passed: fast.bins == slow.bins && fast_logits == slow_logits,
        detail: format!("{samples} samples, integer-lattice weights"),
    });

    // Matmul engine against a plain row loop.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut matmul_ok = true;
    for n in [16usize, 128] {
        let wi = Matrix::from_fn(n, n, |_, _| rng.random_range(-1000i64..=1000));
        let xi: Vec<i64> = (0..n).map(|_| rng.random_range(-1000i64..=1000)).collect();
        let wf = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0f32..=1.0));
        let xf: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
        let want_i: Vec<i64> = (0..n).map(|r| wi.row(r).iter().zip(&xi).map(|(a, b)| a * b).sum()).collect();
        let want_f: Vec<f64> = (0..n)
            .map(|r| wf.row(r).iter().zip(&xf).map(|(&a, &b)| a as f64 * b as f64).sum())
            .collect();
        for pout in [1, 2, 4, 8] {
            for pin in [1, 2, 4, 8] {
                let p = ParallelismParams::new(pout, pin)?;
                matmul_ok &= matvec(&IntRing, &wi, &xi, None, p)? == want_i;
                let got = matvec(&RealArith, &wf, &xf, None, p)?;
                matmul_ok &= normwise_relative_error(&got, &want_f) <= 1e-6;
            }
        }
    }
    outcomes.push(CheckOutcome {
        name: "matmul-parity",
        passed: matmul_ok,
        detail: "16x16 and 128x128, p_out and p_in in {1,2,4,8}".into(),
    });

    // Ring buffer against a shifting FIFO.
    let mut fifo_ok = true;
    for len in [1usize, 2, 3, 7, 64] {
        let mut q = CyclicQueue::filled(len, 2, 0i64)?;
        let mut fifo: VecDeque<[i64; 2]> = std::iter::repeat_n([0, 0], len).collect();
        for _ in 0..500 {
            fifo_ok &= q.front() == fifo[0];
            let v = [rng.random_range(-99i64..=99), rng.random_range(-99i64..=99)];
            q.push(&v)?;
            fifo.pop_front();
            fifo.push_back(v);
        }
    }
    outcomes.push(CheckOutcome {
        name: "queue-fifo-parity",
        passed: fifo_ok,
        detail: "queue lengths 1, 2, 3, 7, 64; 500 pushes each".into(),
    });

    Ok(outcomes)
}

/// `max |got - want| / max |want|`, the vector analogue of relative error.
pub fn normwise_relative_error(got: &[f32], want: &[f64]) -> f64 {
    let err = got.iter().zip(want).map(|(&g, &w)| (g as f64 - w).abs()).fold(0.0, f64::max);
    let scale = want.iter().map(|w| w.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

fn logged_generation<A: Arithmetic, S: crate::inference::Stepper<A>>(
    stepper: &mut S,
    n: usize,
    sample_rate: u32,
) -> anyhow::Result<(Waveform, Vec<Vec<f64>>)> {
    let mut logits = Vec::with_capacity(n + 1);
    let arith = *stepper.network().arith();
    let wf = run_generation(stepper, &[], n, sample_rate, |rec| {
        logits.push(rec.logits.iter().map(|&v| arith.to_f64(v)).collect());
    })?;
    Ok((wf, logits))
}

fn cmd_verify(args: VerifyArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = load_config(args.config.as_deref())?;
    if args.samples == 0 {
        bail!("--samples must be at least 1");
    }
    let outcomes = verification_suite(&cfg, args.seed, args.samples)?;
    let mut all = true;
    for o in &outcomes {
        writeln!(out, "{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail)?;
        all &= o.passed;
    }
    Ok(if all { 0 } else { 1 })
}
