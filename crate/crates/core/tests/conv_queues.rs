use std::collections::VecDeque;

use fastwave::config::validate_config;
use fastwave::queue::{dilated_conv_step, naive_dilated_conv, LayerKernels};
use fastwave::{Arithmetic, CyclicQueue, IntRing, LayerState, Matrix, ModelConfig, ParallelismParams, RealArith};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Causal width-2 dilated convolution written out element by element in
/// f64: `out[t][o] = sum_i K0[o][i] a[t-d][i] + K1[o][i] a[t][i]`.
fn direct_conv(a: &[Vec<f32>], t: usize, k: &LayerKernels<f32>, d: usize) -> Vec<f64> {
    let (rows, cols) = k.current.shape();
    (0..rows)
        .map(|o| {
            let mut s = 0.0f64;
            for i in 0..cols {
                if t >= d {
                    s += k.delayed.get(o, i) as f64 * a[t - d][i] as f64;
                }
                s += k.current.get(o, i) as f64 * a[t][i] as f64;
            }
            s
        })
        .collect()
}

fn random_kernels<T: Copy>(
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
    mut sample: impl FnMut(&mut ChaCha8Rng) -> T,
) -> Vec<LayerKernels<T>> {
    validate_config(cfg)
        .unwrap()
        .iter()
        .map(|s| LayerKernels {
            delayed: Matrix::from_fn(s.out_channels, s.in_channels, |_, _| sample(rng)),
            current: Matrix::from_fn(s.out_channels, s.in_channels, |_, _| sample(rng)),
        })
        .collect()
}

#[test]
fn six_layer_stack_matches_history_convolution() {
    let cfg = ModelConfig::new(1, 6, 4);
    let specs = validate_config(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let kernels = random_kernels(&cfg, &mut rng, |r| r.random_range(-0.5f32..=0.5));
    let r = RealArith;
    let mut states: Vec<_> = specs.iter().map(|&s| LayerState::new(&r, s).unwrap()).collect();
    // histories[n] = every input layer n has seen so far
    let mut histories: Vec<Vec<Vec<f32>>> = vec![Vec::new(); specs.len()];

    for t in 0..200 {
        let mut prev = vec![rng.random_range(-1.0f32..=1.0)];
        for (n, spec) in specs.iter().enumerate() {
            histories[n].push(prev.clone());
            let fast = dilated_conv_step(
                &r,
                &mut states[n],
                &prev,
                &kernels[n],
                ParallelismParams::new(2, 2).unwrap(),
                true,
            )
            .unwrap()
            .to_vec();
            let naive = naive_dilated_conv(&r, &histories[n], &kernels[n], spec.dilation).unwrap();
            let direct = direct_conv(&histories[n], t, &kernels[n], spec.dilation);
            for o in 0..fast.len() {
                let nv = naive[o].tanh();
                assert!((fast[o] - nv).abs() <= 1e-6, "t {t} layer {n}");
                assert!((naive[o] as f64 - direct[o]).abs() <= 1e-5);
            }
            prev = fast;
        }
    }
    for s in &states {
        assert_eq!(s.pushes(), 200);
    }
}

#[test]
fn exact_equivalence_in_integer_ring() {
    let cfg = ModelConfig::new(2, 4, 3);
    let specs = validate_config(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let kernels = random_kernels(&cfg, &mut rng, |r| r.random_range(-3i64..=3));
    let a = IntRing;
    let mut states: Vec<_> = specs.iter().map(|&s| LayerState::new(&a, s).unwrap()).collect();
    let mut histories: Vec<Vec<Vec<i64>>> = vec![Vec::new(); specs.len()];
    for _ in 0..150 {
        let mut prev = vec![rng.random_range(-5i64..=5)];
        for (n, spec) in specs.iter().enumerate() {
            histories[n].push(prev.clone());
            let fast = dilated_conv_step(&a, &mut states[n], &prev, &kernels[n], ParallelismParams::new(8, 4).unwrap(), true)
                .unwrap()
                .to_vec();
            let naive = naive_dilated_conv(&a, &histories[n], &kernels[n], spec.dilation).unwrap();
            assert_eq!(fast, naive.iter().map(|&v| a.tanh(v)).collect::<Vec<_>>());
            prev = fast;
        }
    }
}

#[test]
fn queue_front_is_delayed_input_stream() {
    let mut q = CyclicQueue::filled(5, 1, 0i64).unwrap();
    let stream: Vec<i64> = (1..=40).collect();
    for (t, &v) in stream.iter().enumerate() {
        let expected = if t >= 5 { stream[t - 5] } else { 0 };
        assert_eq!(q.front()[0], expected);
        q.push(&[v]).unwrap();
    }
}

proptest! {
    #[test]
    fn ring_matches_shifting_fifo(
        len in 1usize..40,
        channels in 1usize..4,
        values in prop::collection::vec(-1000i64..1000, 0..200),
    ) {
        let mut q = CyclicQueue::filled(len, channels, 0i64).unwrap();
        let mut fifo: VecDeque<Vec<i64>> = (0..len).map(|_| vec![0; channels]).collect();
        for v in values {
            prop_assert_eq!(q.front(), &fifo[0][..]);
            let item = vec![v; channels];
            q.push(&item).unwrap();
            fifo.pop_front();
            fifo.push_back(item);
            prop_assert!(q.head() < len);
        }
    }

    #[test]
    fn pushes_read_back_in_order(len in 1usize..50, base in -1000i64..1000) {
        let mut q = CyclicQueue::filled(len, 1, 0i64).unwrap();
        for i in 0..len as i64 {
            q.push(&[base + i]).unwrap();
        }
        let mut seen = Vec::new();
        for _ in 0..len {
            seen.push(q.front()[0]);
            let v = q.front()[0];
            q.push(&[v]).unwrap();
        }
        prop_assert_eq!(seen, (0..len as i64).map(|i| base + i).collect::<Vec<_>>());
    }
}
