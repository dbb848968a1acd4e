use std::collections::BTreeSet;

use fastwave::config::{estimate_queue_memory, receptive_field, validate_config};
use fastwave::weights::{load_weights, random_weights, read_weights, save_weights, write_weights};
use fastwave::{Error, ModelConfig};
use proptest::prelude::*;

/// Walks the dependency graph of one output sample down to the input layer
/// and counts the distinct input positions it reaches.
fn reachable_inputs(cfg: &ModelConfig) -> usize {
    let specs = validate_config(cfg).unwrap();
    let t = 1_000_000i64;
    let mut frontier: BTreeSet<i64> = BTreeSet::from([t]);
    for spec in specs.iter().rev() {
        frontier = frontier
            .iter()
            .flat_map(|&pos| [pos, pos - spec.dilation as i64])
            .collect();
    }
    frontier.len()
}

#[test]
fn receptive_field_matches_graph_traversal() {
    for (blocks, layers) in [(1, 1), (1, 4), (2, 3), (3, 5), (2, 14)] {
        let cfg = ModelConfig::new(blocks, layers, 4);
        assert_eq!(
            receptive_field(&cfg).unwrap(),
            reachable_inputs(&cfg),
            "{blocks} x {layers}"
        );
    }
    assert_eq!(reachable_inputs(&ModelConfig::new(1, 4, 4)), 16);
    assert_eq!(reachable_inputs(&ModelConfig::default()), 32_767);
}

#[test]
fn queue_sizes_follow_reference_table() {
    let mem = estimate_queue_memory(&ModelConfig::default()).unwrap();
    let expected_block1 = [
        1, 256, 512, 1024, 2048, 4096, 8192, 16384, 32768, 65536, 131072, 262144, 524288, 1048576,
    ];
    let expected_block2 = [
        128, 256, 512, 1024, 2048, 4096, 8192, 16384, 32768, 65536, 131072, 262144, 524288, 1048576,
    ];
    let got: Vec<usize> = mem.per_layer.iter().map(|(_, n)| *n).collect();
    assert_eq!(&got[..14], &expected_block1);
    assert_eq!(&got[14..], &expected_block2);
    assert_eq!(mem.total, got.iter().sum::<usize>());
}

#[test]
fn validate_is_deterministic() {
    let cfg = ModelConfig::new(2, 6, 16);
    assert_eq!(validate_config(&cfg).unwrap(), validate_config(&cfg).unwrap());
}

#[test]
fn file_round_trip_and_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    let cfg = ModelConfig::new(2, 3, 5).with_quant_levels(16);
    let ws = random_weights(&cfg, 11, 0.3).unwrap();
    save_weights(&path, &cfg, &ws).unwrap();
    assert_eq!(load_weights(&path, &cfg).unwrap(), ws);

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"FWAVE001");
    // header: blocks, layers, width, channels, levels, rate
    let header: Vec<u32> = bytes[8..32]
        .chunks(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(header, vec![2, 3, 2, 5, 16, 16_000]);
    // first value is K[1][0][0][0]
    let first = f32::from_le_bytes(bytes[32..36].try_into().unwrap());
    assert_eq!(first, ws.kernels[0].delayed.get(0, 0));

    let other = ModelConfig::new(2, 3, 6).with_quant_levels(16);
    assert!(matches!(load_weights(&path, &other), Err(Error::ShapeMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_load_is_bit_exact(
        blocks in 1usize..3,
        layers in 1usize..5,
        channels in 1usize..7,
        levels in 2usize..20,
        seed in any::<u64>(),
        scale in 0.001f32..10.0,
    ) {
        let cfg = ModelConfig::new(blocks, layers, channels).with_quant_levels(levels);
        let ws = random_weights(&cfg, seed, scale).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &cfg, &ws).unwrap();
        let (back_cfg, back) = read_weights(&buf[..]).unwrap();
        prop_assert_eq!(&back_cfg, &cfg);
        let a: Vec<u32> = ws.values().map(f32::to_bits).collect();
        let b: Vec<u32> = back.values().map(f32::to_bits).collect();
        prop_assert_eq!(a, b);
    }
}
