//! Sparse GEMM against a dense oracle, plus the bitwise-stability and
//! work-proportionality guarantees.

use model_graph::WeightTensor;
use proptest::prelude::*;
use pruner::{BlockConfig, PruneMask};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_runtime::{
    decode, encode, reorder_blocks, sparse_gemm, sparse_gemm_counted, PackedSparseLayer,
    SparseError, TuningConfig,
};

/// Straightforward triple loop over the masked dense weights — the oracle
/// the kernel is judged against.
fn dense_gemm(dense: &WeightTensor, input: &[f32], batch: usize) -> Vec<f32> {
    let (m, c) = (dense.rows(), dense.cols());
    let mut out = vec![0f32; m * batch];
    for row in 0..m {
        for col in 0..c {
            let w = dense.at(row, col);
            if w == 0.0 {
                continue;
            }
            for b in 0..batch {
                out[row * batch + b] += w * input[col * batch + b];
            }
        }
    }
    out
}

fn random_layer(
    seed: u64,
    dims: (usize, usize, usize, usize),
    keep_per_band: usize,
) -> (PackedSparseLayer, PruneMask, WeightTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = dims.1 * dims.2 * dims.3;
    let values = (0..dims.0 * cols).map(|_| rng.random_range(-1.5f32..1.5)).collect();
    let weights = WeightTensor::new("t".to_string(), dims, values).unwrap();
    let cfg = BlockConfig::default();
    let kept = (0..dims.0.div_ceil(cfg.gm))
        .map(|_| {
            let mut picked: Vec<u32> = index::sample(&mut rng, cols, keep_per_band.min(cols))
                .into_iter()
                .map(|c| c as u32)
                .collect();
            picked.sort_unstable();
            picked
        })
        .collect();
    let mask = PruneMask {
        layer_id: "t".into(),
        rows: dims.0,
        cols,
        cfg,
        kept,
    };
    let packed = encode(&weights, &mask).unwrap();
    (packed, mask, weights)
}

fn random_input(seed: u64, len: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

fn assert_close(got: &[f32], want: &[f32], rel: f32) {
    assert_eq!(got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        let scale = w.abs().max(1.0);
        assert!(
            (g - w).abs() <= rel * scale,
            "element {i}: {g} vs {w}"
        );
    }
}

#[test]
fn single_kept_column_selects_input_rows() {
    // One kept column per band means each output row is a scaled copy of
    // that column's input row.
    let (packed, _, _) = random_layer(1, (16, 8, 1, 1), 1);
    let masked = decode(&packed).unwrap();
    let input = random_input(2, 8 * 3);
    let out = sparse_gemm(&packed, &input, 3, &TuningConfig::serial()).unwrap();
    assert_close(&out, &dense_gemm(&masked, &input, 3), 1e-6);
}

#[test]
fn fully_punched_layer_multiplies_to_zero_with_zero_work() {
    let (packed, _, _) = random_layer(3, (24, 16, 1, 1), 0);
    let input = random_input(4, 16 * 5);
    let (out, macs) = sparse_gemm_counted(&packed, &input, 5, &TuningConfig::default()).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
    assert_eq!(macs, 0);
}

#[test]
fn multiply_count_is_exactly_kept_weights_times_batch() {
    for (seed, dims, keep, batch) in [
        (10u64, (16usize, 4usize, 3usize, 3usize), 12usize, 7usize),
        (11, (9, 32, 1, 1), 5, 1),
        (12, (40, 10, 2, 2), 17, 33),
    ] {
        let (packed, mask, _) = random_layer(seed, dims, keep);
        let input = random_input(seed, packed.cols() * batch);
        for tuning in [
            TuningConfig::serial(),
            TuningConfig::new(1, 5, 2).unwrap(),
            TuningConfig::new(8, 64, 3).unwrap(),
        ] {
            let (_, macs) = sparse_gemm_counted(&packed, &input, batch, &tuning).unwrap();
            assert_eq!(macs, mask.kept_weights() * batch as u64);
        }
    }
}

/// The accumulation order per output element is fixed (ascending global
/// column), so tile sizes, worker counts, and band permutation must have no
/// effect at all — not merely stay within tolerance.
#[test]
fn results_are_bitwise_stable_across_tuning_and_band_order() {
    let (packed, _, _) = random_layer(20, (37, 12, 3, 3), 30);
    let batch = 19;
    let input = random_input(21, packed.cols() * batch);

    let reference = sparse_gemm(&packed, &input, batch, &TuningConfig::serial()).unwrap();
    let reference_bits: Vec<u32> = reference.iter().map(|v| v.to_bits()).collect();

    let variants = [
        TuningConfig::new(1, 1, 1).unwrap(),
        TuningConfig::new(1, 3, 4).unwrap(),
        TuningConfig::new(2, 16, 2).unwrap(),
        TuningConfig::new(4, 32, 8).unwrap(),
        TuningConfig::new(100, 1000, 3).unwrap(),
    ];
    let reordered = reorder_blocks(&packed);
    for layer in [&packed, &reordered] {
        for tuning in &variants {
            let out = sparse_gemm(layer, &input, batch, tuning).unwrap();
            let bits: Vec<u32> = out.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, reference_bits, "tuning {tuning:?}");
        }
    }
}

#[test]
fn input_length_must_match_columns_times_batch() {
    let (packed, _, _) = random_layer(30, (8, 8, 1, 1), 4);
    let input = random_input(31, 8 * 3 - 1);
    assert!(matches!(
        sparse_gemm(&packed, &input, 3, &TuningConfig::serial()),
        Err(SparseError::DimMismatch(_))
    ));
}

#[test]
fn zero_batch_returns_an_empty_product() {
    let (packed, _, _) = random_layer(32, (8, 8, 1, 1), 4);
    let out = sparse_gemm(&packed, &[], 0, &TuningConfig::default()).unwrap();
    assert!(out.is_empty());
}

#[test]
fn large_layer_matches_the_oracle() {
    // The biggest shape in the suite: 128x512 at ~72% punched, batch 64.
    let (packed, _, _) = random_layer(40, (128, 512, 1, 1), 144);
    let masked = decode(&packed).unwrap();
    let input = random_input(41, 512 * 64);
    let out = sparse_gemm(&packed, &input, 64, &TuningConfig::default()).unwrap();
    assert_close(&out, &dense_gemm(&masked, &input, 64), 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Random shapes, sparsities 0–95%, random tiling — always the oracle's
    /// answer to relative 1e-5.
    #[test]
    fn random_layers_match_the_dense_oracle(
        seed in 0u64..10_000,
        filters in 1usize..64,
        channels in 1usize..32,
        k in 1usize..4,
        batch in 1usize..32,
        sparsity in 0.0f64..0.95,
        row_tile in 1usize..10,
        col_tile in 1usize..70,
        workers in 1usize..5,
    ) {
        let dims = (filters, channels, k, k);
        let cols = channels * k * k;
        let keep = ((1.0 - sparsity) * cols as f64).round() as usize;
        let (packed, _, _) = random_layer(seed, dims, keep);
        let masked = decode(&packed).unwrap();
        let input = random_input(seed ^ 0xbeef, cols * batch);
        let tuning = TuningConfig::new(row_tile, col_tile, workers).unwrap();

        let out = sparse_gemm(&packed, &input, batch, &tuning).unwrap();
        let want = dense_gemm(&masked, &input, batch);
        prop_assert_eq!(out.len(), want.len());
        for (g, w) in out.iter().zip(&want) {
            let scale = w.abs().max(1.0);
            prop_assert!((g - w).abs() <= 1e-5 * scale, "{} vs {}", g, w);
        }
    }
}
