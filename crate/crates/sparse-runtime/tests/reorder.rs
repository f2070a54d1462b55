//! Band reordering: sorted-by-workload storage that decodes unchanged.

use model_graph::WeightTensor;
use proptest::prelude::*;
use pruner::{BlockConfig, PruneMask};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_runtime::{decode, encode, reorder_blocks, PackedSparseLayer};

/// One band per entry; `kept_per_band[i]` many kept columns in band `i`.
fn layer_with_band_counts(kept_per_band: &[usize], cols: usize) -> PackedSparseLayer {
    let cfg = BlockConfig::default();
    let rows = kept_per_band.len() * cfg.gm;
    let dims = (rows, cols, 1, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(rows as u64);
    let values = (0..rows * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let weights = WeightTensor::new("t".to_string(), dims, values).unwrap();
    let kept = kept_per_band
        .iter()
        .map(|&n| (0..n as u32).collect())
        .collect();
    let mask = PruneMask {
        layer_id: "t".to_string(),
        rows,
        cols,
        cfg,
        kept,
    };
    encode(&weights, &mask).unwrap()
}

fn band_workloads(packed: &PackedSparseLayer) -> Vec<usize> {
    let cb = packed.col_blocks();
    (0..packed.block_order.len())
        .map(|p| {
            packed.counts[p * cb..(p + 1) * cb]
                .iter()
                .map(|&c| c as usize)
                .sum()
        })
        .collect()
}

#[test]
fn already_sorted_layer_keeps_identity_order() {
    let packed = layer_with_band_counts(&[5, 3, 1], 8);
    let sorted = reorder_blocks(&packed);
    assert_eq!(sorted.block_order, vec![0, 1, 2]);
    assert_eq!(sorted, packed);
}

#[test]
fn counts_one_four_two_order_to_one_two_zero() {
    let packed = layer_with_band_counts(&[1, 4, 2], 4);
    let sorted = reorder_blocks(&packed);
    assert_eq!(sorted.block_order, vec![1, 2, 0]);
    assert_eq!(band_workloads(&sorted), vec![4, 2, 1]);
}

#[test]
fn equal_workloads_keep_their_relative_order() {
    let packed = layer_with_band_counts(&[2, 3, 2, 3], 4);
    let sorted = reorder_blocks(&packed);
    assert_eq!(sorted.block_order, vec![1, 3, 0, 2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Reordering is pure storage layout: the decoded dense tensor is
    /// bit-identical, workloads come out non-increasing, and a second pass
    /// changes nothing.
    #[test]
    fn reorder_preserves_decode_and_is_idempotent(
        seed in 0u64..500,
        filters in 1usize..48,
        channels in 1usize..12,
        k in 1usize..4,
        keep_per_band in 0usize..24,
    ) {
        let dims = (filters, channels, k, k);
        let cols = channels * k * k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..filters * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let weights = WeightTensor::new("t".to_string(), dims, values).unwrap();
        let cfg = BlockConfig::default();
        let kept = (0..filters.div_ceil(cfg.gm))
            .map(|_| {
                let mut picked: Vec<u32> = index::sample(&mut rng, cols, keep_per_band.min(cols))
                    .into_iter()
                    .map(|c| c as u32)
                    .collect();
                picked.sort_unstable();
                picked
            })
            .collect();
        let mask = PruneMask { layer_id: "t".into(), rows: filters, cols, cfg, kept };
        let packed = encode(&weights, &mask).unwrap();

        let sorted = reorder_blocks(&packed);
        prop_assert!(sorted.validate().is_ok());

        let workloads = band_workloads(&sorted);
        prop_assert!(workloads.windows(2).all(|w| w[0] >= w[1]), "{workloads:?}");

        let before = decode(&packed).unwrap();
        let after = decode(&sorted).unwrap();
        for (b, a) in before.values.iter().zip(&after.values) {
            prop_assert_eq!(b.to_bits(), a.to_bits());
        }

        prop_assert_eq!(reorder_blocks(&sorted), sorted);
    }
}
