//! Encode/decode round trips and the index-size comparison against CSR.

use model_graph::WeightTensor;
use proptest::prelude::*;
use pruner::{BlockConfig, PruneMask};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_runtime::{decode, encode, SparseError};

fn tensor_from_seed(seed: u64, dims: (usize, usize, usize, usize)) -> WeightTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dims.0 * dims.1 * dims.2 * dims.3;
    let values = (0..len).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    WeightTensor::new("t".to_string(), dims, values).unwrap()
}

/// Mask keeping `keep_cols` random columns in every band.
fn mask_keeping(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    cfg: BlockConfig,
    keep_cols: usize,
) -> PruneMask {
    let bands = rows.div_ceil(cfg.gm);
    let kept = (0..bands)
        .map(|_| {
            let mut picked: Vec<u32> = index::sample(rng, cols, keep_cols.min(cols))
                .into_iter()
                .map(|c| c as u32)
                .collect();
            picked.sort_unstable();
            picked
        })
        .collect();
    PruneMask {
        layer_id: "t".to_string(),
        rows,
        cols,
        cfg,
        kept,
    }
}

/// Index bytes of the same matrix in CSR as the well-known implementations
/// store it: 32-bit row pointers (M+1 of them) and a 32-bit column index per
/// nonzero.
fn csr_index_bytes(rows: usize, nnz: u64) -> u64 {
    4 * (rows as u64 + 1) + 4 * nnz
}

#[test]
fn dense_mask_adds_only_per_block_metadata() {
    // 8x12 view under 8x4 blocks: one band, three column-blocks.
    let weights = tensor_from_seed(1, (8, 3, 2, 2));
    let mask = PruneMask::dense("t", 8, 12, BlockConfig::default());
    let packed = encode(&weights, &mask).unwrap();

    assert_eq!(packed.values.len(), 96, "dense mask keeps every value");
    assert_eq!(packed.counts, vec![4, 4, 4]);
    // Metadata: one count byte per block, one local per kept column, two
    // bytes of permutation per band.
    assert_eq!(packed.index_bytes(), 3 + 12 + 2);
    assert_eq!(decode(&packed).unwrap(), weights);
}

#[test]
fn fully_punched_layer_has_empty_blocks() {
    let weights = tensor_from_seed(2, (10, 5, 1, 1));
    let mut mask = PruneMask::dense("t", 10, 5, BlockConfig::default());
    for band in &mut mask.kept {
        band.clear();
    }
    let packed = encode(&weights, &mask).unwrap();

    assert!(packed.values.is_empty());
    assert!(packed.counts.iter().all(|&c| c == 0));
    assert!(packed.validate().is_ok());
    let dense = decode(&packed).unwrap();
    assert!(dense.values.iter().all(|&v| v == 0.0));
}

#[test]
fn mismatched_mask_shape_is_rejected() {
    let weights = tensor_from_seed(3, (8, 4, 1, 1));
    let mask = PruneMask::dense("t", 8, 12, BlockConfig::default());
    assert!(matches!(
        encode(&weights, &mask),
        Err(SparseError::MaskShape { wc: 4, mc: 12, .. })
    ));
}

#[test]
fn validate_rejects_structural_corruption() {
    let weights = tensor_from_seed(4, (16, 8, 1, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mask = mask_keeping(&mut rng, 16, 8, BlockConfig::default(), 4);
    let good = encode(&weights, &mask).unwrap();

    let mut wrong_count = good.clone();
    wrong_count.counts[0] = wrong_count.counts[0].wrapping_add(1);
    assert!(wrong_count.validate().is_err());

    let mut bad_perm = good.clone();
    bad_perm.block_order[0] = 9;
    assert!(bad_perm.validate().is_err());

    let mut short_values = good.clone();
    short_values.values.pop();
    assert!(short_values.validate().is_err());

    if good.locals.len() >= 2 {
        let mut unsorted = good.clone();
        unsorted.locals.swap(0, 1);
        // Either the order or the width check fires, depending on the draw.
        assert!(unsorted.validate().is_err() || unsorted.locals[0] == unsorted.locals[1]);
    }
}

/// Ragged shapes where the CSR comparison is tightest: a one-row edge band
/// pays a full row of count bytes, so high sparsity plus a wide view is the
/// worst case for the packed side.
#[test]
fn index_bytes_beat_csr_on_tight_shapes() {
    for (seed, dims, keep_cols) in [
        (10u64, (9usize, 256usize, 1usize, 1usize), 13usize), // ragged band, ~95% punched
        (11, (2, 64, 1, 1), 4),                               // two-row layer
        (12, (16, 16, 3, 3), 72),                             // conv view, 50% punched
        (13, (33, 128, 1, 1), 64),                            // ragged, exactly half
    ] {
        let weights = tensor_from_seed(seed, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = dims.1 * dims.2 * dims.3;
        let mask = mask_keeping(&mut rng, dims.0, cols, BlockConfig::default(), keep_cols);
        let packed = encode(&weights, &mask).unwrap();
        let csr = csr_index_bytes(dims.0, mask.kept_weights());
        assert!(
            packed.index_bytes() < csr,
            "dims {dims:?}: packed {} vs CSR {csr}",
            packed.index_bytes()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Decoding reproduces the masked dense tensor bit-for-bit.
    #[test]
    fn round_trip_is_exact(
        seed in 0u64..1_000,
        filters in 1usize..40,
        channels in 1usize..10,
        k in 1usize..4,
        keep_per_band in 0usize..30,
    ) {
        let dims = (filters, channels, k, k);
        let cols = channels * k * k;
        let weights = tensor_from_seed(seed, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mask = mask_keeping(&mut rng, filters, cols, BlockConfig::default(), keep_per_band);

        let packed = encode(&weights, &mask).unwrap();
        prop_assert!(packed.validate().is_ok());
        prop_assert_eq!(packed.kept_weights(), mask.kept_weights());

        let mut expected = weights.clone();
        mask.apply(&mut expected).unwrap();
        let decoded = decode(&packed).unwrap();
        prop_assert_eq!(decoded.dims, expected.dims);
        for (d, e) in decoded.values.iter().zip(&expected.values) {
            prop_assert_eq!(d.to_bits(), e.to_bits());
        }
    }

    /// At half punched or sparser, the block-shared index arrays undercut
    /// CSR's per-nonzero column indices on every draw.
    #[test]
    fn index_bytes_beat_csr_at_half_sparsity(
        seed in 0u64..1_000,
        filters in 2usize..64,
        channels in 1usize..64,
        k in 1usize..4,
        sparsity in 0.5f64..0.9,
    ) {
        let dims = (filters, channels, k, k);
        let cols = channels * k * k;
        let keep_cols = ((1.0 - sparsity) * cols as f64).floor() as usize;
        let weights = tensor_from_seed(seed, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc5);
        let mask = mask_keeping(&mut rng, filters, cols, BlockConfig::default(), keep_cols);

        let packed = encode(&weights, &mask).unwrap();
        let csr = csr_index_bytes(filters, mask.kept_weights());
        prop_assert!(
            packed.index_bytes() < csr,
            "packed {} vs CSR {} at {:.2} sparsity, dims {:?}",
            packed.index_bytes(), csr, sparsity, dims
        );
    }
}
