//! Mask semantics and the `BPMK` file format: round trips, derived views,
//! and corruption handling.

use model_graph::WeightTensor;
use proptest::prelude::*;
use pruner::{
    project_mask, read_masks, write_masks, BlockConfig, MaskMap, PruneError, PruneMask,
};

fn sample_masks() -> MaskMap {
    let cfg = BlockConfig::new(2, 3).unwrap();
    let mut masks = MaskMap::new();
    masks.insert(
        "a".to_string(),
        PruneMask {
            layer_id: "a".into(),
            rows: 5,
            cols: 7,
            cfg,
            kept: vec![vec![0, 2, 6], vec![1, 3], vec![4, 5, 6]],
        },
    );
    masks.insert("b".to_string(), PruneMask::dense("b", 3, 4, cfg));
    masks
}

#[test]
fn round_trip_preserves_every_field() {
    let masks = sample_masks();
    let mut buf = Vec::new();
    write_masks(&masks, &mut buf).unwrap();
    let back = read_masks(&mut buf.as_slice()).unwrap();
    assert_eq!(masks, back);
}

#[test]
fn dense_mask_keeps_everything() {
    let m = PruneMask::dense("d", 10, 6, BlockConfig::default());
    assert_eq!(m.kept_weights(), 60);
    assert!(m.to_flat_keep().iter().all(|&k| k));
    assert!(m.validate().is_ok());
}

#[test]
fn kept_weights_counts_band_heights_on_ragged_edges() {
    // 5 rows with gm = 2: bands of height 2, 2, 1.
    let cfg = BlockConfig::new(2, 3).unwrap();
    let m = PruneMask {
        layer_id: "r".into(),
        rows: 5,
        cols: 4,
        cfg,
        kept: vec![vec![0, 1], vec![2], vec![0, 3]],
    };
    assert_eq!(m.kept_weights(), 2 * 2 + 1 * 2 + 2 * 1);
    assert!(m.is_kept(0, 1) && !m.is_kept(0, 2));
    assert!(m.is_kept(4, 3) && !m.is_kept(4, 1));
}

#[test]
fn local_indices_are_block_relative() {
    let cfg = BlockConfig::new(2, 3).unwrap();
    let m = PruneMask {
        layer_id: "l".into(),
        rows: 2,
        cols: 7, // column blocks: [0..3), [3..6), [6..7)
        cfg,
        kept: vec![vec![0, 2, 4, 6]],
    };
    assert_eq!(m.local_indices(0, 0), vec![0, 2]);
    assert_eq!(m.local_indices(0, 1), vec![1]);
    assert_eq!(m.local_indices(0, 2), vec![0]);
}

#[test]
fn apply_zeroes_exactly_the_punched_weights() {
    let cfg = BlockConfig::new(2, 2).unwrap();
    let mut t = WeightTensor::new("w", (2, 4, 1, 1), (1..=8).map(|i| i as f32).collect()).unwrap();
    let m = PruneMask {
        layer_id: "w".into(),
        rows: 2,
        cols: 4,
        cfg,
        kept: vec![vec![1, 2]],
    };
    m.apply(&mut t).unwrap();
    assert_eq!(t.values, vec![0.0, 2.0, 3.0, 0.0, 0.0, 6.0, 7.0, 0.0]);
}

#[test]
fn apply_rejects_mismatched_shapes() {
    let mut t = WeightTensor::zeros("w", (4, 4, 1, 1));
    let m = PruneMask::dense("w", 2, 4, BlockConfig::default());
    assert!(matches!(
        m.apply(&mut t).unwrap_err(),
        PruneError::ShapeMismatch { .. }
    ));
}

#[test]
fn bad_magic_is_rejected() {
    let masks = sample_masks();
    let mut buf = Vec::new();
    write_masks(&masks, &mut buf).unwrap();
    buf[0] = b'X';
    assert!(matches!(
        read_masks(&mut buf.as_slice()).unwrap_err(),
        PruneError::BadMagic { expected: "BPMK" }
    ));
}

#[test]
fn unknown_version_is_rejected() {
    let mut buf = Vec::new();
    write_masks(&MaskMap::new(), &mut buf).unwrap();
    buf[4] = 9;
    assert!(matches!(
        read_masks(&mut buf.as_slice()).unwrap_err(),
        PruneError::UnsupportedVersion(9)
    ));
}

#[test]
fn truncation_and_trailing_bytes_are_rejected() {
    let masks = sample_masks();
    let mut buf = Vec::new();
    write_masks(&masks, &mut buf).unwrap();

    let short = &buf[..buf.len() - 3];
    assert!(matches!(
        read_masks(&mut &short[..]).unwrap_err(),
        PruneError::Truncated
    ));

    let mut long = buf.clone();
    long.push(0);
    let err = read_masks(&mut long.as_slice()).unwrap_err();
    assert!(err.to_string().contains("trailing"));
}

#[test]
fn out_of_range_column_fails_validation() {
    let m = PruneMask {
        layer_id: "bad".into(),
        rows: 2,
        cols: 4,
        cfg: BlockConfig::new(2, 4).unwrap(),
        kept: vec![vec![1, 4]],
    };
    let err = m.validate().unwrap_err();
    assert!(err.to_string().contains("out of range"));
}

#[test]
fn unsorted_columns_fail_validation() {
    let m = PruneMask {
        layer_id: "bad".into(),
        rows: 2,
        cols: 4,
        cfg: BlockConfig::new(2, 4).unwrap(),
        kept: vec![vec![2, 1]],
    };
    let err = m.validate().unwrap_err();
    assert!(err.to_string().contains("strictly increasing"));
}

fn mask_strategy() -> impl Strategy<Value = PruneMask> {
    (1usize..20, 1usize..30, 1usize..5, 1usize..6)
        .prop_flat_map(|(rows, cols, gm, gn)| {
            let cfg = BlockConfig::new(gm, gn).unwrap();
            let bands = rows.div_ceil(gm);
            (
                Just((rows, cols, cfg)),
                proptest::collection::vec(
                    proptest::collection::btree_set(0..cols as u32, 0..=cols),
                    bands,
                ),
            )
        })
        .prop_map(|((rows, cols, cfg), bands)| PruneMask {
            layer_id: "p".into(),
            rows,
            cols,
            cfg,
            kept: bands.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
}

proptest! {
    /// Serialization round-trips byte-identically through a second write.
    #[test]
    fn round_trip_is_stable(mask in mask_strategy()) {
        let mut masks = MaskMap::new();
        masks.insert(mask.layer_id.clone(), mask);
        let mut first = Vec::new();
        write_masks(&masks, &mut first).unwrap();
        let back = read_masks(&mut first.as_slice()).unwrap();
        prop_assert_eq!(&masks, &back);
        let mut second = Vec::new();
        write_masks(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }

    /// `kept_weights` always agrees with the flat keep-flag count, and
    /// projection output always passes validation.
    #[test]
    fn counts_agree_with_flat_flags(mask in mask_strategy()) {
        prop_assert!(mask.validate().is_ok());
        let flat = mask.to_flat_keep();
        let count = flat.iter().filter(|&&k| k).count() as u64;
        prop_assert_eq!(mask.kept_weights(), count);
    }

    /// Projection emits masks that survive a write/read cycle unchanged.
    #[test]
    fn projected_masks_round_trip(
        rows in 1usize..12,
        cols in 1usize..16,
        seed in 0u64..50,
        keep_frac in 0.1f64..1.0,
    ) {
        let n = rows * cols;
        let values: Vec<f32> = (0..n)
            .map(|i| ((i as u64).wrapping_mul(seed ^ 0x9e37_79b9).wrapping_add(7) % 97) as f32 - 48.0)
            .collect();
        let t = WeightTensor::new("w", (rows, cols, 1, 1), values).unwrap();
        let cfg = BlockConfig::new(3, 4).unwrap();
        let total_groups = rows.div_ceil(3) * cols;
        let kept = ((total_groups as f64 * keep_frac).round() as usize).max(1);
        let mask = project_mask(&t, cfg, kept);
        let mut masks = MaskMap::new();
        masks.insert("w".to_string(), mask);
        let mut buf = Vec::new();
        write_masks(&masks, &mut buf).unwrap();
        prop_assert_eq!(read_masks(&mut buf.as_slice()).unwrap(), masks);
    }
}
