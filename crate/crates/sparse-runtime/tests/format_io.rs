//! Container round trips and rejection of malformed bytes.

use model_graph::WeightTensor;
use pruner::{BlockConfig, PruneMask};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_runtime::{
    encode, load_packed, read_packed, reorder_blocks, save_packed, write_packed, PackedModel,
    SparseError,
};

fn sample_model() -> PackedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model = PackedModel::new();
    for (id, dims, keep) in [
        ("conv_a", (16usize, 8usize, 3usize, 3usize), 20usize),
        ("conv_b", (9, 4, 1, 1), 2),
        ("fc_head", (6, 40, 1, 1), 12),
    ] {
        let len = dims.0 * dims.1 * dims.2 * dims.3;
        let values = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let weights = WeightTensor::new(id.to_string(), dims, values).unwrap();
        let cols = dims.1 * dims.2 * dims.3;
        let cfg = BlockConfig::default();
        let kept = (0..dims.0.div_ceil(cfg.gm))
            .map(|_| {
                let mut picked: Vec<u32> = index::sample(&mut rng, cols, keep.min(cols))
                    .into_iter()
                    .map(|c| c as u32)
                    .collect();
                picked.sort_unstable();
                picked
            })
            .collect();
        let mask = PruneMask {
            layer_id: id.to_string(),
            rows: dims.0,
            cols,
            cfg,
            kept,
        };
        model.insert(id.to_string(), encode(&weights, &mask).unwrap());
    }
    // One layer stored in reordered form, so the permutation entries are
    // exercised by the round trip.
    let reordered = reorder_blocks(&model["conv_a"]);
    model.insert("conv_a".to_string(), reordered);
    model
}

fn to_bytes(model: &PackedModel) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_packed(model, &mut bytes).unwrap();
    bytes
}

#[test]
fn file_round_trip_preserves_every_layer() {
    let model = sample_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("layers.bpcr");
    save_packed(&model, &path).unwrap();
    let loaded = load_packed(&path).unwrap();
    assert_eq!(loaded, model);
}

#[test]
fn rewrite_is_byte_identical() {
    let model = sample_model();
    let bytes = to_bytes(&model);
    let reloaded = read_packed(&mut bytes.as_slice()).unwrap();
    assert_eq!(to_bytes(&reloaded), bytes);
}

#[test]
fn wrong_magic_is_rejected() {
    let mut bytes = to_bytes(&sample_model());
    bytes[0] = b'X';
    assert!(matches!(
        read_packed(&mut bytes.as_slice()),
        Err(SparseError::BadMagic)
    ));
}

#[test]
fn future_version_is_rejected() {
    let mut bytes = to_bytes(&sample_model());
    bytes[4] = 2;
    assert!(matches!(
        read_packed(&mut bytes.as_slice()),
        Err(SparseError::UnsupportedVersion(2))
    ));
}

#[test]
fn truncation_anywhere_is_an_error() {
    let bytes = to_bytes(&sample_model());
    // Mid-magic, mid-header, mid-id, and mid-values cuts all surface as
    // truncation, never a silent partial model.
    for cut in [2, 6, 15, bytes.len() / 2, bytes.len() - 3] {
        match read_packed(&mut bytes[..cut].to_vec().as_slice()) {
            Err(SparseError::Truncated(_)) => {}
            other => panic!("cut at {cut}: expected truncation, got {other:?}"),
        }
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut bytes = to_bytes(&sample_model());
    bytes.push(0);
    assert!(matches!(
        read_packed(&mut bytes.as_slice()),
        Err(SparseError::TrailingBytes)
    ));
}

#[test]
fn out_of_range_permutation_entry_is_rejected() {
    // Single layer, id "a": the first permutation entry sits right after
    // magic(4) + version(4) + count(4) + id_len(4) + id(1) + dims(16) +
    // block config(8).
    let mut layer = sample_model()["conv_a"].clone();
    layer.layer_id = "a".to_string();
    let mut model = PackedModel::new();
    model.insert("a".to_string(), layer);

    let mut bytes = to_bytes(&model);
    let perm_at = 4 + 4 + 4 + 4 + 1 + 16 + 8;
    bytes[perm_at] = 0xFF;
    bytes[perm_at + 1] = 0xFF;
    assert!(matches!(
        read_packed(&mut bytes.as_slice()),
        Err(SparseError::CorruptLayer { .. })
    ));
}

#[test]
fn corrupt_count_byte_cannot_pass_validation() {
    // Inflating a kept count makes the implied locals/values lengths
    // disagree with what follows; the reader must reject, not misparse.
    let model = sample_model();
    let bytes = to_bytes(&model);
    let mut seen_rejection = false;
    // The count block of the first layer starts after its permutation; scan
    // a window of plausible positions and flip each to an oversized value.
    for at in 40..80.min(bytes.len()) {
        let mut corrupt = bytes.clone();
        corrupt[at] = 0xEE;
        if read_packed(&mut corrupt.as_slice()).is_err() {
            seen_rejection = true;
        }
    }
    assert!(seen_rejection, "no corruption in the scanned window was caught");
}
