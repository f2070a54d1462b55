//! Binary weight-file round trips and corruption diagnostics.

use model_graph::{
    fixtures, load_weights, read_weights, save_weights, write_weights, GraphError, WeightMap,
    WeightTensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Cursor;
use tempfile::tempdir;

fn random_weights(model: &model_graph::ModelGraph, seed: u64) -> WeightMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = WeightMap::new();
    for layer in model.weight_layers() {
        let shape = layer.weight_shape.unwrap();
        let dims = (shape.filters, shape.in_channels, shape.kernel_h, shape.kernel_w);
        let values: Vec<f32> = (0..shape.weight_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        map.insert(
            layer.id.clone(),
            WeightTensor::new(layer.id.clone(), dims, values).unwrap(),
        );
    }
    map
}

#[test]
fn weights_round_trip_bit_exact() {
    let model = fixtures::toy_cnn();
    let weights = random_weights(&model, 7);
    let dir = tempdir().unwrap();
    let path = dir.path().join("toy.weights");
    save_weights(&weights, &path).unwrap();
    let loaded = load_weights(&path, &model).unwrap();
    assert_eq!(loaded.len(), weights.len());
    for (id, tensor) in &weights {
        let back = &loaded[id];
        assert_eq!(back.dims, tensor.dims);
        // Bit-exact, not approximate: compare the raw IEEE-754 encodings.
        let a: Vec<u32> = tensor.values.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn tensor_length_mismatch_is_rejected_at_construction() {
    let err = WeightTensor::new("x".to_string(), (2, 2, 1, 1), vec![0.0; 3]).unwrap_err();
    assert!(matches!(err, GraphError::WeightMismatch { .. }));
}

#[test]
fn dims_disagreeing_with_the_model_are_rejected() {
    let model = fixtures::toy_cnn();
    let mut weights = random_weights(&model, 1);
    // conv1 is 8x1x3x3 in the model; lie about the filter count.
    let wrong = WeightTensor::new("conv1".to_string(), (4, 1, 3, 3), vec![0.0; 36]).unwrap();
    weights.insert("conv1".to_string(), wrong);
    let mut buf = Vec::new();
    write_weights(&weights, &mut buf).unwrap();
    let err = read_weights(&mut Cursor::new(buf), &model).unwrap_err();
    match err {
        GraphError::WeightMismatch { layer, .. } => assert_eq!(layer, "conv1"),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn bad_magic_is_rejected() {
    let model = fixtures::toy_cnn();
    let weights = random_weights(&model, 2);
    let mut buf = Vec::new();
    write_weights(&weights, &mut buf).unwrap();
    buf[0] = b'X';
    assert!(matches!(
        read_weights(&mut Cursor::new(buf), &model).unwrap_err(),
        GraphError::BadMagic { .. }
    ));
}

#[test]
fn truncated_files_are_rejected() {
    let model = fixtures::toy_cnn();
    let weights = random_weights(&model, 3);
    let mut buf = Vec::new();
    write_weights(&weights, &mut buf).unwrap();
    buf.truncate(buf.len() - 5);
    assert!(matches!(
        read_weights(&mut Cursor::new(buf), &model).unwrap_err(),
        GraphError::Truncated
    ));
}

#[test]
fn trailing_bytes_are_rejected() {
    let model = fixtures::toy_cnn();
    let weights = random_weights(&model, 4);
    let mut buf = Vec::new();
    write_weights(&weights, &mut buf).unwrap();
    buf.push(0);
    assert!(matches!(
        read_weights(&mut Cursor::new(buf), &model).unwrap_err(),
        GraphError::Truncated
    ));
}

#[test]
fn missing_layers_are_rejected() {
    let model = fixtures::toy_cnn();
    let mut weights = random_weights(&model, 5);
    weights.remove("fc2");
    let mut buf = Vec::new();
    write_weights(&weights, &mut buf).unwrap();
    let err = read_weights(&mut Cursor::new(buf), &model).unwrap_err();
    match err {
        GraphError::WeightMismatch { layer, .. } => assert_eq!(layer, "fc2"),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn gemm_view_maps_columns_bijectively() {
    // dims (M, N, Kh, Kw) = (2, 3, 2, 2): column c -> (c/4, (c%4)/2, c%2).
    let tensor = WeightTensor::zeros("x".to_string(), (2, 3, 2, 2));
    assert_eq!(tensor.cols(), 12);
    let mut seen = std::collections::BTreeSet::new();
    for c in 0..tensor.cols() {
        let (ch, kh, kw) = tensor.col_position(c);
        assert!(ch < 3 && kh < 2 && kw < 2);
        seen.insert((ch, kh, kw));
    }
    assert_eq!(seen.len(), 12);
    assert_eq!(tensor.col_position(5), (1, 0, 1));
}

#[test]
fn gemm_rows_are_contiguous_row_major_slices() {
    let values: Vec<f32> = (0..24).map(|v| v as f32).collect();
    let tensor = WeightTensor::new("x".to_string(), (2, 3, 2, 2), values).unwrap();
    assert_eq!(tensor.gemm_row(0), (0..12).map(|v| v as f32).collect::<Vec<_>>());
    assert_eq!(tensor.gemm_row(1), (12..24).map(|v| v as f32).collect::<Vec<_>>());
    assert_eq!(tensor.at(1, 3), 15.0);
}
