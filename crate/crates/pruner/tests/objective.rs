//! The regularized objective and its gradients, checked against central
//! finite differences of the loss itself.

use std::collections::BTreeMap;

use model_graph::WeightTensor;
use pruner::{
    add_regularizer_gradient, group_norms, layer_regularizer, regularized_loss, BlockConfig,
    ChainNet, NetLayer, NetOp, ReweightState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_lambda_objective_is_the_task_loss() {
    let mut weights = BTreeMap::new();
    weights.insert(
        "w".to_string(),
        WeightTensor::new("w", (2, 3, 1, 1), vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.5]).unwrap(),
    );
    let mut state = ReweightState::new(1e-3, 0.0);
    let norms = group_norms(&weights["w"], BlockConfig::default());
    pruner::update_penalties(&mut state, "w", &norms);
    let task = 0.731;
    assert_eq!(
        regularized_loss(&weights, task, &state, BlockConfig::default()),
        task
    );
}

#[test]
fn single_weight_worked_example() {
    // One 1x1 group holding w = 2 with alpha pinned to 1 and lambda = 0.5:
    // penalty = 0.5 * 1 * 4 = 2, gradient = 2 * 0.5 * 1 * 2 = 2.
    let cfg = BlockConfig::new(1, 1).unwrap();
    let tensor = WeightTensor::new("w", (1, 1, 1, 1), vec![2.0]).unwrap();
    let mut state = ReweightState::new(1e-3, 0.5);
    state.alphas.insert("w".to_string(), vec![1.0]);
    let norms = group_norms(&tensor, cfg);
    assert!((layer_regularizer(&state, "w", &norms) - 2.0).abs() < 1e-12);

    let mut grad = vec![0.0f64];
    add_regularizer_gradient(&state, "w", &[2.0], 1, 1, cfg, &mut grad);
    assert!((grad[0] - 2.0).abs() < 1e-12);
}

#[test]
fn layers_without_penalties_contribute_nothing() {
    let mut weights = BTreeMap::new();
    weights.insert(
        "a".to_string(),
        WeightTensor::new("a", (1, 2, 1, 1), vec![1.0, 1.0]).unwrap(),
    );
    weights.insert(
        "b".to_string(),
        WeightTensor::new("b", (1, 2, 1, 1), vec![5.0, 5.0]).unwrap(),
    );
    let cfg = BlockConfig::default();
    let mut state = ReweightState::new(1e-3, 1.0);
    pruner::update_penalties(&mut state, "a", &group_norms(&weights["a"], cfg));
    // `b` has no alpha entry; only `a` is regularized.
    let expected = layer_regularizer(&state, "a", &group_norms(&weights["a"], cfg));
    assert_eq!(regularized_loss(&weights, 0.0, &state, cfg), expected);

    let mut grad = vec![0.0; 2];
    add_regularizer_gradient(&state, "b", &[5.0, 5.0], 1, 2, cfg, &mut grad);
    assert_eq!(grad, vec![0.0, 0.0]);
}

/// Builds a small random conv->conv->fc chain directly.
fn random_net(seed: u64) -> (ChainNet, Vec<Vec<f32>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_c = 1 + (seed as usize % 2);
    let side = 5;
    let f1 = 2 + (seed as usize % 3);
    let k = if seed % 3 == 0 { 1 } else { 3 };
    let pad = k / 2;
    let out1 = (f1, side, side);
    let f2 = 3;
    let classes = 2 + (seed as usize % 2);

    let mut rand_weights = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-0.6..0.6)).collect()
    };
    let conv1 = NetLayer {
        id: "c1".into(),
        op: NetOp::Conv {
            in_shape: (in_c, side, side),
            out_shape: out1,
            kernel: (k, k),
            stride: 1,
            padding: pad,
        },
        rows: f1,
        cols: in_c * k * k,
        weights: rand_weights(f1 * in_c * k * k),
        relu: true,
    };
    let conv2 = NetLayer {
        id: "c2".into(),
        op: NetOp::Conv {
            in_shape: out1,
            out_shape: (f2, 3, 3),
            kernel: (3, 3),
            stride: 2,
            padding: 1,
        },
        rows: f2,
        cols: f1 * 9,
        weights: rand_weights(f2 * f1 * 9),
        relu: true,
    };
    let fc = NetLayer {
        id: "fc".into(),
        op: NetOp::Fc,
        rows: classes,
        cols: f2 * 9,
        weights: rand_weights(classes * f2 * 9),
        relu: false,
    };
    let net = ChainNet {
        layers: vec![conv1, conv2, fc],
        input_shape: (in_c, side, side),
    };
    let images: Vec<Vec<f32>> = (0..4)
        .map(|_| (0..in_c * side * side).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<u8> = (0..4).map(|_| rng.random_range(0..classes as u8)).collect();
    (net, images, labels)
}

fn max_rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(&a, &f)| {
            let scale = a.abs().max(f.abs());
            if scale < 1e-7 {
                0.0 // dead path or true zero; FD noise dominates below this
            } else {
                (a - f).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Central finite differences of `loss` over every weight of every layer.
fn finite_diff_grads(net: &mut ChainNet, loss: impl Fn(&ChainNet) -> f64) -> Vec<Vec<f64>> {
    let h = 1e-5;
    let mut out = Vec::new();
    for li in 0..net.layers.len() {
        let n = net.layers[li].weights.len();
        let mut g = vec![0.0; n];
        for wi in 0..n {
            let orig = net.layers[li].weights[wi];
            net.layers[li].weights[wi] = orig + h;
            let up = loss(net);
            net.layers[li].weights[wi] = orig - h;
            let down = loss(net);
            net.layers[li].weights[wi] = orig;
            g[wi] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

#[test]
fn task_gradients_match_finite_differences() {
    for seed in 0..6u64 {
        let (mut net, images, labels) = random_net(seed);
        let image_refs: Vec<&[f32]> = images.iter().map(|v| v.as_slice()).collect();
        let mut grads: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
        net.batch_loss_and_grads(&image_refs, &labels, &mut grads);
        let fd = finite_diff_grads(&mut net, |n| n.batch_loss(&image_refs, &labels));
        for (li, (a, f)) in grads.iter().zip(&fd).enumerate() {
            let err = max_rel_err(a, f);
            assert!(err < 1e-4, "seed {seed} layer {li}: rel err {err:.3e}");
        }
    }
}

#[test]
fn regularized_gradients_match_finite_differences() {
    let cfg = BlockConfig::new(2, 3).unwrap();
    for seed in 0..4u64 {
        let (mut net, images, labels) = random_net(seed + 100);
        let image_refs: Vec<&[f32]> = images.iter().map(|v| v.as_slice()).collect();

        // Freeze penalties at the current norms, as within one round.
        let mut state = ReweightState::new(1e-3, 5e-3);
        for layer in &net.layers {
            let values: Vec<f32> = layer.weights.iter().map(|&w| w as f32).collect();
            let t = WeightTensor::new(&layer.id, (layer.rows, layer.cols, 1, 1), values).unwrap();
            pruner::update_penalties(&mut state, &layer.id, &group_norms(&t, cfg));
        }

        // Independent f64 recomputation of the penalty for the FD oracle.
        let reg_value = |net: &ChainNet| -> f64 {
            let mut total = 0.0;
            for layer in &net.layers {
                let alphas = &state.alphas[&layer.id];
                let mut norms = vec![0.0f64; alphas.len()];
                for row in 0..layer.rows {
                    let band = row / cfg.gm;
                    for col in 0..layer.cols {
                        let w = layer.weights[row * layer.cols + col];
                        norms[band * layer.cols + col] += w * w;
                    }
                }
                total += state.lambda
                    * norms.iter().zip(alphas).map(|(n, a)| n * a).sum::<f64>();
            }
            total
        };

        let mut grads: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
        net.batch_loss_and_grads(&image_refs, &labels, &mut grads);
        for (layer, g) in net.layers.iter().zip(&mut grads) {
            let flat: Vec<f64> = layer.weights.clone();
            add_regularizer_gradient(&state, &layer.id, &flat, layer.rows, layer.cols, cfg, g);
        }

        let fd = finite_diff_grads(&mut net, |n| {
            n.batch_loss(&image_refs, &labels) + reg_value(n)
        });
        for (li, (a, f)) in grads.iter().zip(&fd).enumerate() {
            let err = max_rel_err(a, f);
            assert!(err < 1e-4, "seed {seed} layer {li}: rel err {err:.3e}");
        }
    }
}
