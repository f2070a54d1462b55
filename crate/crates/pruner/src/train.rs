//! Training loops: dense pre-training, the reweighted sparsification rounds
//! with hard projection and masked fine-tuning, and the equal-compute
//! protocol used to compare pruning schemes.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::{baseline_prune, BaselineScheme};
use crate::block::BlockConfig;
use crate::budget::{allocate_budgets, CompressionTarget};
use crate::data::Dataset;
use crate::error::PruneError;
use crate::mask::MaskMap;
use crate::net::ChainNet;
use crate::project::project_mask_weights;
use crate::reweight::{add_regularizer_gradient, update_penalties, GroupNorms, ReweightState};
use model_graph::{ModelGraph, WeightMap, WeightTensor};

/// Optimizer and schedule knobs. The reweighting loop runs `rounds` rounds
/// of `epochs_per_round` epochs with the penalties frozen within a round;
/// `lambda` doubles between rounds. The default fine-tuning budget equals
/// the rounds' total epochs — recovery matters as much as sparsification,
/// since the hard cut costs far more accuracy than the penalty phase does.
#[derive(Debug, Clone)]
pub struct HyperParams {
    pub epsilon: f64,
    pub lambda0: f64,
    pub lambda_growth: f64,
    pub rounds: usize,
    pub epochs_per_round: usize,
    pub finetune_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            epsilon: 1e-3,
            lambda0: 1e-4,
            lambda_growth: 2.0,
            rounds: 4,
            epochs_per_round: 8,
            finetune_epochs: 32,
            lr: 0.05,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// He-style random initialization for every weight layer, deterministic in
/// the seed.
pub fn init_weights(model: &ModelGraph, seed: u64) -> WeightMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = WeightMap::new();
    for layer in model.weight_layers() {
        let shape = layer.weight_shape.expect("weight layers carry a shape");
        let fan_in = shape.gemm_cols() as f64;
        let std = (2.0 / fan_in).sqrt();
        let count = shape.weight_count() as usize;
        let values: Vec<f32> = (0..count)
            .map(|_| {
                // Box-Muller as in the data generator.
                let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                let g = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                (g * std) as f32
            })
            .collect();
        let dims = (shape.filters, shape.in_channels, shape.kernel_h, shape.kernel_w);
        map.insert(
            layer.id.clone(),
            WeightTensor::new(layer.id.clone(), dims, values).expect("dims match"),
        );
    }
    map
}

/// Fraction of `data` the net classifies correctly.
pub fn evaluate(net: &ChainNet, data: &Dataset) -> f64 {
    let correct = data
        .images
        .iter()
        .zip(&data.labels)
        .filter(|(image, &label)| net.predict(image) == label as usize)
        .count();
    correct as f64 / data.len().max(1) as f64
}

/// Plain SGD training of the dense model. Returns the trained weights.
pub fn train_dense(
    model: &ModelGraph,
    init: &WeightMap,
    data: &Dataset,
    epochs: usize,
    hyper: &HyperParams,
) -> Result<WeightMap, PruneError> {
    let mut net = ChainNet::from_model(model, init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed_d135);
    run_epochs(&mut net, data, epochs, hyper, &mut rng, None, None, 0)?;
    Ok(net.to_weight_map(model))
}

/// Per-round diagnostics of the sparsification loop.
#[derive(Debug, Clone)]
pub struct PruneDiagnostics {
    /// Group-norm snapshots per layer: one before any reweighted training,
    /// then one after each round.
    pub round_group_norms: Vec<BTreeMap<String, Vec<f64>>>,
    /// Lambda used in each round.
    pub lambdas: Vec<f64>,
    /// Training-set accuracy after each reweighting round.
    pub round_train_accuracy: Vec<f64>,
    /// Training-set accuracy right after hard projection, before any
    /// fine-tuning — how much the cut itself costs.
    pub projected_train_accuracy: f64,
    /// Training-set accuracy after masked fine-tuning.
    pub finetuned_train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    /// Final weights, zero outside the masks.
    pub weights: WeightMap,
    pub masks: MaskMap,
    pub diagnostics: PruneDiagnostics,
}

/// The full sparsification pipeline: reweighted regularization rounds, hard
/// projection to the per-layer budgets, then fine-tuning with frozen masks.
pub fn reweighted_prune(
    model: &ModelGraph,
    weights: &WeightMap,
    data: &Dataset,
    target: &CompressionTarget,
    cfg: BlockConfig,
    hyper: &HyperParams,
) -> Result<PruneOutcome, PruneError> {
    let plan = allocate_budgets(model, target)?;
    let mut net = ChainNet::from_model(model, weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x7e1e_a11d);

    let mut state = ReweightState::new(hyper.epsilon, hyper.lambda0);
    let mut diagnostics = PruneDiagnostics {
        round_group_norms: vec![snapshot_norms(&net, cfg)],
        lambdas: Vec::new(),
        round_train_accuracy: Vec::new(),
        projected_train_accuracy: 0.0,
        finetuned_train_accuracy: 0.0,
    };
    for round in 0..hyper.rounds {
        state.round = round;
        // Penalties fixed for the whole round, from the current norms.
        for layer in &net.layers {
            let norms = layer_group_norms(layer, cfg);
            update_penalties(&mut state, &layer.id, &norms);
        }
        diagnostics.lambdas.push(state.lambda);
        run_epochs(
            &mut net,
            data,
            hyper.epochs_per_round,
            hyper,
            &mut rng,
            Some((&state, cfg)),
            None,
            round,
        )?;
        diagnostics.round_group_norms.push(snapshot_norms(&net, cfg));
        diagnostics.round_train_accuracy.push(evaluate(&net, data));
        state.lambda *= hyper.lambda_growth;
    }

    // Hard projection to the budgets, then masked fine-tuning.
    let mut masks = MaskMap::new();
    let mut keep_flags = BTreeMap::new();
    for layer in &net.layers {
        let budget = plan
            .budget_for(&layer.id)
            .expect("budget plan covers every weight layer");
        let tensor = tensor_from_layer(layer);
        let mask = project_mask_weights(&tensor, cfg, budget);
        keep_flags.insert(layer.id.clone(), mask.to_flat_keep());
        masks.insert(layer.id.clone(), mask);
    }
    net.apply_masks(&keep_flags);
    diagnostics.projected_train_accuracy = evaluate(&net, data);
    run_epochs(
        &mut net,
        data,
        hyper.finetune_epochs,
        hyper,
        &mut rng,
        None,
        Some(&keep_flags),
        hyper.rounds,
    )?;
    net.apply_masks(&keep_flags);
    diagnostics.finetuned_train_accuracy = evaluate(&net, data);

    Ok(PruneOutcome {
        weights: net.to_weight_map(model),
        masks,
        diagnostics,
    })
}

/// Which pruning rule a comparison run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    BlockPunched,
    Baseline(BaselineScheme),
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::BlockPunched => "block-punched",
            Scheme::Baseline(BaselineScheme::Unstructured) => "unstructured",
            Scheme::Baseline(BaselineScheme::FilterStructured) => "filter-structured",
        }
    }
}

/// Runs one scheme under the equal-compute protocol: every scheme gets the
/// same dense starting point, the same number of pre-projection training
/// epochs (reweighted-regularized for block-punched, plain otherwise), the
/// same per-layer budgets, and the same masked fine-tuning budget. Returns
/// test accuracy of the pruned net.
pub fn evaluate_scheme(
    model: &ModelGraph,
    dense: &WeightMap,
    train: &Dataset,
    test: &Dataset,
    target: &CompressionTarget,
    cfg: BlockConfig,
    hyper: &HyperParams,
    scheme: Scheme,
) -> Result<f64, PruneError> {
    match scheme {
        Scheme::BlockPunched => {
            let outcome = reweighted_prune(model, dense, train, target, cfg, hyper)?;
            let net = ChainNet::from_model(model, &outcome.weights)?;
            Ok(evaluate(&net, test))
        }
        Scheme::Baseline(baseline) => {
            let plan = allocate_budgets(model, target)?;
            let mut net = ChainNet::from_model(model, dense)?;
            let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x7e1e_a11d);
            run_epochs(
                &mut net,
                train,
                hyper.rounds * hyper.epochs_per_round,
                hyper,
                &mut rng,
                None,
                None,
                0,
            )?;
            let mut keep_flags = BTreeMap::new();
            for layer in &net.layers {
                let budget = plan.budget_for(&layer.id).expect("plan covers the layer");
                let tensor = tensor_from_layer(layer);
                let total = layer.rows as f64 * layer.cols as f64;
                let rate = total / (budget as f64).max(1.0);
                let mask = baseline_prune(&tensor, baseline, rate);
                keep_flags.insert(layer.id.clone(), mask.keep);
            }
            net.apply_masks(&keep_flags);
            run_epochs(
                &mut net,
                train,
                hyper.finetune_epochs,
                hyper,
                &mut rng,
                None,
                Some(&keep_flags),
                hyper.rounds,
            )?;
            net.apply_masks(&keep_flags);
            Ok(evaluate(&net, test))
        }
    }
}

/// Mini-batch SGD over `epochs` epochs. `reg` adds the reweighted
/// regularizer (value and gradient); `keep` freezes a mask by zeroing masked
/// weights after every step. The round index only labels error diagnostics.
#[allow(clippy::too_many_arguments)]
fn run_epochs(
    net: &mut ChainNet,
    data: &Dataset,
    epochs: usize,
    hyper: &HyperParams,
    rng: &mut ChaCha8Rng,
    reg: Option<(&ReweightState, BlockConfig)>,
    keep: Option<&BTreeMap<String, Vec<bool>>>,
    round: usize,
) -> Result<(), PruneError> {
    let n = data.len();
    if n == 0 || epochs == 0 {
        return Ok(());
    }
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let images: Vec<&[f32]> = chunk.iter().map(|&i| data.images[i].as_slice()).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| data.labels[i]).collect();
            let mut grads: Vec<Vec<f64>> = net
                .layers
                .iter()
                .map(|l| vec![0.0f64; l.weights.len()])
                .collect();
            let loss = net.batch_loss_and_grads(&images, &labels, &mut grads);
            if !loss.is_finite() {
                return Err(PruneError::NonFiniteLoss { round, epoch });
            }
            if let Some((state, cfg)) = reg {
                for (layer, grad) in net.layers.iter().zip(&mut grads) {
                    add_regularizer_gradient(
                        state,
                        &layer.id,
                        &layer.weights,
                        layer.rows,
                        layer.cols,
                        cfg,
                        grad,
                    );
                }
            }
            for (layer, grad) in net.layers.iter_mut().zip(&grads) {
                for (w, g) in layer.weights.iter_mut().zip(grad) {
                    *w -= hyper.lr * g;
                }
            }
            if let Some(flags) = keep {
                net.apply_masks(flags);
            }
        }
    }
    Ok(())
}

fn layer_group_norms(layer: &crate::net::NetLayer, cfg: BlockConfig) -> GroupNorms {
    let tensor = tensor_from_layer(layer);
    crate::reweight::group_norms(&tensor, cfg)
}

fn snapshot_norms(net: &ChainNet, cfg: BlockConfig) -> BTreeMap<String, Vec<f64>> {
    net.layers
        .iter()
        .map(|l| (l.id.clone(), layer_group_norms(l, cfg).values))
        .collect()
}

/// Regards the training layer's f64 weights as an f32 tensor with a flat
/// (rows, cols, 1, 1) shape — block/group geometry only depends on the GEMM
/// view, so this is safe for norm and projection work.
fn tensor_from_layer(layer: &crate::net::NetLayer) -> WeightTensor {
    WeightTensor::new(
        layer.id.clone(),
        (layer.rows, layer.cols, 1, 1),
        layer.weights.iter().map(|&v| v as f32).collect(),
    )
    .expect("length matches by construction")
}
