//! End-to-end drive of the pruning pipeline on the toy model: generate the
//! synthetic task, train a dense baseline, punch it to 8x, round-trip every
//! artifact through its on-disk format, and evaluate the reloaded result.
//!
//! Run with `cargo run --release -p pruner --example punch_toy`.

use model_graph::{fixtures, load_weights, save_model, save_weights};
use pruner::{
    compression_report, evaluate, gen_synthetic, init_weights, load_dataset, load_masks,
    reweighted_prune, save_dataset, save_masks, train_dense, BlockConfig, ChainNet,
    CompressionTarget, HyperParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("punch_toy_example");
    std::fs::create_dir_all(&dir)?;

    let model = fixtures::toy_cnn();
    save_model(&model, dir.join("toy.model"))?;

    let noise = 0.55;
    save_dataset(&gen_synthetic(1, 600, noise), dir.join("train.bpds"))?;
    save_dataset(&gen_synthetic(2, 300, noise), dir.join("test.bpds"))?;
    let train = load_dataset(dir.join("train.bpds"))?;
    let test = load_dataset(dir.join("test.bpds"))?;

    let h = HyperParams::default();
    let dense = train_dense(&model, &init_weights(&model, 0), &train, 12, &h)?;
    let dense_acc = evaluate(&ChainNet::from_model(&model, &dense)?, &test);
    println!("dense test accuracy    {dense_acc:.4}");

    // Stem and head stay dense; the solver recovers their budget elsewhere.
    let mut target = CompressionTarget::new(8.0);
    target.overrides.insert("conv1".into(), 1.0);
    target.overrides.insert("fc2".into(), 1.0);
    let outcome = reweighted_prune(&model, &dense, &train, &target, BlockConfig::default(), &h)?;

    save_weights(&outcome.weights, dir.join("punched.bpwt"))?;
    save_masks(&outcome.masks, dir.join("punched.bpmk"))?;
    let weights = load_weights(dir.join("punched.bpwt"), &model)?;
    let masks = load_masks(dir.join("punched.bpmk"))?;

    let pruned_acc = evaluate(&ChainNet::from_model(&model, &weights)?, &test);
    println!("punched test accuracy  {pruned_acc:.4}  (8x, reloaded from disk)");

    let report = compression_report(&model, &masks)?;
    println!("compression            {:.3}x  ({} of {} weights kept)",
        report.rate, report.kept_weights, report.total_weights);
    for layer in &report.per_layer {
        println!(
            "  {:5}  {:>6} -> {:>5}  ({:.2}x)",
            layer.layer_id,
            layer.total_weights,
            layer.kept_weights,
            layer.total_weights as f64 / layer.kept_weights as f64
        );
    }

    println!("artifacts under {}", dir.display());
    Ok(())
}
