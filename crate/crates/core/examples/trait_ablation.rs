//! Removes one trait from an MTL model and reports the change in overall
//! test QWK on a synthetic prompt.
//!
//! ```text
//! cargo run --release --example trait_ablation
//! ```

use traitgrade::dataset::{make_record_folds, PromptSpec};
use traitgrade::eval::ablate;
use traitgrade::layers::Dims;
use traitgrade::model::{ModelConfig, ModelGraph, Recurrent, TaskMode};
use traitgrade::synth::synthetic_essays;
use traitgrade::train::TrainConfig;

fn main() -> traitgrade::Result<()> {
    let prompt = PromptSpec::new(3)?;
    let records = synthetic_essays(&prompt, 120, 1, 5);
    let folds = make_record_folds(&records, 42)?;
    let training = TrainConfig {
        epochs: 25,
        batch_size: 5,
        ..TrainConfig::default()
    };
    let mut config = ModelConfig::new(TaskMode::Mtl, Recurrent::Lstm, prompt.clone());
    config.dims = Dims {
        embed_dim: 12,
        window: 3,
        filters: 12,
        hidden: 10,
    };

    let trait_name = "content";
    let base = ModelGraph::build(config.clone())?.count_params().total;
    let ablated = ModelGraph::build(config.clone())?
        .without_trait(trait_name)?
        .count_params()
        .total;
    println!("parameters: {base} with {trait_name}, {ablated} without");

    let result = ablate(&records, &config, &training, trait_name, &folds[..2])?;
    println!(
        "overall QWK over 2 folds: {:.4} with, {:.4} without, delta {:+.4}",
        result.base_qwk, result.ablated_qwk, result.delta
    );
    if let Some(r) = result.reference {
        println!("reference delta on the real data: {r:+.3}");
    }
    Ok(())
}
