//! Trains STL and MTL models on one fold of a synthetic prompt and prints
//! test QWK per head, plus the per-fold training history.
//!
//! ```text
//! cargo run --release --example train_synthetic
//! ```

use traitgrade::dataset::{make_record_folds, PromptSpec};
use traitgrade::layers::Dims;
use traitgrade::model::{ModelConfig, Recurrent, TaskMode};
use traitgrade::synth::synthetic_essays;
use traitgrade::train::{run_fold, TrainConfig};

fn main() -> traitgrade::Result<()> {
    let prompt = PromptSpec::new(3)?;
    let records = synthetic_essays(&prompt, 200, 1, 11);
    let folds = make_record_folds(&records, 42)?;
    let training = TrainConfig {
        epochs: 30,
        batch_size: 5,
        ..TrainConfig::default()
    };

    for (mode, recurrent) in [
        (TaskMode::Stl, Recurrent::Lstm),
        (TaskMode::Mtl, Recurrent::Lstm),
    ] {
        let mut config = ModelConfig::new(mode, recurrent, prompt.clone());
        config.dims = Dims {
            embed_dim: 16,
            window: 3,
            filters: 16,
            hidden: 16,
        };
        let outcome = run_fold(&records, &folds[0], &config, &training)?;
        println!(
            "{}: best epoch {} of {}, {:.1}s",
            config.label(),
            outcome.trained.best_epoch,
            training.epochs,
            outcome.trained.seconds
        );
        for head in outcome.heads() {
            println!("  test qwk {:<18} {:.4}", head, outcome.test_qwk(&head)?);
        }
    }
    Ok(())
}
