//! Finite-difference check of every trainable coordinate of a small MTL
//! BiLSTM model.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use traitgrade::dataset::PromptSpec;
use traitgrade::gradcheck::{check_gradients_with, Stencil};
use traitgrade::layers::{Dims, Mode};
use traitgrade::model::{mtl_loss, EssayInput, ModelConfig, ModelGraph, Recurrent, TaskMode};
use traitgrade::Float;

fn main() -> traitgrade::Result<()> {
    let mut config = ModelConfig::new(TaskMode::Mtl, Recurrent::Bilstm, PromptSpec::new(3)?);
    config.dims = Dims {
        embed_dim: 4,
        window: 3,
        filters: 4,
        hidden: 3,
    };
    config.vocab_size = 12;
    let model = ModelGraph::build(config)?;
    let heads = model.config.heads().len();

    let sentences = vec![vec![2, 5, 7, 3], vec![4, 9, 11]];
    let input = EssayInput {
        sentences: &sentences,
        token_mask: None,
        sentence_mask: None,
    };
    let golds: Vec<Float> = (0..heads)
        .map(|h| (h as Float + 1.0) / (heads as Float + 1.0))
        .collect();

    let mut store = model.params.clone();
    let report = check_gradients_with(&mut store, 1e-3, Stencil::Central4, |g| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let preds = model.forward(g, &input, Mode::Eval, &mut rng)?;
        mtl_loss(g, &preds, &golds)
    })?;
    println!(
        "{} coordinates, max relative error {:.2e}, {:.1}% within 1e-4",
        report.coords,
        report.max_rel_err,
        100.0 * report.frac_within_1e4
    );
    if let Some((name, i, a, n)) = report.worst {
        println!("worst: {name}[{i}] analytic {a:.6e} numeric {n:.6e}");
    }
    Ok(())
}
