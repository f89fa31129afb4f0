//! Saves a model with its vocabulary, reloads it, and checks that the
//! reloaded model predicts identically.
//!
//! ```text
//! cargo run --example checkpoint
//! ```

use traitgrade::dataset::PromptSpec;
use traitgrade::layers::Dims;
use traitgrade::model::{
    load_checkpoint, save_checkpoint, EssayInput, ModelConfig, ModelGraph, Recurrent, TaskMode,
};
use traitgrade::text::{encode_text, Vocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocabulary::from_tokens(["computers", "help", "people", "learn", "."]);
    let mut config = ModelConfig::new(TaskMode::Mtl, Recurrent::Bilstm, PromptSpec::new(1)?);
    config.dims = Dims {
        embed_dim: 8,
        window: 3,
        filters: 8,
        hidden: 6,
    };
    config.vocab_size = vocab.len();
    let model = ModelGraph::build(config)?;

    let dir = std::env::temp_dir().join(format!("traitgrade-checkpoint-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.bin");
    save_checkpoint(&path, &model, &vocab)?;
    let bytes = std::fs::metadata(&path)?.len();

    let (restored, restored_vocab) = load_checkpoint(&path)?;
    let essay = encode_text(
        "Computers help people learn. People learn.",
        &restored_vocab,
    )?;
    let before = model.predict(&EssayInput::from(&essay))?;
    let after = restored.predict(&EssayInput::from(&essay))?;
    println!(
        "{} ({} bytes), heads {:?}",
        path.display(),
        bytes,
        restored.config.heads()
    );
    for ((head, a), b) in restored.config.heads().iter().zip(&before).zip(&after) {
        println!("  {head:<20} {a:.6} {b:.6}");
    }
    assert_eq!(before, after);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
