//! Sentence splitting, tokenization, vocabulary building, encoding, and
//! seeded cross-validation folds.
//!
//! ```text
//! cargo run --example text_pipeline
//! ```

use traitgrade::dataset::{make_record_folds, write_fold_file, Partition, PromptSpec};
use traitgrade::synth::synthetic_essays;
use traitgrade::text::{build_vocab, decode, encode_text, tokenize_essay};

fn main() -> traitgrade::Result<()> {
    let text = "Dear @CAPS1, computers help people. They let us talk to friends!\n\nBut @NUM1 hours a day is too much.";
    for (i, sentence) in tokenize_essay(text)?.iter().enumerate() {
        println!("sentence {i}: {sentence:?}");
    }

    let prompt = PromptSpec::new(3)?;
    let records = synthetic_essays(&prompt, 50, 1, 7);
    let folds = make_record_folds(&records, 42)?;
    let fold = &folds[0];
    println!(
        "\nfold 0: {} train, {} dev, {} test",
        fold.ids(Partition::Train).len(),
        fold.ids(Partition::Dev).len(),
        fold.ids(Partition::Test).len()
    );

    let train: Vec<_> = fold
        .select(&records, Partition::Train)?
        .into_iter()
        .cloned()
        .collect();
    let vocab = build_vocab(&train)?;
    println!(
        "vocabulary: {} entries (including padding and unknown)",
        vocab.len()
    );

    let encoded = encode_text("Moreover the evidence is compelling. Zorp!", &vocab)?;
    println!("encoded: {:?}", encoded.sentences);
    println!("decoded: {:?}", decode(&encoded, &vocab));

    let mut assignments = Vec::new();
    write_fold_file(&folds[..1], &mut assignments)?;
    let text = String::from_utf8_lossy(&assignments);
    println!("\nfold file head:");
    for line in text.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
