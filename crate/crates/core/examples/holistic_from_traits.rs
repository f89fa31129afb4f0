//! Pipelined holistic scoring: combine predicted trait scores with a linear
//! rule and clamp to the prompt's overall range.
//!
//! ```text
//! cargo run --example holistic_from_traits
//! ```

use std::collections::BTreeMap;

use traitgrade::dataset::PromptSpec;
use traitgrade::model::{pipeline_holistic, Aggregation, Rounding};

fn main() -> traitgrade::Result<()> {
    let prompt = PromptSpec::new(7)?;
    println!(
        "prompt 7 traits: {:?}, overall range {:?}",
        prompt.traits, prompt.overall_range
    );

    let traits: Vec<&str> = prompt.traits.iter().map(String::as_str).collect();
    let sum = Aggregation::sum_of(&traits);
    let mut halved = Aggregation::sum_of(&traits);
    for w in halved.weights.values_mut() {
        *w = 0.5;
    }
    halved.rounding = Rounding::Floor;

    let essays: [BTreeMap<String, i64>; 3] = [
        prompt.traits.iter().map(|t| (t.clone(), 3)).collect(),
        prompt
            .traits
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as i64 % 4))
            .collect(),
        prompt.traits.iter().map(|t| (t.clone(), 0)).collect(),
    ];
    println!("\n{:<6} {:>6} {:>8}", "essay", "sum", "halved");
    for (i, preds) in essays.iter().enumerate() {
        println!(
            "{:<6} {:>6} {:>8}",
            i,
            pipeline_holistic(preds, &sum, &prompt)?,
            pipeline_holistic(preds, &halved, &prompt)?
        );
    }
    Ok(())
}
