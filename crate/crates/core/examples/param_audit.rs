//! Prints trainable parameter counts for every model variant and prompt.
//!
//! ```text
//! cargo run --example param_audit
//! ```

use traitgrade::dataset::PromptSpec;
use traitgrade::model::{ModelConfig, ModelGraph, Recurrent, TaskMode};

fn main() -> traitgrade::Result<()> {
    println!("{:<8} {:<12} {:>12}", "prompt", "model", "params");
    for prompt in PromptSpec::all() {
        for mode in [TaskMode::Stl, TaskMode::Mtl] {
            for rec in [Recurrent::Lstm, Recurrent::Bilstm] {
                let config = ModelConfig::new(mode, rec, prompt.clone());
                let model = ModelGraph::build(config)?;
                let count = model.count_params();
                println!(
                    "{:<8} {:<12} {:>12}",
                    prompt.prompt_id,
                    model.config.label(),
                    count.total
                );
            }
        }
    }

    let model = ModelGraph::build(ModelConfig::new(
        TaskMode::Stl,
        Recurrent::Lstm,
        PromptSpec::new(1)?,
    ))?;
    println!("\nbreakdown for stl-lstm:");
    for (name, n) in model.count_params().breakdown {
        println!("  {name:<28} {n:>10}");
    }
    Ok(())
}
