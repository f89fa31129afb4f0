//! Builds a results table with significance markers from per-fold QWK
//! values, the same table `traitgrade eval` writes to report.md.
//!
//! ```text
//! cargo run --example report
//! ```

use traitgrade::eval::{EvalReport, QwkCell, MTL_BILSTM, MTL_LSTM, STL_LSTM};

fn main() -> traitgrade::Result<()> {
    // per-fold holistic QWK for two prompts
    let folds: [(u8, &str, [f64; 5]); 6] = [
        (1, STL_LSTM, [0.78, 0.80, 0.79, 0.81, 0.77]),
        (1, MTL_LSTM, [0.82, 0.83, 0.81, 0.84, 0.82]),
        (1, MTL_BILSTM, [0.84, 0.85, 0.83, 0.86, 0.84]),
        (3, STL_LSTM, [0.66, 0.70, 0.64, 0.69, 0.67]),
        (3, MTL_LSTM, [0.67, 0.69, 0.66, 0.70, 0.66]),
        (3, MTL_BILSTM, [0.68, 0.69, 0.67, 0.69, 0.68]),
    ];
    let mut report = EvalReport::default();
    for (prompt, config, values) in folds {
        for (fold, qwk) in values.into_iter().enumerate() {
            report.cells.push(QwkCell {
                prompt,
                config: config.into(),
                head: "overall".into(),
                fold,
                qwk,
            });
        }
    }
    print!("{}", report.to_markdown());

    if let Some(t) = report.compare(1, MTL_LSTM, STL_LSTM) {
        println!(
            "\nprompt 1, mtl-lstm vs stl-lstm: t = {:.3}, p = {:.4}",
            t.t, t.p
        );
    }
    Ok(())
}
