//! Agreement metrics and significance testing on hand-written scores.
//!
//! ```text
//! cargo run --example kappa
//! ```

use traitgrade::dataset::ScoreRange;
use traitgrade::eval::{linear_kappa, paired_t_test, qwk};

fn main() -> traitgrade::Result<()> {
    let range = ScoreRange { min: 0, max: 3 };
    let gold = [0, 1, 2, 3, 2, 1, 0, 3];
    let close = [0, 1, 2, 2, 2, 1, 1, 3];
    let constant = [2; 8];

    println!("{:<10} {:>8} {:>8}", "system", "qwk", "linear");
    for (name, pred) in [("exact", &gold), ("close", &close), ("constant", &constant)] {
        println!(
            "{:<10} {:>8.4} {:>8.4}",
            name,
            qwk(pred, &gold, range)?,
            linear_kappa(pred, &gold, range)?
        );
    }

    // per-fold QWK of two systems on the same five folds
    let a = [0.71, 0.74, 0.69, 0.73, 0.75];
    let b = [0.68, 0.72, 0.69, 0.70, 0.71];
    let t = paired_t_test(&a, &b)?;
    println!(
        "\npaired t-test: t = {:.4}, p = {:.4}, mean diff = {:.4}, significant at 0.05: {}",
        t.t,
        t.p,
        t.mean_diff,
        t.significant(0.05)
    );
    Ok(())
}
