//! Adapts a source model to rotated two moons and prints per-epoch target
//! accuracy.
//!
//!     cargo run --release -p dac-core --example moons -- [seed] [rotation_deg]

use dac_core::desk::{adapt_config, rotated_moons, source_config};
use dac_core::model::train_source;
use dac_core::trainer::{adapt_observed, evaluate};

fn main() -> dac_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(0);
    let rotation: f64 = args
        .next()
        .map(|s| s.parse().expect("rotation must be a number"))
        .unwrap_or(40.0);

    let task = rotated_moons(2000, 0.1, rotation, seed)?;
    let trained = train_source(&source_config(), &task.source, seed)?;
    let source_only = evaluate(&trained.params, &task.target, None)?.accuracy;
    println!(
        "source held-out {:.4}, source-only target {:.4}",
        trained.holdout_accuracy, source_only
    );

    adapt_observed(&adapt_config(seed), &trained.params, &task.target, |snap| {
        if let Some(e) = &snap.record.evaluation {
            println!(
                "epoch {:2}  acc {:.4}  source-like {:4}",
                snap.record.epoch, e.accuracy, snap.record.n_source_like
            );
        }
    })?;
    Ok(())
}
