//! Relation network: supervised training, then evaluation of the saved
//! checkpoint on held-out classes.
//!
//!     cargo run --release --example relation_network -- [out-dir]

use ssml::pipeline::{cmd_eval, cmd_train, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "relation-network".into());
    let mut cfg = RunConfig::parse(
        "
        model = relation
        dataset = synthetic:16x20x28x28x3
        train_classes = 10
        filters = 8
        hidden = 8
        lr = 1e-3
        outer_steps = 200
        eval_every = 50
        eval_episodes = 40
        ",
    )?;
    cfg.validate()?;
    let report = cmd_train(&cfg, out.as_ref())?;
    println!("{report}");

    cfg.eval_episodes = 200;
    let rec = cmd_eval(&cfg, out.as_ref())?;
    println!(
        "held-out 5-way 1-shot accuracy {:.4} ± {:.4} over {} episodes",
        rec.accuracy, rec.ci95, rec.episodes
    );
    Ok(())
}
