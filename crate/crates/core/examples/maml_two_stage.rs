//! Unsupervised pretraining followed by supervised MAML, against the same
//! supervised budget from random init. Small enough for a couple of minutes.
//!
//!     cargo run --release --example maml_two_stage -- [out-dir]

use ssml::pipeline::{cmd_compare, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "maml-two-stage".into());
    let cfg = RunConfig::parse(
        "
        dataset = synthetic:16x20x28x28x3
        train_classes = 10
        filters = 8
        temperature = 1
        second_order = false
        pretrain_steps = 150
        outer_steps = 60
        eval_every = 10
        eval_episodes = 20
        repeats = 2
        threshold = 0.65
        query_probe = false
        ",
    )?;
    cfg.validate()?;
    let report = cmd_compare(&[cfg], out.as_ref())?;
    println!("{report}");
    println!("csv files in {out}/");
    Ok(())
}
