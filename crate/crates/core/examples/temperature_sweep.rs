//! Unsupervised MAML pretraining at several inner-loop temperatures.
//!
//!     cargo run --release --example temperature_sweep -- [out-dir]

use ssml::pipeline::{cmd_sweep_temperature, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "temperature-sweep".into());
    let cfg = RunConfig::parse(
        "
        dataset = synthetic:16x20x28x28x3
        train_classes = 10
        filters = 8
        second_order = false
        pretrain_steps = 100
        eval_episodes = 40
        ",
    )?;
    cfg.validate()?;
    for (t, rec) in cmd_sweep_temperature(&cfg, &[1.0, 10.0, 100.0], out.as_ref())? {
        println!("T = {t:>5}: held-out accuracy {:.4} ± {:.4}", rec.accuracy, rec.ci95);
    }
    Ok(())
}
