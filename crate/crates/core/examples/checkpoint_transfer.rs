//! Checkpoint save/load and parameter transfer between heads of different
//! width. The backbone carries over; a mismatched head is re-initialized.
//!
//!     cargo run --release --example checkpoint_transfer

use ssml::models::{
    load_checkpoint, save_checkpoint, transfer_params, BackboneConfig, ClassifierConfig, ModelConfig, RelationConfig,
};
use ssml::tensor::ParamSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile_dir()?;
    let backbone = BackboneConfig::new(3, 28, 28, 8);
    let five = ModelConfig::Classifier(ClassifierConfig { backbone, n_way: 5 });
    let theta: ParamSet<f32> = five.init_params(1)?;

    let path = dir.join("five_way.ckpt");
    save_checkpoint(&theta, &path)?;
    let loaded: ParamSet<f32> = load_checkpoint(&path)?;
    println!("saved and reloaded {} ({} tensors)", loaded.fingerprint(), loaded.len());
    println!(
        "round trip identical: {}",
        std::fs::read(&path)? == ssml::models::write_checkpoint(&loaded)?
    );

    let twenty = ModelConfig::Classifier(ClassifierConfig { backbone, n_way: 20 });
    let t = transfer_params(&loaded, &twenty, 2)?;
    println!("5-way -> 20-way: copied {:?}", t.copied);
    println!("                 reinitialized {:?}", t.reinitialized);

    let relation = ModelConfig::Relation(RelationConfig::new(backbone));
    match transfer_params(&loaded, &relation, 2) {
        Ok(_) => println!("classifier -> relation transferred"),
        Err(e) => println!("classifier -> relation rejected: {e}"),
    }
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("ssml-transfer-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
