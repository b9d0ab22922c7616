//! Writes augmented copies of one image plus per-sample pixel histograms,
//! for the ours_rgb and simclr_rgb presets.
//!
//!     cargo run --release --example augment_preview -- [image.png] [out-dir]

use std::path::PathBuf;

use ssml::dataset::synthetic_dataset;
use ssml::image_ops::{preset_pipeline, Image, Preset};
use ssml::pipeline::cmd_augment_preview;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.get(1).map_or("augment-preview", String::as_str));
    let image = match args.first() {
        Some(p) => PathBuf::from(p),
        None => {
            std::fs::create_dir_all(&out)?;
            let p = out.join("source.png");
            // darken the mid-grey synthetic texture so its histogram leans dark like a photo
            let img = synthetic_dataset(1, 1, 64, 64, 3, 3)?.image(0).as_ref().clone();
            let px = img.pixels().iter().map(|v| v * v).collect();
            Image::new(64, 64, 3, px)?.save_png(&p)?;
            p
        }
    };
    for preset in [Preset::OursRgb, Preset::SimclrRgb] {
        let dir = out.join(preset.name());
        let rep = cmd_augment_preview(&image, &preset_pipeline(preset), 16, 0, &dir)?;
        println!(
            "{:<11} {} samples in {}, histogram dispersion {:.4}",
            preset.name(),
            rep.images.len(),
            dir.display(),
            rep.dispersion.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
