//! Supervised and augmentation-based unsupervised episodes from the same pool.
//!
//!     cargo run --release --example episodes

use ssml::dataset::{sample_supervised_episode, sample_unsupervised_episode, synthetic_dataset, EpisodeSpec};
use ssml::image_ops::{preset_pipeline, Preset};
use ssml::rng::SeededRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synthetic_dataset(12, 10, 28, 28, 3, 7)?;
    let mut rng = SeededRng::new(0);

    let spec = EpisodeSpec::supervised(5, 2, 3)?;
    let ep = sample_supervised_episode(&data, &spec, &mut rng)?;
    println!("supervised 5-way 2-shot, {:?}", ep.provenance);
    println!(
        "  support labels {:?}",
        ep.support.iter().map(|s| s.label).collect::<Vec<_>>()
    );
    println!("  query labels   {:?}", ep.query_labels());

    // labels are dropped; each support image is its own pseudo-class and its
    // queries are augmented copies
    let pool = data.erase_labels();
    let spec = EpisodeSpec::unsupervised(5, 2)?;
    let ep = sample_unsupervised_episode(&pool, &spec, &preset_pipeline(Preset::OursRgb), &mut rng)?;
    println!("unsupervised 5-way, {:?}", ep.provenance);
    println!(
        "  support labels {:?}",
        ep.support.iter().map(|s| s.label).collect::<Vec<_>>()
    );
    for j in 0..ep.query.len() {
        let src = &ep.support[ep.query_source(j)].image;
        println!(
            "  query {j}: label {} from support {}, mean |Δ| to source {:.3}",
            ep.query[j].label,
            ep.query_source(j),
            ep.query[j].image.mean_abs_diff(src)
        );
    }
    Ok(())
}
