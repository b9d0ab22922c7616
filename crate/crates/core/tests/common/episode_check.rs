//! Structural contracts of sampled episodes.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use ssml::dataset::{sample_supervised_episode, sample_unsupervised_episode, Dataset, EpisodeSpec, Provenance};
use ssml::image_ops::{color_invert, horizontal_flip, level, AugmentationPipeline, Image};
use ssml::rng::SeededRng;

/// Pool of `n` random-noise RGB images, pairwise distinct even after flips
/// and inversion.
pub fn noise_pool(n: usize, seed: u64) -> Vec<Image> {
    (0..n)
        .map(|i| {
            let mut rng = SeededRng::derive(seed, &[i as u64]);
            let px = (0..6 * 6 * 3).map(|_| level(rng.below(256) as u8)).collect();
            Image::new(6, 6, 3, px).unwrap()
        })
        .collect()
}

fn variants(img: &Image) -> [Image; 4] {
    let f = horizontal_flip(img);
    [img.clone(), color_invert(img), color_invert(&f), f]
}

/// Violations over `episodes` unsupervised episodes with varying shapes.
pub fn unsupervised_violations(episodes: usize, seed: u64) -> usize {
    let images = noise_pool(40, seed);
    let pool = Dataset::unlabeled(images).unwrap();
    let pipeline: AugmentationPipeline = "hflip@0.5,invert@0.5".parse().unwrap();
    let index: HashMap<*const Image, usize> = (0..pool.len()).map(|i| (Arc::as_ptr(pool.image(i)), i)).collect();
    let mut bad = 0;
    for e in 0..episodes {
        let mut rng = SeededRng::derive(seed, &[e as u64]);
        let n_way = 2 + e % 5;
        let q = 1 + (e / 5) % 3;
        let spec = EpisodeSpec::unsupervised(n_way, q).unwrap();
        let ep = sample_unsupervised_episode(&pool, &spec, &pipeline, &mut rng).unwrap();
        let mut ok = ep.provenance == Provenance::PseudoLabels
            && ep.support.len() == n_way
            && ep.query.len() == n_way * q
            && ep.support.iter().enumerate().all(|(i, s)| s.label == i)
            && ep
                .query
                .iter()
                .enumerate()
                .all(|(j, s)| s.label == j / q && ep.query_source(j) == j / q);
        // support images are distinct pool members
        let members: HashSet<Option<usize>> = ep
            .support
            .iter()
            .map(|s| index.get(&Arc::as_ptr(&s.image)).copied())
            .collect();
        ok &= members.len() == n_way && !members.contains(&None);
        // each query is a transform of its own support image and of no other
        let support_variants: Vec<[Image; 4]> = ep.support.iter().map(|s| variants(&s.image)).collect();
        for (j, qi) in ep.query.iter().enumerate() {
            for (i, vs) in support_variants.iter().enumerate() {
                let derived = vs.iter().any(|v| v == qi.image.as_ref());
                ok &= derived == (i == j / q);
            }
        }
        if !ok {
            bad += 1;
        }
    }
    bad
}

/// `(violations, max |frequency − n_way / classes|)` over supervised episodes.
pub fn supervised_frequencies(episodes: usize, seed: u64) -> (usize, f64) {
    let (classes, n_way) = (10, 5);
    let images = noise_pool(classes * 4, seed);
    let labeled: Vec<(Image, usize)> = images
        .into_iter()
        .enumerate()
        .map(|(i, im)| (im, i % classes))
        .collect();
    let ds = Dataset::labeled(labeled).unwrap();
    let class_of: HashMap<*const Image, usize> = (0..ds.len())
        .map(|i| (Arc::as_ptr(ds.image(i)), ds.samples()[i].class.unwrap()))
        .collect();
    let spec = EpisodeSpec::supervised(n_way, 1, 2).unwrap();
    let mut counts = vec![0usize; classes];
    let mut bad = 0;
    for e in 0..episodes {
        let mut rng = SeededRng::derive(seed, &[e as u64]);
        let ep = sample_supervised_episode(&ds, &spec, &mut rng).unwrap();
        let mut slot_class = vec![None; n_way];
        let mut ok =
            ep.provenance == Provenance::TrueLabels && ep.support.len() == n_way && ep.query.len() == 2 * n_way;
        let mut seen = HashSet::new();
        for item in ep.support.iter().chain(&ep.query) {
            let c = class_of[&Arc::as_ptr(&item.image)];
            ok &= *slot_class[item.label].get_or_insert(c) == c;
            ok &= seen.insert(Arc::as_ptr(&item.image));
        }
        let distinct: HashSet<_> = slot_class.iter().collect();
        ok &= distinct.len() == n_way;
        for c in slot_class.into_iter().flatten() {
            counts[c] += 1;
        }
        if !ok {
            bad += 1;
        }
    }
    let expected = n_way as f64 / classes as f64;
    let dev = counts
        .iter()
        .map(|&c| (c as f64 / episodes as f64 - expected).abs())
        .fold(0.0, f64::max);
    (bad, dev)
}
