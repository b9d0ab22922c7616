//! Chance that an unsupervised episode's n images all come from distinct
//! classes, for Omniglot-like and mini-Imagenet-like pools.
//!
//!     cargo run --release --example prob_collision

use ssml::pipeline::cmd_prob;

fn main() {
    for (classes, per_class, n) in [(1200, 20, 5), (64, 600, 5), (64, 600, 20)] {
        let r = cmd_prob(classes, per_class, n, Some(100_000), 1).expect("valid pool");
        println!("{r}\n");
    }
}
