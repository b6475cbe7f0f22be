//! Fixtures shared by the benchmarks.

use entropart::datagen::generate;
use entropart::{Dataset, GenSpec};

/// Planted graph of `num_nodes` nodes with the default class mix.
pub fn fixture(num_nodes: usize) -> Dataset {
    generate(&GenSpec {
        num_nodes,
        ..GenSpec::default()
    })
    .expect("valid fixture spec")
}
