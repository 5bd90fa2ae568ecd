//! Shared fixtures for the criterion benchmarks.

use phrasal::model::{prepare_corpus, PreparedCorpus};
use phrasal::synth::{generate, GeneratorSpec};
use phrasal::LabeledPhrase;

/// Synthetic corpus with `per_class` phrases for each of the ten classes.
pub fn corpus(per_class: usize) -> Vec<LabeledPhrase> {
    generate(&GeneratorSpec {
        phrases_per_class: per_class,
        ..GeneratorSpec::default()
    })
    .expect("valid generator spec")
}

pub fn prepared(per_class: usize, partitions: usize) -> PreparedCorpus {
    prepare_corpus(&corpus(per_class), partitions).expect("non-empty corpus")
}
