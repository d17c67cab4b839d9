//! Dataset, embedding and rule ingestion, tokenization, and a synthetic
//! question generator.

mod dataset;
mod embeddings;
mod rules;
mod synthetic;
mod tokenize;

pub use dataset::{
    dataset_from_file, load_dataset, parse_dataset, Dataset, DatasetFile, MovieRecord, Plot, QAInstance, QaRecord,
    Split, NUM_CANDIDATES,
};
pub use embeddings::{
    encode_instance, load_embeddings, load_embeddings_filtered, read_embeddings, EmbeddingTable, EncodedInstance,
    OOV_RANGE,
};
pub use rules::{load_rules, parse_rules, validate_rules, RuleSet, SubstitutionRule};
pub use synthetic::{gen_synthetic, SyntheticConfig, SyntheticData};
pub use tokenize::{is_punctuation, tokenize};
