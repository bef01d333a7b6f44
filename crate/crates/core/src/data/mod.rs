//! Synthetic generators, embedding and lexicon ingestion, and splits.

mod embeddings;
mod splits;
mod synthetic;

pub use embeddings::{load_embeddings, load_lexicon, read_embeddings, read_lexicon, write_embeddings, EmbeddingTable, Lexicon};
pub use splits::{build_splits, train_val_split, FrequencyBin, Splits, TestItem, TrainSet};
pub use synthetic::{
    gen_rotation_toy, gen_synthetic, rotation_clockwise, SyntheticTask, SYNTHETIC_NOISE_STD, TOY_NOISE_STD,
};
