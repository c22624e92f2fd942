//! Corpus ingestion, vocabulary, embeddings, padding and sampling.

pub mod batch;
pub mod corpus;
pub mod embeddings;
pub mod sampling;
pub mod vocab;

pub use batch::{truncate_pad, Batch, Caps, PaddedDoc, Sample};
pub use corpus::{load_corpus, load_unlabeled, write_corpus, Application};
pub use embeddings::{load_embeddings, LoadedEmbeddings};
pub use sampling::{inject_bias, split, undersample, FlipManifest, SplitSpec};
pub use vocab::{EncodedApplication, Vocabulary, PAD, UNK};
