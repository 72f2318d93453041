//! Tokenization, vocabularies, labeled datasets, K-shot sampling and
//! synthetic task generation.

mod dataset;
mod synthetic;
mod vocab;

pub use dataset::{
    kshot_sample, load_dataset, load_dataset_with_labels, parse_records, records_to_split,
    DataFormat, DatasetSplit, LabeledExample, RawRecord,
};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use vocab::{
    build_vocab, build_vocab_with_reserved, TokenId, Vocab, MASK_ID, MASK_TOKEN, PAD_ID, PAD_TOKEN,
    SPECIAL_COUNT, TEMPLATE_WORDS, UNK_ID, UNK_TOKEN,
};
