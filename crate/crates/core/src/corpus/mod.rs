//! Synthetic attribute-tagged dialogue corpus, tokenization and vocabulary.

pub mod generate;
pub mod jsonl;
pub mod schema;
pub mod tokenize;
pub mod vocab;

pub use generate::{builtin_topics, gen_corpus, CorpusCounts, GeneratedCorpus, Lexicons};
pub use jsonl::{
    encode_context, load_jsonl, read_raw_jsonl, to_jsonl_string, write_jsonl, DialogueExample, RawExample,
    MAX_RESPONSE_LEN, MAX_TURN_LEN,
};
pub use schema::{Attribute, AttributeSchema};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{build_vocab, Vocab, BOS, EOS, PAD, UNK};
