//! Tokenization with focus-token location, model backends, matrix
//! extraction and the on-disk matrix store.

mod backend;
mod extract;
mod locate;
pub mod store;
mod tensor;
mod tokenizer;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use backend::{stub_backend, ModelBackend, PythonBackend, StubBackend};
pub use extract::{batch_extract, ExtractOptions, ExtractionReport, PatternCounts};
pub use locate::{resolve_index, tokenize_and_locate, Focus, Rejection, TokenizedExample};
pub use store::{MatrixStore, MatrixStoreWriter, StoreRecord};
pub use tensor::{extract_matrix, AttentionMatrix, AttentionTensor, Direction};
pub use tokenizer::{basic_tokenize, StubTokenizer, Tokenizer, WordPieceTokenizer, CLS, SEP, UNK};

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("attention is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("token position {position} out of range for sequence length {seq_len}")]
    PositionOutOfRange { position: usize, seq_len: usize },
    #[error("model backend failed: {0}")]
    Backend(String),
    #[error("matrix store already exists at {0}")]
    StoreExists(PathBuf),
    #[error("corrupt matrix store {path}: {message}")]
    Store { path: PathBuf, message: String },
    #[error("input sets are not aligned: {0}")]
    Unaligned(String),
}
