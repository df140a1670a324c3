//! Lexical retrieval: tokenizer, inverted index with BM25 ranking, and
//! merging of local and external result lists.

mod error;
pub mod external;
pub mod index;
pub mod merge;
pub mod tokenize;

pub use error::{Result, RetrievalError};
pub use external::{ExternalSearch, FixtureSearch, HttpSearch};
pub use index::{build_index, load_corpus, Bm25Params, Document, InvertedIndex, Source};
pub use merge::merge_sources;
pub use tokenize::{tokenize, tokenize_spans, Token};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub doc_id: String,
    pub score: f64,
    pub snippet: String,
    pub source: Source,
}
