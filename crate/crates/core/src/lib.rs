//! Neural rankers trained from BM25 weak supervision.
//!
//! The pieces, bottom-up:
//!
//! * [`corpus`]: tokenization, vocabulary, documents and queries.
//! * [`index`]: inverted index with BM25 retrieval and a binary on-disk form.
//! * [`weaklabel`]: point-wise and pair-wise training instances from BM25.
//! * [`nn`]: dense layers, dropout, embeddings with learned term weights, Adam.
//! * [`represent`]: dense, sparse and embedding input representations.
//! * [`rankers`]: Score, Rank and RankProb models, training and re-ranking.
//! * [`eval`]: TREC run/qrels files, MAP, P@20, nDCG@20, paired t-test.
//! * [`pipeline`]: config-driven stages.
//! * [`synth`]: synthetic collection with a synonym table.

mod binio;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod index;
pub mod nn;
pub mod pipeline;
pub mod rankers;
pub mod represent;
pub mod synth;
pub mod weaklabel;

pub use corpus::{Corpus, Query, RawRecord, Tokenizer, Vocabulary};
pub use error::{Error, Result};
pub use eval::{MetricReport, Qrels, Run};
pub use index::{Bm25Params, InvertedIndex, ScoredDoc};
pub use rankers::{Architecture, ModelSpec, RankerModel, TrainConfig};
pub use represent::{FeatureSpace, RepresentationKind};
