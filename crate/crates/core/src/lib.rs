//! Pairwise, translation-aligned data-quality rating for multilingual corpora.
//!
//! The pipeline runs in stages, each a module:
//!
//! * [`corpus`]: documents, token counting, JSON Lines ingestion.
//! * [`raters`]: turning per-rater scores or A/B votes into pairwise confidences.
//! * [`pairgen`]: projecting English judgments onto translated pairs.
//! * [`scorer`]: Bradley–Terry training of a scalar scorer with a parallel-pair regulariser.
//! * [`select`]: scoring corpora and picking the top fraction of tokens per language.
//! * [`diagnostics`]: cross-lingual consistency reports.
//!
//! [`synth`] generates corpora with known latent quality for demos and tests.

pub mod corpus;
pub mod diagnostics;
mod error;
pub mod jsonl;
pub mod pairgen;
pub mod raters;
pub mod scorer;
pub mod select;
pub mod synth;

pub use corpus::{count_tokens, load_corpus, save_corpus, Corpus, Document, LangCode};
pub use error::{Error, Result};
pub use raters::{PairJudgment, PairKind};
pub use scorer::{Backend, ScorerState, TrainingConfig};
