//! Relevance scoring for type-like knowledge-base triples.
//!
//! Given a person, a relation (`profession` or `nationality`) and a candidate
//! entity, the engine produces an integer score from 0 to 7 by combining
//! distant-supervision labels, word-embedding similarity, TF-IDF entity
//! profiles and the order in which entities are first mentioned in the
//! person's text. The [`eval`] module computes accuracy, average score
//! difference and grouped Kendall tau-b for scored triples.

pub mod corpus;
pub mod distsup;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod features;
mod io_util;
pub mod lexicon;
pub mod pipeline;
pub mod scorer;

pub use corpus::{CorpusIndex, PersonDocument};
pub use error::{Error, Result};
pub use lexicon::{EntityLexicon, RelationType, TokenStream};
