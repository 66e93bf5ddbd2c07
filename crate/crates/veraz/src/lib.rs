//! veraz — a text-classification experimentation toolkit for fake-news
//! detection, built from scratch.
//!
//! The library covers the full batch pipeline:
//!
//! - [`corpus`]: loading, merging and splitting labeled news corpora
//! - [`textnorm`]: deterministic normalization (casing, tokenization,
//!   stop words, stemming, padding)
//! - [`vectorize`]: capped vocabularies, BoW / tf-idf sparse features,
//!   id sequences and pre-trained embedding tables
//! - [`models`]: SVM, random forest, gradient boosted trees, MLP, and
//!   text CNN / LSTM with manual backpropagation
//! - [`eval`]: accuracy/confusion metrics, bootstrap (ShuffleSplit)
//!   evaluation, grid search and learning curves
//! - [`schemes`]: declarative experiment specs binding corpora, models
//!   and preprocessing into reproducible runs
//!
//! Everything is deterministic given a master seed: re-running an
//! experiment reproduces every reported number bit-exactly, independent
//! of worker count.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod models;
pub mod report;
pub mod schemes;
pub mod textnorm;
pub mod util;
pub mod vectorize;

pub use error::{Error, Result};
