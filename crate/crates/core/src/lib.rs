//! Scores the credibility of listed companies from news text.
//!
//! The pipeline runs in stages: dictionary bag-of-words extraction over the
//! raw articles, a collapsed-Gibbs topic model, per-company feature images,
//! a small residual network trained on analyst ratings, and a verification
//! harness that checks the learned ranking against regulator-investigation
//! counts.

pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod lda;
pub mod lexicon;
pub mod network;
pub mod pipeline;
pub mod synth;
pub mod training;
pub mod verify;

pub(crate) mod binio;

pub use error::{Error, Result};
