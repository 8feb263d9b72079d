//! Multiple-choice benchmark synthesis and zero-shot evaluation for traffic situational
//! reasoning.
//!
//! * [`synthesis`] turns cause/effect corpora into three-way questions with dissimilar
//!   distractors, clusters actions into classes and filters driving-test questions.
//! * [`corpus`] and [`retrieval`] chunk driving manuals into paragraphs and search them exactly.
//! * [`scorers`] answers questions by NLI margin, plausibility or retrieval plus generation,
//!   with all model calls behind [`backend::Backend`].
//! * [`evaluation`] computes accuracy, per-class, overlap and human-vote statistics.

pub mod backend;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod retrieval;
pub mod scorers;
pub mod server;
pub mod synthesis;

pub use error::{Error, Result};
