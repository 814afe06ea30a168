//! Cross-lingual visual verb sense disambiguation.
//!
//! Given an image and an English verb phrase, pick the German or Spanish
//! translation of the verb with a visual, textual or early-fusion
//! multimodal classifier, then use the predicted verb as a lexical
//! constraint when decoding a translation.

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod features;
pub mod fixture;
pub mod models;
pub mod training;

pub use error::{Error, Result};
