//! Align-then-slide evaluation for document-level machine translation.
//!
//! A translation of a whole document rarely keeps the sentence structure of
//! its source. This crate rebuilds a one-to-one sentence correspondence
//! anchored on the source ([`alignment`]), scores the aligned pair with
//! overlapping windows of 1 to 4 sentences ([`slide_eval`]), and turns the
//! resulting scores into system rankings ([`ranking`]) and training signals
//! ([`datapipe`]).
//!
//! ```
//! use docasd::alignment::{align_document, AlignConfig};
//! use docasd::scorer::LexicalScorer;
//! use docasd::slide_eval::{asd_score, SlideConfig};
//!
//! let src = "The cat sat. The dog ran. The bird flew.";
//! let tgt = "The cat sat. The bird flew.";
//! let scorer = LexicalScorer::default();
//! let pair = align_document(src, tgt, None, ("en", "en"), &AlignConfig::default(), &scorer).unwrap();
//! assert_eq!(pair.placeholder_count, 1);
//!
//! let result = asd_score(&pair, &scorer, &SlideConfig::default()).unwrap();
//! assert!(result.final_score < 1.0);
//! ```

pub mod alignment;
pub mod datapipe;
mod error;
pub mod ranking;
pub mod scorer;
pub mod segmentation;
pub mod slide_eval;

pub use error::{Error, Result};
