//! Evaluation engine for tiered open-vocabulary 3D scene understanding.
//!
//! Ground-truth objects carry graded label sets (synonyms, depictions,
//! visually similar labels, clutter neighbours). Predictions are scored by
//! where those labels land in each point's similarity ranking, and by
//! retrieving instances for text queries built from the same label sets.

pub mod clutter;
pub mod error;
pub mod geometry;
pub mod io;
pub mod labels;
pub mod pipeline;
pub mod prediction;
pub mod prompt;
pub mod report;
pub mod retrieval;
pub mod scene;
pub mod seg;
pub mod similarity;
pub mod stats;

pub use error::{Error, Result};
