//! Preference-based alignment primitives at desk scale.
//!
//! The crate covers three connected pieces:
//!
//! - [`reward`] and [`policy`]: Bradley-Terry reward modeling and
//!   KL-penalized optimization of a tabular softmax policy, with the Gibbs
//!   distribution as the closed-form maximizer.
//! - [`llf`]: a critique (feedback) model trained by cross-entropy and the
//!   generate/critique/refine loop that turns critiques into preference pairs.
//! - [`w2s`]: a correction model trained on question/answer/correction
//!   triples, correction-driven preference synthesis, and the iterated
//!   weak-to-strong cycle that chains everything together.
//!
//! Everything is a pure function of its inputs plus an explicit seed.

pub mod backend;
pub mod error;
pub mod features;
pub mod io;
pub mod lang;
pub mod llf;
pub mod math;
pub mod policy;
pub mod reward;
pub mod seqmodel;
pub mod synthetic;
pub mod types;
pub mod w2s;

pub use error::{AlignError, Result};
pub use lang::Lang;
pub use types::{PreferencePair, Prompt, Provenance, ResponseText};
