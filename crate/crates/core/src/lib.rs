//! Survival-analysis toolkit for fact acquisition during LLM fine-tuning.
//!
//! Epoch-level correctness traces are turned into right-censored events
//! (acquisition, generalization, degradation) and analysed with Kaplan–Meier
//! accumulation curves, accumulation velocity, log-rank tests and Cox
//! proportional-hazards regression. A latent-knowledge probe classifies base
//! model knowledge through stochastic decoding, and a discrete-time hazard
//! simulator provides ground truth for recovery tests.

pub mod cox;
pub mod datamodel;
pub mod error;
pub mod events;
pub mod logrank;
pub mod probe;
pub mod report;
pub mod simulate;
pub mod special;
pub mod survival;
pub mod velocity;

pub use error::{Error, Result};
