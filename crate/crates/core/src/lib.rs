//! Toolkit for predicting and evaluating entity state changes caused by
//! actions described in text.
//!
//! The crate is organised around the life of an evaluation run:
//!
//! * [`corpus`] loads instances and the attribute vocabulary,
//! * [`prompts`] renders the four prompting strategies and parses replies,
//! * [`backends`] turns prompts into raw predictions,
//! * [`pipeline`] drives a backend over a dataset and produces records,
//! * [`metrics`] and [`analysis`] score those records,
//! * [`cli`] ties everything into persisted, replayable runs.

pub mod analysis;
pub mod backends;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod rng;
pub mod similarity;
pub mod synthetic;

pub use error::{Error, Result};
