//! Population-level survey simulation with value-based personas.
//!
//! The pipeline samples respondents from a survey dataset, turns their answers
//! into persona descriptors, scores every admissible answer with a language
//! model backend, averages the per-persona distributions into a population
//! prediction, and calibrates and evaluates the result against human data.

pub mod backend;
pub mod calibrate;
pub mod dataset;
pub mod distribution;
pub mod evaluate;
pub mod persona;
pub mod prompt;
pub mod shapley;
pub mod simulate;
pub mod synth;

pub use distribution::ResponseDistribution;
