//! Desk-scale toolkit for trustworthy offline distillation.
//!
//! The pipeline: extract concentrated top-k knowledge from a teacher,
//! re-calibrate it (temperature scaling selected by grid search, or label
//! smoothing), train a small softmax student by KL knowledge matching, and
//! evaluate trustworthiness via expected calibration error and the trust
//! score, with reliability-diagram data emission.
//!
//! Modules map onto the pipeline stages:
//! - [`knowledge`] — top-k record store (binary + JSONL), coverage and
//!   storage analytics
//! - [`metrics`] — candidate-restricted predictions, ECE, trust score,
//!   reliability reports
//! - [`recalibrate`] — label smoothing, temperature scaling, shift
//!   normalization, temperature grid search
//! - [`teacher`] — synthetic tasks and mis-calibrated teacher simulation
//! - [`distill`] — linear-softmax student trained by KL knowledge matching
//!   or hard labels

pub mod distill;
pub mod knowledge;
pub mod metrics;
pub mod recalibrate;
pub mod teacher;
