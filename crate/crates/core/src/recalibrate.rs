//! Knowledge trustworthy maximization: transforms that re-calibrate top-k
//! teacher probabilities, and validation-set grid search for the optimal
//! temperature.
//!
//! Temperature scaling here is a softmax over the stored top-k
//! *probabilities* (not logits): `p_i' = exp(p_i / c) / sum_j exp(p_j / c)`.
//! Large `c` drives the distribution toward uniform `1/k`; `c = 1` strongly
//! compresses the top-1 probability. Logits are not available once only
//! top-k probabilities are stored, so a logit-space variant is out of
//! scope.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::knowledge::{KnowledgeError, TopKEntry, TopKRecord};
use crate::metrics::{self, MetricsError, PredictionSet};

/// Default shift used to keep probabilities strictly positive.
pub const DEFAULT_SHIFT_DELTA: f64 = 1e-6;
/// Default smoothing coefficient for label smoothing.
pub const DEFAULT_SMOOTHING_DELTA: f64 = 0.1;

#[derive(Debug, Error)]
pub enum RecalibrateError {
    #[error("label smoothing is defined for k = 5, record has k = {0}")]
    WrongK(usize),
    #[error("smoothing delta {delta} outside [0, top-1 probability {top1}]")]
    DeltaOutOfRange { delta: f64, top1: f64 },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("shift delta must be positive, got {0}")]
    NonPositiveShift(f64),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("validation case {index} has no candidate-choice entries")]
    NoCandidates { index: usize },
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Result of applying label smoothing to one record.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedRecord {
    pub record: TopKRecord,
    /// True when the original top-1 token is no longer ranked first.
    pub rank_flip: bool,
}

/// Label smoothing over a top-5 record: subtract `delta` from the top-1
/// probability and add `delta / 4` to each of ranks 2-5. Total mass is
/// conserved; entries are re-sorted and a rank flip is reported instead of
/// silently accepted.
pub fn label_smooth(record: &TopKRecord, delta: f64) -> Result<SmoothedRecord, RecalibrateError> {
    if record.k() != 5 {
        return Err(RecalibrateError::WrongK(record.k()));
    }
    let top1 = record.top().probability;
    if !delta.is_finite() || delta < 0.0 || delta > top1 {
        return Err(RecalibrateError::DeltaOutOfRange { delta, top1 });
    }
    let original_top_token = record.top().token_id;
    let entries = record
        .entries()
        .iter()
        .enumerate()
        .map(|(rank, e)| TopKEntry {
            token_id: e.token_id,
            probability: if rank == 0 {
                e.probability - delta
            } else {
                e.probability + delta / 4.0
            },
        })
        .collect();
    let smoothed = TopKRecord::new(record.sequence_id, record.position, entries)?;
    Ok(SmoothedRecord {
        rank_flip: smoothed.top().token_id != original_top_token,
        record: smoothed,
    })
}

/// Temperature scaling: softmax of the stored probabilities divided by
/// `c`. Rank order is preserved for every `c > 0`.
pub fn temp_scale(record: &TopKRecord, c: f64) -> Result<TopKRecord, RecalibrateError> {
    if !c.is_finite() || c <= 0.0 {
        return Err(RecalibrateError::NonPositiveTemperature(c));
    }
    let max = record.top().probability;
    // subtracting the max keeps exp() in range for small c
    let weights: Vec<f64> = record
        .entries()
        .iter()
        .map(|e| ((e.probability - max) / c).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let entries = record
        .entries()
        .iter()
        .zip(&weights)
        .map(|(e, w)| TopKEntry {
            token_id: e.token_id,
            probability: w / total,
        })
        .collect();
    Ok(TopKRecord::new(record.sequence_id, record.position, entries)?)
}

/// Shift normalization: `(p_i + delta) / sum_j (p_j + delta)`. Keeps every
/// probability strictly positive while preserving ranks.
pub fn normalize_shift(
    record: &TopKRecord,
    delta_small: f64,
) -> Result<TopKRecord, RecalibrateError> {
    let probs = record.probabilities();
    let shifted = shift_normalize_values(&probs, delta_small)?;
    let entries = record
        .entries()
        .iter()
        .zip(shifted)
        .map(|(e, probability)| TopKEntry {
            token_id: e.token_id,
            probability,
        })
        .collect();
    Ok(TopKRecord::new(record.sequence_id, record.position, entries)?)
}

/// Slice-level shift normalization shared by record transforms and the
/// KL-matching loss.
pub fn shift_normalize_values(
    values: &[f64],
    delta_small: f64,
) -> Result<Vec<f64>, RecalibrateError> {
    if !delta_small.is_finite() || delta_small <= 0.0 {
        return Err(RecalibrateError::NonPositiveShift(delta_small));
    }
    let total: f64 = values.iter().map(|v| v + delta_small).sum();
    Ok(values.iter().map(|v| (v + delta_small) / total).collect())
}

/// One validation question: a record whose token ids in
/// `[0, num_choices)` are the candidate choices, plus the ground truth.
#[derive(Debug, Clone)]
pub struct ValidationCase {
    pub record: TopKRecord,
    pub num_choices: u32,
    pub ground_truth: u32,
}

/// Grid-search configuration. The default follows the two-stage scheme:
/// a coarse pass over {0.1, ..., 1.0} and a refinement of +/-0.1 around
/// the coarse optimum at step 0.02. Temperatures above 1.0 can be searched
/// by supplying a custom coarse grid.
#[derive(Debug, Clone)]
pub struct GridSearchConfig {
    pub coarse_grid: Vec<f64>,
    pub refine_halfwidth: f64,
    pub refine_step: f64,
    /// Renormalize candidate probabilities when forming predictions.
    pub renormalize: bool,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self {
            coarse_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
            refine_halfwidth: 0.1,
            refine_step: 0.02,
            renormalize: true,
        }
    }
}

/// Both evaluated grids and the selected optimum.
#[derive(Debug, Clone, Serialize)]
pub struct GridSearchResult {
    pub coarse_grid: Vec<(f64, f64)>,
    pub refined_grid: Vec<(f64, f64)>,
    pub best_c: f64,
    pub best_ece: f64,
}

/// Validation ECE after scaling every record by temperature `c`.
pub fn validation_ece(
    validation: &[ValidationCase],
    c: f64,
    num_bins: usize,
    renormalize: bool,
) -> Result<f64, RecalibrateError> {
    let preds = validation
        .iter()
        .enumerate()
        .map(|(index, case)| {
            let scaled = temp_scale(&case.record, c)?;
            let mut candidates: BTreeMap<u32, f64> = BTreeMap::new();
            for entry in scaled.entries() {
                if entry.token_id < case.num_choices {
                    candidates.insert(entry.token_id, entry.probability);
                }
            }
            if candidates.is_empty() {
                return Err(RecalibrateError::NoCandidates { index });
            }
            Ok(metrics::restrict_and_predict(
                &candidates,
                &case.ground_truth,
                renormalize,
            )?)
        })
        .collect::<Result<Vec<_>, RecalibrateError>>()?;
    Ok(metrics::ece(&PredictionSet::new(preds)?, num_bins)?)
}

/// Two-stage temperature grid search minimizing validation ECE, with the
/// default configuration.
pub fn grid_search_temperature(
    validation: &[ValidationCase],
    num_bins: usize,
) -> Result<GridSearchResult, RecalibrateError> {
    grid_search_temperature_with(validation, num_bins, &GridSearchConfig::default())
}

/// Two-stage temperature grid search with an explicit configuration.
///
/// Grid points may be evaluated in parallel; selection folds over the
/// grids in their stated order, so the result is deterministic regardless
/// of scheduling. Ties are broken toward the smaller temperature.
pub fn grid_search_temperature_with(
    validation: &[ValidationCase],
    num_bins: usize,
    config: &GridSearchConfig,
) -> Result<GridSearchResult, RecalibrateError> {
    if validation.is_empty() {
        return Err(RecalibrateError::EmptyValidation);
    }
    if config.coarse_grid.is_empty() {
        return Err(RecalibrateError::Knowledge(KnowledgeError::InvalidArgument(
            "coarse grid is empty".into(),
        )));
    }
    let evaluate = |grid: &[f64]| -> Result<Vec<(f64, f64)>, RecalibrateError> {
        grid.par_iter()
            .map(|&c| validation_ece(validation, c, num_bins, config.renormalize).map(|e| (c, e)))
            .collect()
    };

    let coarse = evaluate(&config.coarse_grid)?;
    let (coarse_best_c, _) = select_best(&coarse);

    let half_steps = (config.refine_halfwidth / config.refine_step).round() as i64;
    let refine_points: Vec<f64> = (-half_steps..=half_steps)
        .map(|j| coarse_best_c + j as f64 * config.refine_step)
        .filter(|&c| c > 1e-12)
        .collect();
    let refined = evaluate(&refine_points)?;

    let all: Vec<(f64, f64)> = coarse.iter().chain(refined.iter()).copied().collect();
    let (best_c, best_ece) = select_best(&all);
    Ok(GridSearchResult {
        coarse_grid: coarse,
        refined_grid: refined,
        best_c,
        best_ece,
    })
}

fn select_best(points: &[(f64, f64)]) -> (f64, f64) {
    let mut best = points[0];
    for &(c, e) in &points[1..] {
        if e < best.1 || (e == best.1 && c < best.0) {
            best = (c, e);
        }
    }
    best
}
