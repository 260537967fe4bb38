//! Calibration and trustworthiness metrics: candidate-restricted
//! predictions, expected calibration error, accuracy, trust score, and
//! reliability-diagram bins.
//!
//! ECE partitions [0, 1] into `M` equal-width half-open bins `(lower,
//! upper]`, with confidence 0 assigned to the first bin, and returns the
//! bin-count-weighted mean absolute gap between per-bin accuracy and
//! per-bin confidence. The trust score is `accuracy - ece`; both work on
//! whatever scale the caller uses ([0,1] here, x100 for display), and
//! mixed scales are not detectable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of reliability bins.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction set is empty")]
    EmptyPredictionSet,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("candidate map is empty")]
    EmptyCandidates,
    #[error("candidate probability {0} is negative or not finite")]
    InvalidProbability(f64),
    #[error("all candidate probabilities are zero")]
    AllZeroProbabilities,
    #[error("number of bins must be >= 1")]
    ZeroBins,
}

/// One question's outcome: predicted confidence and correctness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub confidence: f64,
    pub correct: bool,
}

/// Non-empty collection of predictions; the input to every calibration
/// metric.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    items: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(items: Vec<Prediction>) -> Result<Self, MetricsError> {
        if items.is_empty() {
            return Err(MetricsError::EmptyPredictionSet);
        }
        for item in &items {
            if !item.confidence.is_finite() || item.confidence < 0.0 || item.confidence > 1.0 {
                return Err(MetricsError::InvalidConfidence(item.confidence));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[Prediction] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Always false: emptiness is rejected at construction.
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Fraction of correct predictions.
    pub fn accuracy(&self) -> f64 {
        self.items.iter().filter(|p| p.correct).count() as f64 / self.items.len() as f64
    }
}

/// Chooses the argmax candidate (ties broken by the smallest label) and
/// scores it against the ground truth. With `renormalize` the confidence
/// is the chosen probability divided by the total candidate mass;
/// otherwise the raw probability is used.
pub fn restrict_and_predict<L: Ord>(
    candidate_probs: &BTreeMap<L, f64>,
    ground_truth: &L,
    renormalize: bool,
) -> Result<Prediction, MetricsError> {
    if candidate_probs.is_empty() {
        return Err(MetricsError::EmptyCandidates);
    }
    let mut total = 0.0;
    let mut chosen: Option<(&L, f64)> = None;
    // BTreeMap iterates in ascending label order, so keeping the first
    // strict maximum implements the smallest-label tie rule.
    for (label, &p) in candidate_probs {
        if !p.is_finite() || p < 0.0 {
            return Err(MetricsError::InvalidProbability(p));
        }
        total += p;
        match chosen {
            Some((_, best)) if p <= best => {}
            _ => chosen = Some((label, p)),
        }
    }
    if total <= 0.0 {
        return Err(MetricsError::AllZeroProbabilities);
    }
    let (label, p) = chosen.expect("nonempty map");
    let confidence = if renormalize { p / total } else { p };
    if confidence > 1.0 {
        return Err(MetricsError::InvalidConfidence(confidence));
    }
    Ok(Prediction {
        confidence,
        correct: label == ground_truth,
    })
}

/// Zero-based bin index for a confidence: bin `ceil(c * M)` with c = 0
/// assigned to the first bin.
pub fn bin_index(confidence: f64, num_bins: usize) -> usize {
    if confidence <= 0.0 {
        return 0;
    }
    let bin = (confidence * num_bins as f64).ceil() as usize;
    bin.clamp(1, num_bins) - 1
}

struct BinAccumulator {
    sum_confidence: f64,
    num_correct: usize,
    count: usize,
}

fn accumulate_bins(preds: &PredictionSet, num_bins: usize) -> Vec<BinAccumulator> {
    let mut bins: Vec<BinAccumulator> = (0..num_bins)
        .map(|_| BinAccumulator {
            sum_confidence: 0.0,
            num_correct: 0,
            count: 0,
        })
        .collect();
    for item in preds.items() {
        let bin = &mut bins[bin_index(item.confidence, num_bins)];
        bin.sum_confidence += item.confidence;
        bin.num_correct += item.correct as usize;
        bin.count += 1;
    }
    bins
}

fn ece_from_bins(bins: &[BinAccumulator], n: usize) -> f64 {
    let n = n as f64;
    let mut total = 0.0;
    for bin in bins {
        if bin.count == 0 {
            continue;
        }
        let count = bin.count as f64;
        let acc = bin.num_correct as f64 / count;
        let conf = bin.sum_confidence / count;
        total += count / n * (acc - conf).abs();
    }
    total
}

/// Expected calibration error over `num_bins` equal-width bins.
pub fn ece(preds: &PredictionSet, num_bins: usize) -> Result<f64, MetricsError> {
    if num_bins == 0 {
        return Err(MetricsError::ZeroBins);
    }
    let bins = accumulate_bins(preds, num_bins);
    Ok(ece_from_bins(&bins, preds.len()))
}

/// Trust score: accuracy minus expected calibration error. Both arguments
/// must be on the same scale.
pub fn trust_score(accuracy: f64, ece: f64) -> f64 {
    accuracy - ece
}

/// One reliability-diagram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub mean_accuracy: f64,
}

/// Per-bin reliability statistics plus the summary metrics.
///
/// Empty bins are kept (count 0, means reported as 0) so the report always
/// has `num_bins` rows; `trust` is computed as `accuracy - ece` with the
/// same floating-point subtraction as [`trust_score`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub num_bins: usize,
    pub bins: Vec<BinStats>,
    pub ece: f64,
    pub accuracy: f64,
    pub trust: f64,
}

/// Builds the reliability report for a prediction set.
pub fn reliability_report(
    preds: &PredictionSet,
    num_bins: usize,
) -> Result<ReliabilityReport, MetricsError> {
    if num_bins == 0 {
        return Err(MetricsError::ZeroBins);
    }
    let accumulators = accumulate_bins(preds, num_bins);
    let ece = ece_from_bins(&accumulators, preds.len());
    let bins = accumulators
        .iter()
        .enumerate()
        .map(|(i, bin)| BinStats {
            lower: i as f64 / num_bins as f64,
            upper: (i + 1) as f64 / num_bins as f64,
            count: bin.count,
            mean_confidence: if bin.count == 0 {
                0.0
            } else {
                bin.sum_confidence / bin.count as f64
            },
            mean_accuracy: if bin.count == 0 {
                0.0
            } else {
                bin.num_correct as f64 / bin.count as f64
            },
        })
        .collect();
    let accuracy = preds.accuracy();
    Ok(ReliabilityReport {
        num_bins,
        bins,
        ece,
        accuracy,
        trust: trust_score(accuracy, ece),
    })
}

impl ReliabilityReport {
    /// Total number of predictions across bins.
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// CSV rendering: one row per bin plus a summary row.
    ///
    /// Columns: `row_type,bin,lower,upper,count,mean_confidence,
    /// mean_accuracy,ece,accuracy,trust`. Bin rows leave the last three
    /// empty; the summary row leaves the bin columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "row_type,bin,lower,upper,count,mean_confidence,mean_accuracy,ece,accuracy,trust\n",
        );
        for (i, bin) in self.bins.iter().enumerate() {
            out.push_str(&format!(
                "bin,{},{},{},{},{},{},,,\n",
                i + 1,
                bin.lower,
                bin.upper,
                bin.count,
                bin.mean_confidence,
                bin.mean_accuracy
            ));
        }
        out.push_str(&format!(
            "summary,,,,{},,,{},{},{}\n",
            self.total_count(),
            self.ece,
            self.accuracy,
            self.trust
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(f64, bool)]) -> PredictionSet {
        PredictionSet::new(
            items
                .iter()
                .map(|&(confidence, correct)| Prediction {
                    confidence,
                    correct,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn restrict_clear_argmax() {
        let mut cands = BTreeMap::new();
        for (label, p) in [("A", 0.7), ("B", 0.1), ("C", 0.1), ("D", 0.1)] {
            cands.insert(label, p);
        }
        let pred = restrict_and_predict(&cands, &"A", true).unwrap();
        assert!((pred.confidence - 0.7).abs() < 1e-12);
        assert!(pred.correct);
    }

    #[test]
    fn restrict_tie_picks_smallest_label() {
        let mut cands = BTreeMap::new();
        for label in ["A", "B", "C", "D"] {
            cands.insert(label, 0.2);
        }
        let pred = restrict_and_predict(&cands, &"C", true).unwrap();
        assert!((pred.confidence - 0.25).abs() < 1e-12);
        assert!(!pred.correct);
    }

    #[test]
    fn restrict_renormalizes() {
        let mut cands = BTreeMap::new();
        cands.insert("A", 0.3);
        cands.insert("B", 0.9);
        let pred = restrict_and_predict(&cands, &"B", true).unwrap();
        assert!((pred.confidence - 0.75).abs() < 1e-12);
        assert!(pred.correct);
        let raw = restrict_and_predict(&cands, &"B", false).unwrap();
        assert!((raw.confidence - 0.9).abs() < 1e-12);
    }

    #[test]
    fn restrict_rejects_empty_and_zero() {
        let empty: BTreeMap<&str, f64> = BTreeMap::new();
        assert!(matches!(
            restrict_and_predict(&empty, &"A", true),
            Err(MetricsError::EmptyCandidates)
        ));
        let mut zeros = BTreeMap::new();
        zeros.insert("A", 0.0);
        zeros.insert("B", 0.0);
        assert!(matches!(
            restrict_and_predict(&zeros, &"A", true),
            Err(MetricsError::AllZeroProbabilities)
        ));
    }

    #[test]
    fn bin_assignment_edges() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.05, 10), 0);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.1000001, 10), 1);
        assert_eq!(bin_index(0.95, 10), 9);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.5, 1), 0);
    }

    #[test]
    fn ece_perfectly_confident_and_correct() {
        let preds = set(&[(1.0, true), (1.0, true), (1.0, true)]);
        assert_eq!(ece(&preds, 10).unwrap(), 0.0);
    }

    #[test]
    fn ece_hand_computed_four_items() {
        // bin 10 holds (0.95, T) and (0.95, F); bin 6 holds (0.55, T);
        // bin 7 holds (0.65, T):
        // 0.5*|0.5-0.95| + 0.25*|1-0.55| + 0.25*|1-0.65| = 0.425
        let preds = set(&[(0.95, true), (0.95, false), (0.55, true), (0.65, true)]);
        let value = ece(&preds, 10).unwrap();
        assert!((value - 0.425).abs() < 1e-12, "ece = {value}");
    }

    #[test]
    fn ece_maximal_miscalibration() {
        let preds = set(&[(1.0, false), (1.0, false)]);
        assert_eq!(ece(&preds, 10).unwrap(), 1.0);
    }

    #[test]
    fn ece_rejects_zero_bins() {
        let preds = set(&[(0.5, true)]);
        assert!(matches!(ece(&preds, 0), Err(MetricsError::ZeroBins)));
    }

    #[test]
    fn trust_reference_rows() {
        assert!((trust_score(80.8, 2.9) - 77.9).abs() < 1e-9);
        assert!((trust_score(89.7, 7.7) - 82.0).abs() < 1e-9);
        assert_eq!(trust_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn report_single_item() {
        let preds = set(&[(0.95, true)]);
        let report = reliability_report(&preds, 10).unwrap();
        assert_eq!(report.bins.len(), 10);
        let last = &report.bins[9];
        assert_eq!(last.count, 1);
        assert!((last.mean_confidence - 0.95).abs() < 1e-12);
        assert_eq!(last.mean_accuracy, 1.0);
        assert!((report.ece - 0.05).abs() < 1e-12);
        assert_eq!(report.trust, report.accuracy - report.ece);
    }

    #[test]
    fn report_balanced_half_bin() {
        let preds = set(&[(0.5, true), (0.5, false), (0.5, true), (0.5, false)]);
        let report = reliability_report(&preds, 10).unwrap();
        assert_eq!(report.ece, 0.0);
        assert_eq!(report.accuracy, 0.5);
    }

    #[test]
    fn report_matches_ece_and_counts() {
        let preds = set(&[(0.95, true), (0.95, false), (0.55, true), (0.65, true)]);
        let report = reliability_report(&preds, 10).unwrap();
        assert_eq!(report.ece, ece(&preds, 10).unwrap());
        assert!((report.ece - 0.425).abs() < 1e-12);
        assert_eq!(report.total_count(), 4);
    }

    #[test]
    fn csv_has_bin_and_summary_rows() {
        let preds = set(&[(0.95, true)]);
        let report = reliability_report(&preds, 10).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 12); // header + 10 bins + summary
        assert!(lines[0].starts_with("row_type,bin"));
        assert!(lines[11].starts_with("summary,"));
    }

    #[test]
    fn json_serializes() {
        let preds = set(&[(0.95, true)]);
        let report = reliability_report(&preds, 10).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"ece\":"));
        assert!(json.contains("\"bins\":"));
    }
}
