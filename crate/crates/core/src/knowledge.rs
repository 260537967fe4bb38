//! Top-k teacher knowledge: records, persistence, and the coverage/storage
//! trade-off analytics behind storing only the top-k probabilities per
//! token entry.

mod format;

pub use format::{
    read_knowledge, read_knowledge_jsonl, write_knowledge, write_knowledge_jsonl, KnowledgeFile,
    KnowledgeHeader, KnowledgeReader, WriteSummary, FORMAT_VERSION, HEADER_LEN, MAGIC,
};

use thiserror::Error;

/// Tolerance applied when checking that probabilities sum to at most one.
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("invalid record (sequence {sequence_id}, position {position}): {reason}")]
    InvalidRecord {
        sequence_id: u32,
        position: u32,
        reason: String,
    },
    #[error("bad magic bytes: not a knowledge file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated stream at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("empty input")]
    EmptyInput,
    #[error("distribution {index} is not normalized (sum = {sum})")]
    NotNormalized { index: usize, sum: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("jsonl error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One (token id, probability) pair inside a record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKEntry {
    pub token_id: u32,
    pub probability: f64,
}

/// One token entry's top-k knowledge: the k highest-probability tokens,
/// ordered by probability (non-increasing, ties by ascending token id).
///
/// Probabilities are kept as `f64` in memory; the binary format narrows
/// them to `f32` on write, so records meant for storage should carry
/// f32-representable values (see [`TopKRecord::quantize_f32`]).
#[derive(Debug, Clone, PartialEq)]
pub struct TopKRecord {
    pub sequence_id: u32,
    pub position: u32,
    entries: Vec<TopKEntry>,
}

impl TopKRecord {
    /// Builds a record, validating entry invariants and sorting entries
    /// into canonical order (probability descending, ties by token id).
    pub fn new(
        sequence_id: u32,
        position: u32,
        mut entries: Vec<TopKEntry>,
    ) -> Result<Self, KnowledgeError> {
        let reject = |reason: String| KnowledgeError::InvalidRecord {
            sequence_id,
            position,
            reason,
        };
        if entries.is_empty() {
            return Err(reject("record has no entries".into()));
        }
        let mut sum = 0.0;
        for entry in &entries {
            if !entry.probability.is_finite() || entry.probability < 0.0 || entry.probability > 1.0
            {
                return Err(reject(format!(
                    "probability {} for token {} outside [0, 1]",
                    entry.probability, entry.token_id
                )));
            }
            sum += entry.probability;
        }
        if sum > 1.0 + SUM_TOLERANCE {
            return Err(reject(format!("probabilities sum to {sum} > 1 + 1e-6")));
        }
        entries.sort_by(|a, b| {
            b.probability
                .partial_cmp(&a.probability)
                .expect("probabilities are finite")
                .then(a.token_id.cmp(&b.token_id))
        });
        let mut ids: Vec<u32> = entries.iter().map(|e| e.token_id).collect();
        ids.sort_unstable();
        if let Some(pair) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(reject(format!("duplicate token id {}", pair[0])));
        }
        Ok(Self {
            sequence_id,
            position,
            entries,
        })
    }

    /// Convenience constructor from `(token_id, probability)` pairs.
    pub fn from_pairs(
        sequence_id: u32,
        position: u32,
        pairs: &[(u32, f64)],
    ) -> Result<Self, KnowledgeError> {
        let entries = pairs
            .iter()
            .map(|&(token_id, probability)| TopKEntry {
                token_id,
                probability,
            })
            .collect();
        Self::new(sequence_id, position, entries)
    }

    pub fn entries(&self) -> &[TopKEntry] {
        &self.entries
    }

    /// Number of stored entries.
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    /// Highest-probability entry.
    pub fn top(&self) -> &TopKEntry {
        &self.entries[0]
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.probability).collect()
    }

    pub fn token_ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.token_id).collect()
    }

    /// Checks the record against a file header's `k` and `vocab_size`.
    pub fn validate_against(&self, k: u16, vocab_size: u32) -> Result<(), KnowledgeError> {
        if self.entries.len() != k as usize {
            return Err(KnowledgeError::InvalidRecord {
                sequence_id: self.sequence_id,
                position: self.position,
                reason: format!("expected {} entries, found {}", k, self.entries.len()),
            });
        }
        for entry in &self.entries {
            if entry.token_id >= vocab_size {
                return Err(KnowledgeError::InvalidRecord {
                    sequence_id: self.sequence_id,
                    position: self.position,
                    reason: format!(
                        "token id {} outside vocabulary of size {vocab_size}",
                        entry.token_id
                    ),
                });
            }
        }
        Ok(())
    }

    /// Rounds probabilities through `f32`, the storage precision, so the
    /// record compares equal after a binary round-trip.
    pub fn quantize_f32(&self) -> Result<TopKRecord, KnowledgeError> {
        let entries = self
            .entries
            .iter()
            .map(|e| TopKEntry {
                token_id: e.token_id,
                probability: e.probability as f32 as f64,
            })
            .collect();
        TopKRecord::new(self.sequence_id, self.position, entries)
    }
}

/// Coverage-vs-storage statistics over a corpus of full distributions.
///
/// `per_rank_mean_cumulative[r]` is the mean accumulated probability of the
/// top `r + 1` tokens; `per_rank_min`/`per_rank_max` bound the range across
/// the corpus. Byte counts compare storing every probability against
/// storing only the top `k_max`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CoverageStats {
    pub per_rank_mean_cumulative: Vec<f64>,
    pub per_rank_min: Vec<f64>,
    pub per_rank_max: Vec<f64>,
    pub bytes_full: u64,
    pub bytes_topk: u64,
}

/// Computes cumulative top-rank coverage by sorting each distribution
/// descending and prefix-summing, plus the full-vs-top-k byte comparison.
pub fn coverage_stats(
    full_distributions: &[Vec<f64>],
    k_max: usize,
    bytes_per_full_entry: u64,
    bytes_per_topk_entry: u64,
) -> Result<CoverageStats, KnowledgeError> {
    if full_distributions.is_empty() {
        return Err(KnowledgeError::EmptyInput);
    }
    if k_max == 0 {
        return Err(KnowledgeError::InvalidArgument("k_max must be >= 1".into()));
    }
    let vocab = full_distributions[0].len();
    if k_max > vocab {
        return Err(KnowledgeError::InvalidArgument(format!(
            "k_max {k_max} exceeds vocabulary size {vocab}"
        )));
    }
    let mut mean = vec![0.0; k_max];
    let mut min = vec![f64::INFINITY; k_max];
    let mut max = vec![f64::NEG_INFINITY; k_max];
    for (index, dist) in full_distributions.iter().enumerate() {
        if dist.len() != vocab {
            return Err(KnowledgeError::InvalidArgument(format!(
                "distribution {index} has length {}, expected {vocab}",
                dist.len()
            )));
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(KnowledgeError::NotNormalized { index, sum });
        }
        let mut sorted = dist.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite probabilities"));
        let mut cumulative = 0.0;
        for (rank, p) in sorted.iter().take(k_max).enumerate() {
            cumulative += p;
            mean[rank] += cumulative;
            min[rank] = min[rank].min(cumulative);
            max[rank] = max[rank].max(cumulative);
        }
    }
    let n = full_distributions.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    let count = full_distributions.len() as u64;
    let bytes_full = count
        .checked_mul(vocab as u64)
        .and_then(|b| b.checked_mul(bytes_per_full_entry))
        .ok_or_else(|| KnowledgeError::InvalidArgument("byte count overflow".into()))?;
    let bytes_topk = count
        .checked_mul(k_max as u64)
        .and_then(|b| b.checked_mul(bytes_per_topk_entry))
        .ok_or_else(|| KnowledgeError::InvalidArgument("byte count overflow".into()))?;
    Ok(CoverageStats {
        per_rank_mean_cumulative: mean,
        per_rank_min: min,
        per_rank_max: max,
        bytes_full,
        bytes_topk,
    })
}

/// Full-distribution vs top-k storage estimate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StorageEstimate {
    pub bytes_full: u64,
    pub bytes_topk: u64,
    pub ratio: f64,
}

/// Estimates storage for `num_samples` sequences of `avg_length` token
/// entries: the full distribution costs `vocab_size` entries per position,
/// the top-k store only `k`.
pub fn storage_estimate(
    num_samples: u64,
    avg_length: u64,
    vocab_size: u64,
    k: u64,
    bytes_per_full_entry: u64,
    bytes_per_topk_entry: u64,
) -> Result<StorageEstimate, KnowledgeError> {
    for (name, value) in [
        ("num_samples", num_samples),
        ("avg_length", avg_length),
        ("vocab_size", vocab_size),
        ("k", k),
        ("bytes_per_full_entry", bytes_per_full_entry),
        ("bytes_per_topk_entry", bytes_per_topk_entry),
    ] {
        if value == 0 {
            return Err(KnowledgeError::InvalidArgument(format!(
                "{name} must be positive"
            )));
        }
    }
    let positions = num_samples
        .checked_mul(avg_length)
        .ok_or_else(|| KnowledgeError::InvalidArgument("position count overflow".into()))?;
    let bytes_full = positions
        .checked_mul(vocab_size)
        .and_then(|b| b.checked_mul(bytes_per_full_entry))
        .ok_or_else(|| KnowledgeError::InvalidArgument("bytes_full overflow".into()))?;
    let bytes_topk = positions
        .checked_mul(k)
        .and_then(|b| b.checked_mul(bytes_per_topk_entry))
        .ok_or_else(|| KnowledgeError::InvalidArgument("bytes_topk overflow".into()))?;
    Ok(StorageEstimate {
        bytes_full,
        bytes_topk,
        ratio: bytes_full as f64 / bytes_topk as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(pairs: &[(u32, f64)]) -> TopKRecord {
        TopKRecord::from_pairs(0, 0, pairs).unwrap()
    }

    #[test]
    fn record_sorts_canonically() {
        let r = record(&[(3, 0.02), (7, 0.95), (1, 0.01), (9, 0.015), (4, 0.005)]);
        assert_eq!(r.token_ids(), vec![7, 3, 9, 1, 4]);
    }

    #[test]
    fn record_ties_order_by_token_id() {
        let r = record(&[(9, 0.25), (2, 0.25), (5, 0.5)]);
        assert_eq!(r.token_ids(), vec![5, 2, 9]);
    }

    #[test]
    fn record_rejects_oversum() {
        let err = TopKRecord::from_pairs(3, 17, &[(0, 0.8), (1, 0.7)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sequence 3"), "{msg}");
        assert!(msg.contains("position 17"), "{msg}");
    }

    #[test]
    fn record_rejects_duplicate_ids() {
        assert!(TopKRecord::from_pairs(0, 0, &[(1, 0.5), (1, 0.3)]).is_err());
        // duplicates that are not probability-adjacent
        assert!(TopKRecord::from_pairs(0, 0, &[(1, 0.5), (2, 0.4), (1, 0.05)]).is_err());
    }

    #[test]
    fn record_rejects_negative_probability() {
        assert!(TopKRecord::from_pairs(0, 0, &[(1, -0.1), (2, 0.5)]).is_err());
    }

    #[test]
    fn validate_against_checks_k_and_vocab() {
        let r = record(&[(0, 0.6), (1, 0.4)]);
        assert!(r.validate_against(2, 10).is_ok());
        assert!(r.validate_against(3, 10).is_err());
        assert!(r.validate_against(2, 1).is_err());
    }

    #[test]
    fn coverage_one_hot() {
        let mut v = vec![0.0; 10];
        v[3] = 1.0;
        let stats = coverage_stats(&[v], 5, 4, 8).unwrap();
        for r in 0..5 {
            assert!((stats.per_rank_mean_cumulative[r] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_uniform() {
        let v = vec![0.1; 10];
        let stats = coverage_stats(&[v], 5, 4, 8).unwrap();
        for (r, expected) in [(0, 0.1), (1, 0.2), (2, 0.3), (3, 0.4), (4, 0.5)] {
            assert!(
                (stats.per_rank_mean_cumulative[r] - expected).abs() < 1e-12,
                "rank {r}"
            );
        }
    }

    #[test]
    fn coverage_full_rank_reaches_one() {
        let v = vec![0.25, 0.3, 0.2, 0.25];
        let stats = coverage_stats(&[v], 4, 4, 8).unwrap();
        assert!((stats.per_rank_mean_cumulative[3] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coverage_rejects_empty_and_unnormalized() {
        assert!(matches!(
            coverage_stats(&[], 5, 4, 8),
            Err(KnowledgeError::EmptyInput)
        ));
        let bad = vec![vec![0.5, 0.2]];
        match coverage_stats(&bad, 2, 4, 8) {
            Err(KnowledgeError::NotNormalized { index: 0, .. }) => {}
            other => panic!("expected NotNormalized, got {other:?}"),
        }
    }

    #[test]
    fn coverage_bytes() {
        let v = vec![0.1; 10];
        let stats = coverage_stats(&[v.clone(), v], 5, 4, 8).unwrap();
        assert_eq!(stats.bytes_full, 2 * 10 * 4);
        assert_eq!(stats.bytes_topk, 2 * 5 * 8);
    }

    #[test]
    fn storage_small_example() {
        let est = storage_estimate(1, 1, 10, 5, 4, 8).unwrap();
        assert_eq!(est.bytes_full, 40);
        assert_eq!(est.bytes_topk, 40);
        assert_eq!(est.ratio, 1.0);
    }

    #[test]
    fn storage_large_example() {
        let est = storage_estimate(100_000, 2048, 50_000, 5, 4, 8).unwrap();
        assert_eq!(est.bytes_full, 40_960_000_000_000);
        assert_eq!(est.bytes_topk, 8_192_000_000);
        assert_eq!(est.ratio, 5000.0);
    }

    #[test]
    fn storage_degenerate_k() {
        let est = storage_estimate(10, 10, 100, 100, 4, 4).unwrap();
        assert_eq!(est.ratio, 1.0);
    }

    #[test]
    fn storage_rejects_zero() {
        assert!(storage_estimate(0, 1, 10, 5, 4, 8).is_err());
        assert!(storage_estimate(1, 1, 10, 0, 4, 8).is_err());
    }
}
