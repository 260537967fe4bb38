//! Synthetic classification tasks and mis-calibrated teacher simulation.
//!
//! Tasks carry a Bayes-correct posterior over candidate choices, sampled
//! from a symmetric Dirichlet (normalized independent Gamma draws); the
//! ground truth is sampled from that posterior, so the Bayes-argmax
//! predictor's confidence equals its accuracy in expectation. Power
//! sharpening of the posterior models tuning-induced over-confidence:
//! the top-1 probability is inflated and the rest deflated. The
//! sharpening family is this toolkit's choice of generative model for
//! mis-calibration, not an empirical fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::knowledge::{KnowledgeError, TopKEntry, TopKRecord};
use crate::recalibrate::{self, RecalibrateError, DEFAULT_SHIFT_DELTA};

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("distribution is invalid: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Recalibrate(#[from] RecalibrateError),
}

/// One synthetic question: a Bayes posterior over `num_choices` and a
/// ground truth sampled from it.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub num_choices: u32,
    pub true_distribution: Vec<f64>,
    pub ground_truth: u32,
    /// Per-task derived RNG seed (for reproducibility audits).
    pub seed: u64,
}

/// Power sharpening configuration: probabilities are raised to `exponent`
/// and renormalized. `exponent = 1` is the identity; larger values inflate
/// the maximum.
#[derive(Debug, Clone, Copy)]
pub struct SharpenConfig {
    exponent: f64,
}

impl SharpenConfig {
    pub fn new(exponent: f64) -> Result<Self, TeacherError> {
        if !exponent.is_finite() || exponent < 1.0 {
            return Err(TeacherError::InvalidParameter(format!(
                "sharpening exponent must be >= 1, got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }
}

/// splitmix64 finalizer; used to derive independent per-index seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a child seed from a master seed and a salt. Generation is pure
/// given (seed, index), so work can be parallelized by index without
/// affecting outputs.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(salt.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn task_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Samples a choice index from a distribution given a uniform draw.
fn sample_choice(distribution: &[f64], u: f64) -> u32 {
    let mut cumulative = 0.0;
    for (i, p) in distribution.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i as u32;
        }
    }
    distribution.len() as u32 - 1
}

/// Generates `n` synthetic tasks with posteriors drawn from a symmetric
/// Dirichlet with the given concentration. Deterministic given the seed.
pub fn generate_tasks(
    n: usize,
    num_choices: u32,
    concentration: f64,
    seed: u64,
) -> Result<Vec<SyntheticTask>, TeacherError> {
    if n == 0 {
        return Err(TeacherError::InvalidParameter("n must be >= 1".into()));
    }
    if num_choices < 2 {
        return Err(TeacherError::InvalidParameter(
            "num_choices must be >= 2".into(),
        ));
    }
    if !concentration.is_finite() || concentration <= 0.0 {
        return Err(TeacherError::InvalidParameter(format!(
            "concentration must be positive, got {concentration}"
        )));
    }
    let gamma = Gamma::new(concentration, 1.0).map_err(|e| {
        TeacherError::InvalidParameter(format!("gamma sampler rejected concentration: {e}"))
    })?;
    let mut tasks = Vec::with_capacity(n);
    for index in 0..n {
        let task_seed = derive_seed(seed, index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
        let mut draws: Vec<f64> = (0..num_choices).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            // vanishingly unlikely underflow at tiny concentrations
            draws = vec![1.0; num_choices as usize];
        }
        let total: f64 = draws.iter().sum();
        let true_distribution: Vec<f64> = draws.iter().map(|g| g / total).collect();
        let u: f64 = rng.random();
        let ground_truth = sample_choice(&true_distribution, u);
        tasks.push(SyntheticTask {
            num_choices,
            true_distribution,
            ground_truth,
            seed: task_seed,
        });
    }
    Ok(tasks)
}

/// Draws a fresh ground-truth label per task from its posterior, using a
/// seed independent of the one that produced the tasks. Used to build
/// validation/evaluation splits that share questions but not label noise.
pub fn resample_ground_truths(tasks: &[SyntheticTask], seed: u64) -> Vec<u32> {
    tasks
        .iter()
        .enumerate()
        .map(|(index, task)| {
            let mut rng = task_rng(seed, index as u64);
            let u: f64 = rng.random();
            sample_choice(&task.true_distribution, u)
        })
        .collect()
}

/// Power sharpening: `p_i^e / sum_j p_j^e`. Preserves the argmax and never
/// decreases the maximum probability for exponents >= 1.
pub fn sharpen(true_distribution: &[f64], config: &SharpenConfig) -> Result<Vec<f64>, TeacherError> {
    validate_distribution(true_distribution)?;
    if config.exponent == 1.0 {
        return Ok(true_distribution.to_vec());
    }
    let powered: Vec<f64> = true_distribution
        .iter()
        .map(|p| p.powf(config.exponent))
        .collect();
    let total: f64 = powered.iter().sum();
    if total <= 0.0 {
        return Err(TeacherError::InvalidDistribution(
            "sharpening drove all probabilities to zero".into(),
        ));
    }
    Ok(powered.iter().map(|p| p / total).collect())
}

fn validate_distribution(distribution: &[f64]) -> Result<(), TeacherError> {
    if distribution.is_empty() {
        return Err(TeacherError::InvalidDistribution("empty".into()));
    }
    let mut sum = 0.0;
    for &p in distribution {
        if !p.is_finite() || p < 0.0 {
            return Err(TeacherError::InvalidDistribution(format!(
                "component {p} is negative or not finite"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(TeacherError::InvalidDistribution(format!(
            "sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Teacher knowledge emitted for a task set: one record per task plus the
/// parallel ground truths. Token id `i` is candidate choice `i`; ids at or
/// above `num_choices` are zero-padding tokens introduced when
/// `k > num_choices`.
#[derive(Debug, Clone)]
pub struct TeacherKnowledge {
    pub records: Vec<TopKRecord>,
    pub ground_truths: Vec<u32>,
    pub num_choices: u32,
    pub vocab_size: u32,
    pub k: u16,
}

/// Sharpens each task's posterior and stores its top-k as a record.
///
/// When `k` exceeds the number of choices the record is padded with
/// zero-probability entries on distinct unused token ids and passed
/// through shift normalization so the fixed-k format stays valid.
/// Probabilities are quantized to the f32 storage precision.
pub fn emit_teacher_knowledge(
    tasks: &[SyntheticTask],
    config: &SharpenConfig,
    k: u16,
) -> Result<TeacherKnowledge, TeacherError> {
    if tasks.is_empty() {
        return Err(TeacherError::InvalidParameter("no tasks".into()));
    }
    if k == 0 {
        return Err(TeacherError::InvalidParameter("k must be >= 1".into()));
    }
    let num_choices = tasks[0].num_choices;
    if tasks.iter().any(|t| t.num_choices != num_choices) {
        return Err(TeacherError::InvalidParameter(
            "tasks must share num_choices".into(),
        ));
    }
    let vocab_size = num_choices.max(k as u32);
    let mut records = Vec::with_capacity(tasks.len());
    let mut ground_truths = Vec::with_capacity(tasks.len());
    for (index, task) in tasks.iter().enumerate() {
        let sharpened = sharpen(&task.true_distribution, config)?;
        let mut entries: Vec<TopKEntry> = sharpened
            .iter()
            .enumerate()
            .map(|(token_id, &probability)| TopKEntry {
                token_id: token_id as u32,
                probability,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.probability
                .partial_cmp(&a.probability)
                .expect("finite probabilities")
                .then(a.token_id.cmp(&b.token_id))
        });
        entries.truncate(k as usize);
        let padded = (k as u32) > num_choices;
        for pad_id in num_choices..k as u32 {
            entries.push(TopKEntry {
                token_id: pad_id,
                probability: 0.0,
            });
        }
        let mut record = TopKRecord::new(index as u32, 0, entries)?;
        if padded {
            record = recalibrate::normalize_shift(&record, DEFAULT_SHIFT_DELTA)?;
        }
        records.push(record.quantize_f32()?);
        ground_truths.push(task.ground_truth);
    }
    Ok(TeacherKnowledge {
        records,
        ground_truths,
        num_choices,
        vocab_size,
        k,
    })
}
