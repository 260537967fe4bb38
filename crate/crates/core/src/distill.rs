//! Linear-softmax student trained by KL knowledge matching against top-k
//! teacher records, with hard-label cross-entropy as the baseline.
//!
//! The KL loss gathers the student's probabilities at the teacher's stored
//! token ids and shift-normalizes both sides over that support, so the
//! loss is a proper KL divergence between distributions. Training is
//! full-batch gradient descent on the mean loss, reduced in fixed dataset
//! order; results are bitwise deterministic given (seed, config, dataset
//! order).

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::knowledge::TopKRecord;
use crate::recalibrate::{shift_normalize_values, RecalibrateError, DEFAULT_SHIFT_DELTA};

/// Magic tag opening a serialized student model.
pub const MODEL_MAGIC: &[u8; 8] = b"TDSTUDNT";
/// Student model blob format version.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("feature vector has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("teacher token id {token_id} outside student vocabulary of size {vocab}")]
    TokenOutOfRange { token_id: u32, vocab: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index} target does not match training mode")]
    ModeMismatch { index: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad magic bytes: not a student model file")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Recalibrate(#[from] RecalibrateError),
}

/// Linear-softmax categorical predictor: `softmax(weights^T x + bias)`.
///
/// Parameters are initialized uniformly in [-0.01, 0.01] from the seed, so
/// two models built with the same shape and seed are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    num_features: usize,
    vocab_size: usize,
    /// Row-major `num_features x vocab_size`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    seed: u64,
}

impl StudentModel {
    pub fn new(num_features: usize, vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..num_features * vocab_size)
            .map(|_| rng.random_range(-0.01..=0.01))
            .collect();
        let bias = (0..vocab_size)
            .map(|_| rng.random_range(-0.01..=0.01))
            .collect();
        Self {
            num_features,
            vocab_size,
            weights,
            bias,
            seed,
        }
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Softmax output over the vocabulary; sums to 1 within 1e-9.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, DistillError> {
        if features.len() != self.num_features {
            return Err(DistillError::DimensionMismatch {
                expected: self.num_features,
                got: features.len(),
            });
        }
        let mut logits = self.bias.clone();
        for (f, &x) in features.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.weights[f * self.vocab_size..(f + 1) * self.vocab_size];
            for (z, w) in logits.iter_mut().zip(row) {
                *z += w * x;
            }
        }
        softmax_in_place(&mut logits);
        Ok(logits)
    }

    /// Serializes the model: header then row-major weights then bias, all
    /// little-endian, parameters as 64-bit floats.
    pub fn save(&self, destination: &mut impl Write) -> Result<(), DistillError> {
        destination.write_all(MODEL_MAGIC)?;
        destination.write_all(&MODEL_VERSION.to_le_bytes())?;
        destination.write_all(&(self.num_features as u32).to_le_bytes())?;
        destination.write_all(&(self.vocab_size as u32).to_le_bytes())?;
        destination.write_all(&self.seed.to_le_bytes())?;
        for w in &self.weights {
            destination.write_all(&w.to_le_bytes())?;
        }
        for b in &self.bias {
            destination.write_all(&b.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(source: &mut impl Read) -> Result<Self, DistillError> {
        let mut header = [0u8; 28];
        source.read_exact(&mut header)?;
        if &header[0..8] != MODEL_MAGIC {
            return Err(DistillError::BadMagic);
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(DistillError::UnsupportedVersion(version));
        }
        let num_features = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let vocab_size = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(header[20..28].try_into().unwrap());
        let mut read_f64 = |count: usize| -> Result<Vec<f64>, DistillError> {
            let mut buf = vec![0u8; count * 8];
            source.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let weights = read_f64(num_features * vocab_size)?;
        let bias = read_f64(vocab_size)?;
        Ok(Self {
            num_features,
            vocab_size,
            weights,
            bias,
            seed,
        })
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        total += *z;
    }
    for z in logits.iter_mut() {
        *z /= total;
    }
}

/// Spec-level alias for [`StudentModel::forward`].
pub fn student_forward(model: &StudentModel, features: &[f64]) -> Result<Vec<f64>, DistillError> {
    model.forward(features)
}

/// KL divergence between the teacher's stored top-k distribution and the
/// student's probabilities gathered at the same token ids, both sides
/// shift-normalized over that support. Non-negative up to rounding.
pub fn kl_loss(
    teacher: &TopKRecord,
    student_probs: &[f64],
    delta_small: f64,
) -> Result<f64, DistillError> {
    let gathered = gather(teacher, student_probs)?;
    let teacher_probs = shift_normalize_values(&teacher.probabilities(), delta_small)?;
    let student_restricted = shift_normalize_values(&gathered, delta_small)?;
    Ok(kl_of(&teacher_probs, &student_restricted))
}

fn gather(teacher: &TopKRecord, student_probs: &[f64]) -> Result<Vec<f64>, DistillError> {
    teacher
        .entries()
        .iter()
        .map(|e| {
            student_probs
                .get(e.token_id as usize)
                .copied()
                .ok_or(DistillError::TokenOutOfRange {
                    token_id: e.token_id,
                    vocab: student_probs.len(),
                })
        })
        .collect()
}

fn kl_of(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Target for one training sample.
#[derive(Debug, Clone)]
pub enum TrainTarget {
    /// Teacher top-k record for KL knowledge matching.
    Soft(TopKRecord),
    /// Ground-truth token id for hard-label cross-entropy.
    Hard(u32),
}

/// One training sample.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: Vec<f64>,
    pub target: TrainTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    KlMatch,
    HardLabel,
}

/// Training configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub mode: TrainMode,
    /// Shift-normalization floor applied to teacher and gathered student
    /// probabilities in KL mode.
    pub delta_small: f64,
    /// When false, the student side of the KL is floored by `delta_small`
    /// but not renormalized over the gathered support.
    pub renormalize_student: bool,
    /// Record a finite-difference gradient check (on the initial model and
    /// first sample) in the report.
    pub check_gradients: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 100,
            mode: TrainMode::KlMatch,
            delta_small: DEFAULT_SHIFT_DELTA,
            renormalize_student: true,
            check_gradients: false,
        }
    }
}

/// Per-epoch mean losses plus the post-training loss.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub gradient_check: Option<f64>,
}

/// Full-batch gradient descent on the mean loss over the dataset.
///
/// `epoch_losses[e]` is the mean loss at the parameters entering epoch
/// `e`; `final_loss` is evaluated after the last update. Aborts with the
/// epoch number if the loss stops being finite.
pub fn train_student(
    model: StudentModel,
    dataset: &[TrainSample],
    config: &TrainConfig,
) -> Result<(StudentModel, TrainReport), DistillError> {
    if dataset.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    if !config.learning_rate.is_finite() || config.learning_rate <= 0.0 {
        return Err(DistillError::InvalidConfig(format!(
            "learning_rate must be positive, got {}",
            config.learning_rate
        )));
    }
    if config.epochs == 0 {
        return Err(DistillError::InvalidConfig("epochs must be >= 1".into()));
    }
    let prepared = prepare_samples(&model, dataset, config)?;

    let gradient_check = if config.check_gradients {
        Some(gradient_check_impl(
            &model,
            &dataset[0],
            config.delta_small,
            1e-5,
            config.renormalize_student,
        )?)
    } else {
        None
    };

    let mut model = model;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let n = dataset.len() as f64;
    let mut grad_w = vec![0.0; model.num_features * model.vocab_size];
    let mut grad_b = vec![0.0; model.vocab_size];
    for epoch in 0..config.epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        grad_b.iter_mut().for_each(|g| *g = 0.0);
        let mut loss_sum = 0.0;
        for (sample, prep) in dataset.iter().zip(&prepared) {
            let probs = model.forward(&sample.features)?;
            let (loss, grad_z) = sample_loss_grad(&probs, prep, config);
            loss_sum += loss;
            for (f, &x) in sample.features.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &mut grad_w[f * model.vocab_size..(f + 1) * model.vocab_size];
                for (g, gz) in row.iter_mut().zip(&grad_z) {
                    *g += gz * x;
                }
            }
            for (g, gz) in grad_b.iter_mut().zip(&grad_z) {
                *g += gz;
            }
        }
        let mean_loss = loss_sum / n;
        if !mean_loss.is_finite() {
            return Err(DistillError::NanLoss { epoch });
        }
        epoch_losses.push(mean_loss);
        let scale = config.learning_rate / n;
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= scale * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad_b) {
            *b -= scale * g;
        }
    }

    let mut final_loss = 0.0;
    for (sample, prep) in dataset.iter().zip(&prepared) {
        let probs = model.forward(&sample.features)?;
        final_loss += sample_loss_grad(&probs, prep, config).0;
    }
    final_loss /= n;
    if !final_loss.is_finite() {
        return Err(DistillError::NanLoss {
            epoch: config.epochs,
        });
    }
    Ok((
        model,
        TrainReport {
            mode: config.mode,
            epoch_losses,
            final_loss,
            gradient_check,
        },
    ))
}

/// Pre-processed per-sample target.
enum PreparedTarget {
    /// Token ids plus the shift-normalized teacher distribution.
    Soft { ids: Vec<u32>, teacher: Vec<f64> },
    Hard(u32),
}

fn prepare_samples(
    model: &StudentModel,
    dataset: &[TrainSample],
    config: &TrainConfig,
) -> Result<Vec<PreparedTarget>, DistillError> {
    dataset
        .iter()
        .enumerate()
        .map(|(index, sample)| {
            if sample.features.len() != model.num_features {
                return Err(DistillError::DimensionMismatch {
                    expected: model.num_features,
                    got: sample.features.len(),
                });
            }
            match (&sample.target, config.mode) {
                (TrainTarget::Soft(record), TrainMode::KlMatch) => {
                    for entry in record.entries() {
                        if entry.token_id as usize >= model.vocab_size {
                            return Err(DistillError::TokenOutOfRange {
                                token_id: entry.token_id,
                                vocab: model.vocab_size,
                            });
                        }
                    }
                    let teacher =
                        shift_normalize_values(&record.probabilities(), config.delta_small)?;
                    Ok(PreparedTarget::Soft {
                        ids: record.token_ids(),
                        teacher,
                    })
                }
                (TrainTarget::Hard(label), TrainMode::HardLabel) => {
                    if *label as usize >= model.vocab_size {
                        return Err(DistillError::TokenOutOfRange {
                            token_id: *label,
                            vocab: model.vocab_size,
                        });
                    }
                    Ok(PreparedTarget::Hard(*label))
                }
                _ => Err(DistillError::ModeMismatch { index }),
            }
        })
        .collect()
}

/// Loss and gradient w.r.t. the logits for one sample.
fn sample_loss_grad(probs: &[f64], target: &PreparedTarget, config: &TrainConfig) -> (f64, Vec<f64>) {
    match target {
        PreparedTarget::Hard(label) => {
            let label = *label as usize;
            let loss = -probs[label].ln();
            let mut grad_z = probs.to_vec();
            grad_z[label] -= 1.0;
            (loss, grad_z)
        }
        PreparedTarget::Soft { ids, teacher } => {
            let delta = config.delta_small;
            let gathered: Vec<f64> = ids.iter().map(|&id| probs[id as usize]).collect();
            let (loss, coeffs) = if config.renormalize_student {
                let total: f64 = gathered.iter().map(|q| q + delta).sum();
                let student: Vec<f64> = gathered.iter().map(|q| (q + delta) / total).collect();
                let loss = kl_of(teacher, &student);
                // d loss / d q_m = (1 - t_m / s_m) / total
                let coeffs: Vec<f64> = teacher
                    .iter()
                    .zip(&student)
                    .map(|(&t, &s)| (1.0 - t / s) / total)
                    .collect();
                (loss, coeffs)
            } else {
                let student: Vec<f64> = gathered.iter().map(|q| q + delta).collect();
                let loss = kl_of(teacher, &student);
                let coeffs: Vec<f64> = teacher
                    .iter()
                    .zip(&student)
                    .map(|(&t, &s)| -t / s)
                    .collect();
                (loss, coeffs)
            };
            // chain through the softmax: with a_m = coeff_m * q_m,
            // d loss / d z_v = [v in ids] a_v - p_v * sum_m a_m
            let scaled: Vec<f64> = coeffs
                .iter()
                .zip(&gathered)
                .map(|(&c, &q)| c * q)
                .collect();
            let total_scaled: f64 = scaled.iter().sum();
            let mut grad_z: Vec<f64> = probs.iter().map(|&p| -p * total_scaled).collect();
            for (&id, &a) in ids.iter().zip(&scaled) {
                grad_z[id as usize] += a;
            }
            (loss, grad_z)
        }
    }
}

/// Compares the analytic KL gradient against central finite differences on
/// randomly chosen parameters; returns the maximum relative error.
///
/// The relative error denominator is floored at 1e-4 so components whose
/// true gradient is near zero are judged on absolute error instead of
/// blowing up the ratio.
pub fn gradient_check(
    model: &StudentModel,
    sample: &TrainSample,
    delta_small: f64,
    step: f64,
) -> Result<f64, DistillError> {
    gradient_check_impl(model, sample, delta_small, step, true)
}

fn gradient_check_impl(
    model: &StudentModel,
    sample: &TrainSample,
    delta_small: f64,
    step: f64,
    renormalize_student: bool,
) -> Result<f64, DistillError> {
    if !step.is_finite() || step <= 0.0 {
        return Err(DistillError::InvalidConfig(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let record = match &sample.target {
        TrainTarget::Soft(record) => record,
        TrainTarget::Hard(_) => return Err(DistillError::ModeMismatch { index: 0 }),
    };
    let config = TrainConfig {
        delta_small,
        renormalize_student,
        ..TrainConfig::default()
    };
    let prepared = prepare_samples(model, std::slice::from_ref(sample), &config)?;

    let probs = model.forward(&sample.features)?;
    let (_, grad_z) = sample_loss_grad(&probs, &prepared[0], &config);
    let num_weights = model.num_features * model.vocab_size;

    let loss_at = |m: &StudentModel| -> Result<f64, DistillError> {
        let probs = m.forward(&sample.features)?;
        let gathered = gather(record, &probs)?;
        let teacher = shift_normalize_values(&record.probabilities(), delta_small)?;
        let student = if renormalize_student {
            shift_normalize_values(&gathered, delta_small)?
        } else {
            gathered.iter().map(|q| q + delta_small).collect()
        };
        Ok(kl_of(&teacher, &student))
    };

    // >= 20 probed parameters: 20 weights (or all of them when the model
    // is tiny) plus 4 bias components
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ 0x6772_6164u64);
    let mut max_rel = 0.0f64;
    let weight_probes = 20.min(num_weights);
    let bias_probes = 4.min(model.vocab_size);
    for probe in 0..weight_probes + bias_probes {
        let is_weight = probe < weight_probes;
        let index = if is_weight {
            rng.random_range(0..num_weights)
        } else {
            rng.random_range(0..model.vocab_size)
        };
        let analytic = if is_weight {
            let feature = index / model.vocab_size;
            grad_z[index % model.vocab_size] * sample.features[feature]
        } else {
            grad_z[index]
        };
        let mut plus = model.clone();
        let mut minus = model.clone();
        if is_weight {
            plus.weights[index] += step;
            minus.weights[index] -= step;
        } else {
            plus.bias[index] += step;
            minus.bias[index] -= step;
        }
        let numeric = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * step);
        let denom = analytic.abs().max(numeric.abs()).max(1e-4);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    }
    Ok(max_rel)
}
