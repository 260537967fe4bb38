//! Command implementations behind the `trustdistill` binary.
//!
//! Each subcommand is a plain function over a clap-derived argument
//! struct, returning a summary the binary prints; integration tests call
//! the functions directly. Every file the pipeline exchanges is one of:
//! the binary knowledge format, the tasks JSONL
//! (`{"task":..,"choices":..,"truth":..,"dist":[..]}` per line), the
//! student model blob, or a JSON/CSV report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use trustdistill::distill::{
    train_student, StudentModel, TrainConfig, TrainMode, TrainReport, TrainSample, TrainTarget,
};
use trustdistill::knowledge::{self, TopKRecord};
use trustdistill::metrics::{self, PredictionSet, ReliabilityReport};
use trustdistill::recalibrate::{self, ValidationCase};
use trustdistill::teacher::{self, derive_seed, SharpenConfig, SyntheticTask};

/// One line of the tasks JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskLine {
    pub task: u64,
    pub choices: u32,
    pub truth: u32,
    pub dist: Vec<f64>,
}

fn write_task_lines(path: &Path, tasks: &[SyntheticTask]) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for (index, task) in tasks.iter().enumerate() {
        let line = TaskLine {
            task: index as u64,
            choices: task.num_choices,
            truth: task.ground_truth,
            dist: task.true_distribution.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_task_lines(path: &Path) -> Result<Vec<TaskLine>> {
    use std::io::BufRead;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = Vec::new();
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TaskLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad task line", path.display(), number + 1))?;
        lines.push(parsed);
    }
    ensure!(!lines.is_empty(), "{}: no tasks", path.display());
    Ok(lines)
}

/// Ground-truth labels for an evaluation: the stored ones, or a fresh
/// per-task draw from the stored posterior when a resample seed is given.
fn labels_for(task_lines: &[TaskLine], resample_seed: Option<u64>) -> Vec<u32> {
    match resample_seed {
        None => task_lines.iter().map(|t| t.truth).collect(),
        Some(seed) => {
            let tasks: Vec<SyntheticTask> = task_lines
                .iter()
                .map(|t| SyntheticTask {
                    num_choices: t.choices,
                    true_distribution: t.dist.clone(),
                    ground_truth: t.truth,
                    seed: 0,
                })
                .collect();
            teacher::resample_ground_truths(&tasks, seed)
        }
    }
}

fn read_knowledge_file(path: &Path) -> Result<knowledge::KnowledgeFile> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    knowledge::read_knowledge(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
}

fn write_knowledge_file(
    path: &Path,
    records: &[TopKRecord],
    vocab_size: u32,
    k: u16,
) -> Result<knowledge::WriteSummary> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    let summary = knowledge::write_knowledge(records, vocab_size, k, &mut out)?;
    out.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()
        .with_context(|| format!("writing {}", path.display()))
}

fn sibling_path(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(suffix);
    base.with_file_name(name)
}

// ---------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Number of synthetic tasks.
    #[arg(long, default_value_t = 1000)]
    pub tasks: usize,
    /// Candidate choices per task.
    #[arg(long, default_value_t = 4)]
    pub choices: u32,
    /// Teacher over-confidence exponent (1 = calibrated teacher).
    #[arg(long, default_value_t = 3.0)]
    pub sharpen: f64,
    /// Top-k entries stored per task.
    #[arg(long, default_value_t = 5)]
    pub k: u16,
    /// Dirichlet concentration of the task posteriors.
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    /// Output knowledge file.
    #[arg(long)]
    pub out: PathBuf,
    /// Tasks JSONL path (default: `<out stem>.tasks.jsonl`).
    #[arg(long)]
    pub tasks_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractSummary {
    pub record_count: u64,
    pub bytes_written: u64,
    pub vocab_size: u32,
    pub knowledge_path: PathBuf,
    pub tasks_path: PathBuf,
}

pub fn cmd_extract(args: &ExtractArgs) -> Result<ExtractSummary> {
    ensure!(args.tasks > 0, "empty dataset: --tasks must be at least 1");
    let tasks = teacher::generate_tasks(args.tasks, args.choices, args.concentration, args.seed)?;
    let sharpen = SharpenConfig::new(args.sharpen)?;
    let emitted = teacher::emit_teacher_knowledge(&tasks, &sharpen, args.k)?;
    let summary = write_knowledge_file(&args.out, &emitted.records, emitted.vocab_size, args.k)?;
    let tasks_path = args
        .tasks_out
        .clone()
        .unwrap_or_else(|| sibling_path(&args.out, ".tasks.jsonl"));
    write_task_lines(&tasks_path, &tasks)?;
    Ok(ExtractSummary {
        record_count: summary.record_count,
        bytes_written: summary.bytes_written,
        vocab_size: emitted.vocab_size,
        knowledge_path: args.out.clone(),
        tasks_path,
    })
}

// ---------------------------------------------------------------------
// recalibrate
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Label smoothing.
    Ls,
    /// Temperature scaling with two-stage grid search.
    Ts,
}

#[derive(Debug, Clone, Args)]
pub struct RecalibrateArgs {
    /// Input knowledge file.
    #[arg(long)]
    pub knowledge: PathBuf,
    /// Validation tasks JSONL (questions and ground truths).
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Smoothing coefficient (ls only).
    #[arg(long, default_value_t = recalibrate::DEFAULT_SMOOTHING_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
    pub bins: usize,
    /// Re-draw validation labels from the stored posteriors with this seed.
    #[arg(long)]
    pub resample_labels: Option<u64>,
    /// Output knowledge file.
    #[arg(long)]
    pub out: PathBuf,
    /// Grid-search curves JSON (ts only; default `<out stem>.grid.json`).
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecalibrateSummary {
    pub method: String,
    pub input_ece: f64,
    pub output_ece: f64,
    pub best_c: Option<f64>,
    pub rank_flips: usize,
    pub output_path: PathBuf,
    pub grid_path: Option<PathBuf>,
}

fn validation_cases(records: &[TopKRecord], lines: &[TaskLine], labels: &[u32]) -> Vec<ValidationCase> {
    records
        .iter()
        .zip(lines)
        .zip(labels)
        .map(|((record, line), &ground_truth)| ValidationCase {
            record: record.clone(),
            num_choices: line.choices,
            ground_truth,
        })
        .collect()
}

fn cases_ece(cases: &[ValidationCase], bins: usize) -> Result<f64> {
    let preds = cases
        .iter()
        .map(|case| {
            let mut candidates = BTreeMap::new();
            for entry in case.record.entries() {
                if entry.token_id < case.num_choices {
                    candidates.insert(entry.token_id, entry.probability);
                }
            }
            Ok(metrics::restrict_and_predict(
                &candidates,
                &case.ground_truth,
                true,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics::ece(&PredictionSet::new(preds)?, bins)?)
}

pub fn cmd_recalibrate(args: &RecalibrateArgs) -> Result<RecalibrateSummary> {
    let file = read_knowledge_file(&args.knowledge)?;
    let lines = read_task_lines(&args.validation)?;
    ensure!(
        lines.len() as u64 == file.header.record_count,
        "{}: {} tasks but knowledge file has {} records",
        args.validation.display(),
        lines.len(),
        file.header.record_count
    );
    let labels = labels_for(&lines, args.resample_labels);
    let cases = validation_cases(&file.records, &lines, &labels);
    let input_ece = cases_ece(&cases, args.bins)?;

    let mut best_c = None;
    let mut rank_flips = 0;
    let mut grid_path = None;
    let transformed: Vec<TopKRecord> = match args.method {
        Method::Ls => file
            .records
            .iter()
            .map(|record| {
                let smoothed = recalibrate::label_smooth(record, args.delta)?;
                if smoothed.rank_flip {
                    rank_flips += 1;
                }
                Ok(smoothed.record)
            })
            .collect::<Result<_>>()?,
        Method::Ts => {
            let result = recalibrate::grid_search_temperature(&cases, args.bins)?;
            let path = args
                .grid_out
                .clone()
                .unwrap_or_else(|| sibling_path(&args.out, ".grid.json"));
            write_json(&path, &result)?;
            grid_path = Some(path);
            best_c = Some(result.best_c);
            file.records
                .iter()
                .map(|record| Ok(recalibrate::temp_scale(record, result.best_c)?))
                .collect::<Result<_>>()?
        }
    };

    let out_cases = validation_cases(&transformed, &lines, &labels);
    let output_ece = cases_ece(&out_cases, args.bins)?;
    write_knowledge_file(&args.out, &transformed, file.header.vocab_size, file.header.k)?;
    Ok(RecalibrateSummary {
        method: match args.method {
            Method::Ls => "ls".into(),
            Method::Ts => "ts".into(),
        },
        input_ece,
        output_ece,
        best_c,
        rank_flips,
        output_path: args.out.clone(),
        grid_path,
    })
}

// ---------------------------------------------------------------------
// distill
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// KL knowledge matching against teacher records.
    KlMatch,
    /// Cross-entropy on the ground-truth labels.
    HardLabel,
}

#[derive(Debug, Clone, Args)]
pub struct DistillArgs {
    /// Teacher knowledge file (kl-match mode).
    #[arg(long)]
    pub knowledge: PathBuf,
    /// Tasks JSONL; provides hard labels and fixes the dataset size.
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::KlMatch)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 2.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 5000)]
    pub epochs: usize,
    /// Shift-normalization floor for KL matching.
    #[arg(long, default_value_t = recalibrate::DEFAULT_SHIFT_DELTA)]
    pub floor: f64,
    /// Seed for the student's parameter initialization.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Record a finite-difference gradient check in the report.
    #[arg(long, default_value_t = false)]
    pub check_gradients: bool,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report JSON (default `<out stem>.train.json`).
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistillSummary {
    pub mode: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
}

fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

pub fn cmd_distill(args: &DistillArgs) -> Result<DistillSummary> {
    let file = read_knowledge_file(&args.knowledge)?;
    let lines = read_task_lines(&args.tasks)?;
    let n = lines.len();
    ensure!(
        n as u64 == file.header.record_count,
        "{}: {} tasks but knowledge file has {} records",
        args.tasks.display(),
        n,
        file.header.record_count
    );
    let dataset: Vec<TrainSample> = match args.mode {
        ModeArg::KlMatch => file
            .records
            .iter()
            .enumerate()
            .map(|(i, record)| TrainSample {
                features: one_hot(i, n),
                target: TrainTarget::Soft(record.clone()),
            })
            .collect(),
        ModeArg::HardLabel => lines
            .iter()
            .enumerate()
            .map(|(i, line)| TrainSample {
                features: one_hot(i, n),
                target: TrainTarget::Hard(line.truth),
            })
            .collect(),
    };
    let config = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        mode: match args.mode {
            ModeArg::KlMatch => TrainMode::KlMatch,
            ModeArg::HardLabel => TrainMode::HardLabel,
        },
        delta_small: args.floor,
        renormalize_student: true,
        check_gradients: args.check_gradients,
    };
    let model = StudentModel::new(n, file.header.vocab_size as usize, args.seed);
    let (trained, report) = train_student(model, &dataset, &config)?;

    let mut out = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    trained.save(&mut out)?;
    out.flush()
        .with_context(|| format!("writing {}", args.out.display()))?;
    let report_path = args
        .report_out
        .clone()
        .unwrap_or_else(|| sibling_path(&args.out, ".train.json"));
    write_json(&report_path, &report)?;
    Ok(DistillSummary {
        mode: mode_name(&report),
        initial_loss: report.epoch_losses[0],
        final_loss: report.final_loss,
        model_path: args.out.clone(),
        report_path,
    })
}

fn mode_name(report: &TrainReport) -> String {
    match report.mode {
        TrainMode::KlMatch => "kl_match".into(),
        TrainMode::HardLabel => "hard_label".into(),
    }
}

// ---------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Student model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluation tasks JSONL.
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
    pub bins: usize,
    /// Re-draw evaluation labels from the stored posteriors with this seed.
    #[arg(long)]
    pub resample_labels: Option<u64>,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Report CSV path (default `<out stem>.csv`).
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<ReliabilityReport> {
    let mut model_file =
        File::open(&args.model).with_context(|| format!("opening {}", args.model.display()))?;
    let model = StudentModel::load(&mut model_file)
        .with_context(|| format!("reading {}", args.model.display()))?;
    let lines = read_task_lines(&args.eval)?;
    ensure!(
        lines.len() == model.num_features(),
        "{}: {} tasks but the model was trained on {} one-hot features",
        args.eval.display(),
        lines.len(),
        model.num_features()
    );
    let labels = labels_for(&lines, args.resample_labels);
    let preds = lines
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (line, &truth))| {
            let probs = model.forward(&one_hot(i, lines.len()))?;
            ensure!(
                (line.choices as usize) <= probs.len(),
                "task {i}: {} choices exceed the student vocabulary {}",
                line.choices,
                probs.len()
            );
            let candidates: BTreeMap<u32, f64> = (0..line.choices)
                .map(|t| (t, probs[t as usize]))
                .collect();
            Ok(metrics::restrict_and_predict(&candidates, &truth, true)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = metrics::reliability_report(&PredictionSet::new(preds)?, args.bins)?;
    write_json(&args.out, &report)?;
    let csv_path = args
        .csv_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("csv"));
    std::fs::write(&csv_path, report.to_csv())
        .with_context(|| format!("writing {}", csv_path.display()))?;
    Ok(report)
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Reliability report JSON files to compare.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Comparison CSV output.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub ece: f64,
    pub accuracy: f64,
    pub trust: f64,
}

/// Loads the named reports and sorts rows by trust, descending.
pub fn cmd_report(args: &ReportArgs) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for path in &args.inputs {
        let mut text = String::new();
        File::open(path)
            .with_context(|| format!("opening {}", path.display()))?
            .read_to_string(&mut text)?;
        let report: ReliabilityReport = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        rows.push(ComparisonRow {
            method: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            ece: report.ece,
            accuracy: report.accuracy,
            trust: report.trust,
        });
    }
    rows.sort_by(|a, b| b.trust.partial_cmp(&a.trust).expect("finite trust"));
    if let Some(csv_path) = &args.csv_out {
        let mut csv = String::from("method,ece,accuracy,trust\n");
        for row in &rows {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                row.method, row.ece, row.accuracy, row.trust
            ));
        }
        std::fs::write(csv_path, csv)
            .with_context(|| format!("writing {}", csv_path.display()))?;
    }
    Ok(rows)
}

/// Text table with the metrics scaled x100 for display.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.method.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = format!("{:<width$}  {:>7}  {:>7}  {:>7}\n", "method", "ece", "acc", "trust");
    for row in rows {
        out.push_str(&format!(
            "{:<width$}  {:>7.1}  {:>7.1}  {:>7.1}\n",
            row.method,
            row.ece * 100.0,
            row.accuracy * 100.0,
            row.trust * 100.0
        ));
    }
    out
}

// ---------------------------------------------------------------------
// demo
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    /// Master seed; task generation, label draws and student init all
    /// derive from it.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub tasks: usize,
    #[arg(long, default_value_t = 4)]
    pub choices: u32,
    #[arg(long, default_value_t = 3.0)]
    pub sharpen: f64,
    #[arg(long, default_value_t = 5)]
    pub k: u16,
    #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 5000)]
    pub epochs: usize,
    #[arg(long, default_value_t = recalibrate::DEFAULT_SHIFT_DELTA)]
    pub floor: f64,
    /// Directory for every artifact the pipeline emits.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub best_c: f64,
    pub teacher_ece: f64,
    /// Rows in pipeline order: recalibrated distillation, plain
    /// distillation, hard-label fine-tuning.
    pub rows: Vec<ComparisonRow>,
}

/// Runs the whole pipeline plus the two baselines on one synthetic corpus:
/// extract -> grid-searched temperature scaling -> KL distillation ->
/// evaluation, against plain KL distillation and hard-label fine-tuning.
///
/// Training uses the stored ground truths; temperature selection and
/// evaluation use labels re-drawn from the same posteriors with seeds
/// derived from `--seed`, so memorizing the training labels does not pay.
pub fn cmd_demo(args: &DemoArgs) -> Result<DemoSummary> {
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let path = |name: &str| args.out.join(name);
    let val_seed = derive_seed(args.seed, 1);
    let eval_seed = derive_seed(args.seed, 2);
    let student_seed = derive_seed(args.seed, 3);

    let extract = cmd_extract(&ExtractArgs {
        seed: args.seed,
        tasks: args.tasks,
        choices: args.choices,
        sharpen: args.sharpen,
        k: args.k,
        concentration: args.concentration,
        out: path("teacher.knw"),
        tasks_out: Some(path("tasks.jsonl")),
    })?;

    let recalibrated = cmd_recalibrate(&RecalibrateArgs {
        knowledge: extract.knowledge_path.clone(),
        validation: extract.tasks_path.clone(),
        method: Method::Ts,
        delta: 0.1,
        bins: args.bins,
        resample_labels: Some(val_seed),
        out: path("teacher_ts.knw"),
        grid_out: Some(path("grid.json")),
    })?;
    let best_c = recalibrated.best_c.expect("ts always selects a temperature");

    let distill_args = |knowledge: PathBuf, mode: ModeArg, out: &str| DistillArgs {
        knowledge,
        tasks: extract.tasks_path.clone(),
        mode,
        lr: args.lr,
        epochs: args.epochs,
        floor: args.floor,
        seed: student_seed,
        check_gradients: false,
        out: path(out),
        report_out: None,
    };
    cmd_distill(&distill_args(
        path("teacher_ts.knw"),
        ModeArg::KlMatch,
        "student_ts.bin",
    ))?;
    cmd_distill(&distill_args(
        extract.knowledge_path.clone(),
        ModeArg::KlMatch,
        "student_plain.bin",
    ))?;
    cmd_distill(&distill_args(
        extract.knowledge_path.clone(),
        ModeArg::HardLabel,
        "student_hard.bin",
    ))?;

    let mut rows = Vec::new();
    for (model, name) in [
        ("student_ts.bin", "distill_ts"),
        ("student_plain.bin", "distill_plain"),
        ("student_hard.bin", "hard_label"),
    ] {
        let report = cmd_evaluate(&EvaluateArgs {
            model: path(model),
            eval: extract.tasks_path.clone(),
            bins: args.bins,
            resample_labels: Some(eval_seed),
            out: path(&format!("{name}.report.json")),
            csv_out: Some(path(&format!("{name}.report.csv"))),
        })?;
        rows.push(ComparisonRow {
            method: name.into(),
            ece: report.ece,
            accuracy: report.accuracy,
            trust: report.trust,
        });
    }

    let mut csv = String::from("method,ece,accuracy,trust\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.method, row.ece, row.accuracy, row.trust
        ));
    }
    let comparison_path = path("comparison.csv");
    std::fs::write(&comparison_path, csv)
        .with_context(|| format!("writing {}", comparison_path.display()))?;

    Ok(DemoSummary {
        best_c,
        teacher_ece: recalibrated.input_ece,
        rows,
    })
}
