//! Subcommand contracts: determinism, file-format arithmetic, error
//! surfaces, and the JSON/CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

use trustdistill::knowledge;
use trustdistill::metrics::ReliabilityReport;
use trustdistill_cli::{
    cmd_distill, cmd_evaluate, cmd_extract, cmd_recalibrate, cmd_report, DistillArgs,
    EvaluateArgs, ExtractArgs, Method, ModeArg, RecalibrateArgs, ReportArgs,
};

fn extract_args(dir: &Path, tasks: usize, sharpen: f64, seed: u64) -> ExtractArgs {
    ExtractArgs {
        seed,
        tasks,
        choices: 4,
        sharpen,
        k: 5,
        concentration: 1.0,
        out: dir.join("teacher.knw"),
        tasks_out: None,
    }
}

#[test]
fn extract_writes_header_plus_stride_exactly() {
    let dir = TempDir::new().unwrap();
    let summary = cmd_extract(&extract_args(dir.path(), 500, 3.0, 42)).unwrap();
    assert_eq!(summary.record_count, 500);
    let bytes = fs::metadata(&summary.knowledge_path).unwrap().len();
    assert_eq!(bytes, knowledge::HEADER_LEN + 500 * (8 + 8 * 5));
    assert_eq!(bytes, summary.bytes_written);
    assert_eq!(
        summary.tasks_path.file_name().unwrap(),
        "teacher.tasks.jsonl"
    );
}

#[test]
fn extract_is_byte_deterministic() {
    let dir_a = TempDir::new().unwrap();
    let dir_b = TempDir::new().unwrap();
    let a = cmd_extract(&extract_args(dir_a.path(), 100, 2.0, 7)).unwrap();
    let b = cmd_extract(&extract_args(dir_b.path(), 100, 2.0, 7)).unwrap();
    assert_eq!(
        fs::read(&a.knowledge_path).unwrap(),
        fs::read(&b.knowledge_path).unwrap()
    );
    assert_eq!(
        fs::read(&a.tasks_path).unwrap(),
        fs::read(&b.tasks_path).unwrap()
    );
}

#[test]
fn extract_rejects_empty_dataset() {
    let dir = TempDir::new().unwrap();
    let err = cmd_extract(&extract_args(dir.path(), 0, 1.0, 0)).unwrap_err();
    assert!(err.to_string().contains("empty dataset"), "{err}");
}

fn recalibrate_args(dir: &Path, method: Method, delta: f64) -> RecalibrateArgs {
    RecalibrateArgs {
        knowledge: dir.join("teacher.knw"),
        validation: dir.join("teacher.tasks.jsonl"),
        method,
        delta,
        bins: 10,
        resample_labels: Some(991),
        out: dir.join("recal.knw"),
        grid_out: None,
    }
}

#[test]
fn recalibrate_ls_zero_delta_is_identity() {
    let dir = TempDir::new().unwrap();
    cmd_extract(&extract_args(dir.path(), 60, 3.0, 11)).unwrap();
    let summary = cmd_recalibrate(&recalibrate_args(dir.path(), Method::Ls, 0.0)).unwrap();
    assert_eq!(summary.rank_flips, 0);
    let input = knowledge::read_knowledge(fs::File::open(dir.path().join("teacher.knw")).unwrap())
        .unwrap();
    let output = knowledge::read_knowledge(fs::File::open(&summary.output_path).unwrap()).unwrap();
    assert_eq!(input.records, output.records);
    assert_eq!(summary.input_ece, summary.output_ece);
}

#[test]
fn recalibrate_ts_lowers_validation_ece_and_writes_grid() {
    let dir = TempDir::new().unwrap();
    cmd_extract(&extract_args(dir.path(), 400, 3.0, 13)).unwrap();
    let summary = cmd_recalibrate(&recalibrate_args(dir.path(), Method::Ts, 0.1)).unwrap();
    assert!(
        summary.output_ece < summary.input_ece,
        "ece {} -> {}",
        summary.input_ece,
        summary.output_ece
    );
    let best_c = summary.best_c.unwrap();
    assert!(best_c > 0.0);
    let grid_path = summary.grid_path.unwrap();
    let grid: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&grid_path).unwrap()).unwrap();
    assert_eq!(grid["coarse_grid"].as_array().unwrap().len(), 10);
    assert!((grid["best_c"].as_f64().unwrap() - best_c).abs() < 1e-12);
}

#[test]
fn recalibrate_rejects_count_mismatch() {
    let dir = TempDir::new().unwrap();
    cmd_extract(&extract_args(dir.path(), 20, 3.0, 5)).unwrap();
    let other = TempDir::new().unwrap();
    cmd_extract(&extract_args(other.path(), 30, 3.0, 5)).unwrap();
    let mut args = recalibrate_args(dir.path(), Method::Ts, 0.1);
    args.validation = other.path().join("teacher.tasks.jsonl");
    let err = cmd_recalibrate(&args).unwrap_err();
    assert!(err.to_string().contains("30 tasks"), "{err}");
}

fn distill_args(dir: &Path, knowledge: &str, mode: ModeArg, out: &str) -> DistillArgs {
    DistillArgs {
        knowledge: dir.join(knowledge),
        tasks: dir.join("teacher.tasks.jsonl"),
        mode,
        lr: 5.0,
        epochs: 600,
        floor: 1e-6,
        seed: 3,
        check_gradients: false,
        out: dir.join(out),
        report_out: None,
    }
}

#[test]
fn distill_converges_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    cmd_extract(&extract_args(dir.path(), 50, 2.0, 17)).unwrap();
    let a = cmd_distill(&distill_args(dir.path(), "teacher.knw", ModeArg::KlMatch, "a.bin")).unwrap();
    let b = cmd_distill(&distill_args(dir.path(), "teacher.knw", ModeArg::KlMatch, "b.bin")).unwrap();
    assert!(a.final_loss < a.initial_loss);
    assert_eq!(a.final_loss, b.final_loss);
    assert_eq!(
        fs::read(dir.path().join("a.bin")).unwrap(),
        fs::read(dir.path().join("b.bin")).unwrap()
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.train.json")).unwrap())
            .unwrap();
    assert_eq!(report["epoch_losses"].as_array().unwrap().len(), 600);
    assert_eq!(report["mode"], "kl_match");
}

#[test]
fn evaluate_trust_equals_accuracy_minus_ece() {
    let dir = TempDir::new().unwrap();
    cmd_extract(&extract_args(dir.path(), 50, 2.0, 19)).unwrap();
    cmd_distill(&distill_args(dir.path(), "teacher.knw", ModeArg::KlMatch, "student.bin")).unwrap();
    let report = cmd_evaluate(&EvaluateArgs {
        model: dir.path().join("student.bin"),
        eval: dir.path().join("teacher.tasks.jsonl"),
        bins: 10,
        resample_labels: None,
        out: dir.path().join("report.json"),
        csv_out: None,
    })
    .unwrap();
    assert_eq!(report.trust, report.accuracy - report.ece);
    assert_eq!(report.total_count(), 50);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    // report JSON parses back to the same metrics
    let parsed: ReliabilityReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(parsed.ece, report.ece);
    assert_eq!(parsed.trust, report.trust);
}

/// Near-deterministic tasks: the KL student reproduces near-one-hot
/// posteriors, so accuracy hits 1.0 and trust approaches it.
#[test]
fn evaluate_perfect_student_on_near_deterministic_tasks() {
    let dir = TempDir::new().unwrap();
    let mut args = extract_args(dir.path(), 50, 1.0, 10);
    args.concentration = 0.01;
    cmd_extract(&args).unwrap();
    let mut dargs = distill_args(dir.path(), "teacher.knw", ModeArg::KlMatch, "student.bin");
    dargs.epochs = 3000;
    cmd_distill(&dargs).unwrap();
    let report = cmd_evaluate(&EvaluateArgs {
        model: dir.path().join("student.bin"),
        eval: dir.path().join("teacher.tasks.jsonl"),
        bins: 10,
        resample_labels: None,
        out: dir.path().join("report.json"),
        csv_out: None,
    })
    .unwrap();
    assert_eq!(report.accuracy, 1.0, "ece {}", report.ece);
    assert!(report.ece < 0.05, "ece {}", report.ece);
    assert!(report.trust > 0.95, "trust {}", report.trust);
}

#[test]
fn evaluate_rejects_dimension_mismatch() {
    let dir = TempDir::new().unwrap();
    cmd_extract(&extract_args(dir.path(), 20, 2.0, 29)).unwrap();
    cmd_distill(&distill_args(dir.path(), "teacher.knw", ModeArg::KlMatch, "student.bin")).unwrap();
    let other = TempDir::new().unwrap();
    cmd_extract(&extract_args(other.path(), 25, 2.0, 29)).unwrap();
    let err = cmd_evaluate(&EvaluateArgs {
        model: dir.path().join("student.bin"),
        eval: other.path().join("teacher.tasks.jsonl"),
        bins: 10,
        resample_labels: None,
        out: dir.path().join("report.json"),
        csv_out: None,
    })
    .unwrap_err();
    assert!(err.to_string().contains("one-hot features"), "{err}");
}

#[test]
fn report_sorts_by_trust_and_round_trips_values() {
    let dir = TempDir::new().unwrap();
    cmd_extract(&extract_args(dir.path(), 40, 3.0, 31)).unwrap();
    cmd_distill(&distill_args(dir.path(), "teacher.knw", ModeArg::KlMatch, "kl.bin")).unwrap();
    cmd_distill(&distill_args(dir.path(), "teacher.knw", ModeArg::HardLabel, "hard.bin")).unwrap();
    let mut reports = Vec::new();
    for name in ["kl", "hard"] {
        let report = cmd_evaluate(&EvaluateArgs {
            model: dir.path().join(format!("{name}.bin")),
            eval: dir.path().join("teacher.tasks.jsonl"),
            bins: 10,
            resample_labels: Some(555),
            out: dir.path().join(format!("{name}.json")),
            csv_out: None,
        })
        .unwrap();
        reports.push((name, report));
    }
    let rows = cmd_report(&ReportArgs {
        inputs: vec![dir.path().join("kl.json"), dir.path().join("hard.json")],
        csv_out: Some(dir.path().join("cmp.csv")),
    })
    .unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].trust >= rows[1].trust);
    for (name, report) in &reports {
        let row = rows.iter().find(|r| &r.method == name).unwrap();
        assert_eq!(row.ece, report.ece);
        assert_eq!(row.trust, report.trust);
    }
    let csv = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert!(csv.starts_with("method,ece,accuracy,trust\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn single_report_yields_single_row() {
    let dir = TempDir::new().unwrap();
    cmd_extract(&extract_args(dir.path(), 30, 2.0, 37)).unwrap();
    cmd_distill(&distill_args(dir.path(), "teacher.knw", ModeArg::KlMatch, "kl.bin")).unwrap();
    cmd_evaluate(&EvaluateArgs {
        model: dir.path().join("kl.bin"),
        eval: dir.path().join("teacher.tasks.jsonl"),
        bins: 10,
        resample_labels: None,
        out: dir.path().join("only.json"),
        csv_out: None,
    })
    .unwrap();
    let rows = cmd_report(&ReportArgs {
        inputs: vec![dir.path().join("only.json")],
        csv_out: None,
    })
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].method, "only");
}

fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_trustdistill"))
}

#[test]
fn binary_runs_the_pipeline_end_to_end() {
    let dir = TempDir::new().unwrap();
    let status = Command::new(binary())
        .args([
            "extract",
            "--seed",
            "42",
            "--tasks",
            "30",
            "--choices",
            "4",
            "--sharpen",
            "2.0",
            "--out",
        ])
        .arg(dir.path().join("t.knw"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("t.knw").exists());
    assert!(dir.path().join("t.tasks.jsonl").exists());
}

#[test]
fn binary_exits_nonzero_on_error() {
    let dir = TempDir::new().unwrap();
    let output = Command::new(binary())
        .args(["extract", "--tasks", "0", "--out"])
        .arg(dir.path().join("t.knw"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("empty dataset"), "{stderr}");

    let output = Command::new(binary())
        .args(["evaluate", "--model", "/nonexistent/model.bin", "--eval", "/nonexistent/tasks.jsonl", "--out", "/tmp/x.json"])
        .output()
        .unwrap();
    assert!(!output.status.success());
}
