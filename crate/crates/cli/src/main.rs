use anyhow::Result;
use clap::{Parser, Subcommand};

use trustdistill_cli::{
    cmd_demo, cmd_distill, cmd_evaluate, cmd_extract, cmd_recalibrate, cmd_report,
    render_comparison, DemoArgs, DistillArgs, EvaluateArgs, ExtractArgs, RecalibrateArgs,
    ReportArgs,
};

/// Extract top-k teacher knowledge, re-calibrate it, distill a student,
/// and evaluate trustworthiness (accuracy, calibration error, trust).
#[derive(Parser)]
#[command(name = "trustdistill", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic tasks and write the teacher's top-k knowledge.
    Extract(ExtractArgs),
    /// Re-calibrate a knowledge file by label smoothing or grid-searched
    /// temperature scaling.
    Recalibrate(RecalibrateArgs),
    /// Train a student model from a knowledge file.
    Distill(DistillArgs),
    /// Evaluate a student model and emit a reliability report.
    Evaluate(EvaluateArgs),
    /// Compare reliability reports in a trust-sorted table.
    Report(ReportArgs),
    /// Run the full pipeline and both baselines on one synthetic corpus.
    Demo(DemoArgs),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Extract(args) => {
            let summary = cmd_extract(&args)?;
            println!(
                "wrote {} records ({} bytes, vocab {}) to {}",
                summary.record_count,
                summary.bytes_written,
                summary.vocab_size,
                summary.knowledge_path.display()
            );
            println!("tasks: {}", summary.tasks_path.display());
        }
        Command::Recalibrate(args) => {
            let summary = cmd_recalibrate(&args)?;
            match summary.best_c {
                Some(c) => println!(
                    "temperature {c:.3}: validation ece {:.4} -> {:.4}",
                    summary.input_ece, summary.output_ece
                ),
                None => println!(
                    "label smoothing: validation ece {:.4} -> {:.4} ({} rank flips)",
                    summary.input_ece, summary.output_ece, summary.rank_flips
                ),
            }
            println!("wrote {}", summary.output_path.display());
            if let Some(grid) = &summary.grid_path {
                println!("grid curves: {}", grid.display());
            }
        }
        Command::Distill(args) => {
            let summary = cmd_distill(&args)?;
            println!(
                "{}: loss {:.6} -> {:.6}",
                summary.mode, summary.initial_loss, summary.final_loss
            );
            println!("model: {}", summary.model_path.display());
            println!("report: {}", summary.report_path.display());
        }
        Command::Evaluate(args) => {
            let report = cmd_evaluate(&args)?;
            println!(
                "n {} | ece {:.4} | acc {:.4} | trust {:.4}",
                report.total_count(),
                report.ece,
                report.accuracy,
                report.trust
            );
            println!("report: {}", args.out.display());
        }
        Command::Report(args) => {
            let rows = cmd_report(&args)?;
            print!("{}", render_comparison(&rows));
        }
        Command::Demo(args) => {
            let summary = cmd_demo(&args)?;
            println!(
                "teacher validation ece {:.4}; selected temperature {:.3}",
                summary.teacher_ece, summary.best_c
            );
            let mut sorted = summary.rows.clone();
            sorted.sort_by(|a, b| b.trust.partial_cmp(&a.trust).expect("finite trust"));
            print!("{}", render_comparison(&sorted));
            println!("artifacts in {}", args.out.display());
        }
    }
    Ok(())
}
