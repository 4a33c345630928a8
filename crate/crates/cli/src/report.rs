//! Report emission: per-cell raw CSVs, cross-seed summary CSVs, per-run
//! step traces, final checkpoints, and a machine-readable `summary.json`.
//!
//! All numbers are written with Rust's shortest round-trip `f64` display,
//! so re-reading a CSV recovers the exact bit pattern and emission is
//! byte-for-byte idempotent for a given aggregate.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::checkpoint;
use crate::error::CliError;
use crate::runner::{aggregate, AggregateReport, ModeSummary, ReportKind};

fn kind_stem(kind: ReportKind) -> &'static str {
    match kind {
        ReportKind::Ablation => "ablation",
        ReportKind::Grid => "grid",
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Escape a free-text CSV field (failure messages can contain anything).
fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn summary_csv(summaries: &[ModeSummary], evaluator_names: &[String]) -> String {
    let mut out = String::from("label");
    for name in evaluator_names {
        let _ = write!(out, ",{name}_mean,{name}_std");
    }
    out.push_str(",overall_mean,seeds_completed\n");
    for s in summaries {
        out.push_str(&s.label);
        for (m, sd) in s.per_evaluator_mean.iter().zip(&s.per_evaluator_std) {
            let _ = write!(out, ",{m},{sd}");
        }
        let _ = writeln!(out, ",{},{}", s.overall_mean, s.seeds_completed);
    }
    out
}

fn cells_csv(report: &AggregateReport) -> String {
    let mut out = String::from("label,seed,status");
    for name in &report.evaluator_names {
        let _ = write!(out, ",{name}");
    }
    out.push_str(",message\n");
    for cell in &report.cells {
        let _ = write!(out, "{},{}", cell.label, cell.seed);
        match (&cell.evaluator_errors, &cell.failure) {
            (Some(errs), None) => {
                out.push_str(",ok");
                for e in errs {
                    let _ = write!(out, ",{e}");
                }
                out.push_str(",\n");
            }
            (_, Some(msg)) => {
                out.push_str(",failed");
                for _ in &report.evaluator_names {
                    out.push(',');
                }
                let _ = writeln!(out, ",{}", csv_quote(msg));
            }
            (None, None) => {
                out.push_str(",failed");
                for _ in &report.evaluator_names {
                    out.push(',');
                }
                out.push_str(",missing result\n");
            }
        }
    }
    out
}

fn steps_csv(report: &auxcal_core::trainer::RunReport) -> String {
    let mut out = String::from(
        "step,cls_loss,reg_loss,alpha_gclb,alpha_srpr,criterion,reg_grad_norm_sq,gstar_dot_greg,noise\n",
    );
    for r in &report.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.cls_loss,
            r.reg_loss,
            r.alpha_gclb,
            r.alpha_srpr,
            r.criterion,
            r.reg_grad_norm_sq,
            r.gstar_dot_greg,
            r.noise_applied as u8,
        );
    }
    out
}

fn evals_csv(report: &auxcal_core::trainer::RunReport, evaluator_names: &[String]) -> String {
    let mut out = String::from("step,val_reg_loss,val_proxy_cls_loss");
    for name in evaluator_names {
        let _ = write!(out, ",val_{name}_cls_loss");
    }
    out.push('\n');
    for r in &report.evals {
        let _ = write!(out, "{},{},{}", r.step, r.val_reg_loss, r.val_proxy_cls_loss);
        for v in &r.val_evaluator_cls_loss {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    kind: ReportKind,
    evaluator_names: &'a [String],
    summaries: &'a [ModeSummary],
    best7_grid_average: Option<f64>,
    cells_total: usize,
    cells_failed: usize,
}

/// Write the full artifact set for one aggregate under `out_dir`:
///
/// ```text
/// <kind>.csv                      cross-seed summary table
/// <kind>_cells.csv                raw per-(label, seed) cells
/// <kind>_summary.json             machine-readable summary
/// runs/<label>_seed<seed>_steps.csv   per-step trace (trained cells)
/// runs/<label>_seed<seed>_evals.csv   periodic validation trace
/// runs/<label>_seed<seed>.ckpt        final enhancer parameters
/// ```
pub fn emit_reports(report: &AggregateReport, out_dir: &Path) -> Result<(), CliError> {
    let stem = kind_stem(report.kind);
    write_file(
        &out_dir.join(format!("{stem}.csv")),
        &summary_csv(&report.summaries, &report.evaluator_names),
    )?;
    write_file(&out_dir.join(format!("{stem}_cells.csv")), &cells_csv(report))?;
    let doc = SummaryDoc {
        kind: report.kind,
        evaluator_names: &report.evaluator_names,
        summaries: &report.summaries,
        best7_grid_average: report.best7_grid_average,
        cells_total: report.cells.len(),
        cells_failed: report.cells.iter().filter(|c| c.failure.is_some()).count(),
    };
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Config(format!("summary serialization: {e}")))?;
    write_file(&out_dir.join(format!("{stem}_summary.json")), &json)?;

    for cell in &report.cells {
        if let Some(run) = &cell.report {
            let base: PathBuf = out_dir.join("runs");
            let tag = format!("{}_seed{}", cell.label, cell.seed);
            write_file(&base.join(format!("{tag}_steps.csv")), &steps_csv(run))?;
            write_file(
                &base.join(format!("{tag}_evals.csv")),
                &evals_csv(run, &report.evaluator_names),
            )?;
            checkpoint::save_checkpoint(&run.final_theta, &base.join(format!("{tag}.ckpt")))?;
        }
    }
    Ok(())
}

/// Parsed row of a `<kind>_cells.csv` file.
pub struct CellRow {
    pub label: String,
    pub seed: u64,
    pub evaluator_errors: Option<Vec<f64>>,
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cur.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' => quoted = true,
            ',' if !quoted => fields.push(core::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Re-read a raw cells CSV and recompute the cross-seed summaries from
/// scratch, in the same label order and summation order as the original
/// aggregation. Emitting and re-aggregating must reproduce the summary
/// table exactly; the acceptance checks rely on this as an independent
/// cross-check of the aggregation path.
pub fn reaggregate(out_dir: &Path, kind: ReportKind) -> Result<Vec<ModeSummary>, CliError> {
    let path = out_dir.join(format!("{}_cells.csv", kind_stem(kind)));
    let display = path.display().to_string();
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(display.clone(), e))?;
    let corrupt =
        |what: String| CliError::Corrupt { path: display.clone(), what };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| corrupt("empty file".into()))?;
    let cols = split_csv_line(header);
    if cols.len() < 4 || cols[0] != "label" || cols[1] != "seed" || cols[2] != "status" {
        return Err(corrupt("unexpected header".into()));
    }
    let n_evaluators = cols.len() - 4;

    let mut rows = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields = split_csv_line(line);
        if fields.len() != cols.len() {
            return Err(corrupt(format!("row {}: wrong field count", i + 2)));
        }
        let label = fields[0].clone();
        let seed: u64 = fields[1]
            .parse()
            .map_err(|e| corrupt(format!("row {}: seed: {e}", i + 2)))?;
        let errors = match fields[2].as_str() {
            "ok" => {
                let vals: Result<Vec<f64>, _> =
                    fields[3..3 + n_evaluators].iter().map(|f| f.parse::<f64>()).collect();
                Some(vals.map_err(|e| corrupt(format!("row {}: value: {e}", i + 2)))?)
            }
            "failed" => None,
            other => return Err(corrupt(format!("row {}: status {other:?}", i + 2))),
        };
        if !labels.contains(&label) {
            labels.push(label.clone());
        }
        rows.push(CellRow { label, seed, evaluator_errors: errors });
    }

    let cells: Vec<crate::runner::CellOutcome> = rows
        .into_iter()
        .map(|r| crate::runner::CellOutcome {
            label: r.label,
            seed: r.seed,
            evaluator_errors: r.evaluator_errors,
            failure: None,
            report: None,
        })
        .collect();
    Ok(aggregate(&cells, &labels, n_evaluators))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::CellOutcome;

    fn sample_report() -> AggregateReport {
        let cells = vec![
            CellOutcome {
                label: "CLSO".into(),
                seed: 1,
                evaluator_errors: Some(vec![0.125, 0.25]),
                failure: None,
                report: None,
            },
            CellOutcome {
                label: "D4AM".into(),
                seed: 1,
                evaluator_errors: Some(vec![0.1, 0.2]),
                failure: None,
                report: None,
            },
            CellOutcome {
                label: "CLSO".into(),
                seed: 2,
                evaluator_errors: Some(vec![0.375, 0.0625]),
                failure: None,
                report: None,
            },
            CellOutcome {
                label: "D4AM".into(),
                seed: 2,
                evaluator_errors: None,
                failure: Some("diverged, alas".into()),
                report: None,
            },
        ];
        let labels = vec!["CLSO".to_string(), "D4AM".to_string()];
        let summaries = aggregate(&cells, &labels, 2);
        AggregateReport {
            kind: ReportKind::Ablation,
            evaluator_names: vec!["EV0".into(), "EV1".into()],
            cells,
            summaries,
            best7_grid_average: None,
        }
    }

    #[test]
    fn emission_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        emit_reports(&report, dir.path()).unwrap();
        let first = fs::read(dir.path().join("ablation.csv")).unwrap();
        let first_cells = fs::read(dir.path().join("ablation_cells.csv")).unwrap();
        let first_json = fs::read(dir.path().join("ablation_summary.json")).unwrap();
        emit_reports(&report, dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("ablation.csv")).unwrap());
        assert_eq!(first_cells, fs::read(dir.path().join("ablation_cells.csv")).unwrap());
        assert_eq!(first_json, fs::read(dir.path().join("ablation_summary.json")).unwrap());
    }

    #[test]
    fn reaggregation_reproduces_summaries_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        emit_reports(&report, dir.path()).unwrap();
        let back = reaggregate(dir.path(), ReportKind::Ablation).unwrap();
        assert_eq!(back, report.summaries);
    }

    #[test]
    fn failure_messages_with_commas_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        emit_reports(&sample_report(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("ablation_cells.csv")).unwrap();
        assert!(text.contains("\"diverged, alas\""));
        // Quoted field must not break the column structure on re-read.
        assert!(reaggregate(dir.path(), ReportKind::Ablation).is_ok());
    }

    #[test]
    fn csv_field_splitting_handles_quotes() {
        assert_eq!(split_csv_line("a,b,c"), vec!["a", "b", "c"]);
        assert_eq!(split_csv_line("a,\"b, c\",d"), vec!["a", "b, c", "d"]);
        assert_eq!(split_csv_line("a,\"he said \"\"hi\"\"\",z"), vec!["a", "he said \"hi\"", "z"]);
        assert_eq!(split_csv_line("a,,c"), vec!["a", "", "c"]);
    }
}
