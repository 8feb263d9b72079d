use std::fmt::Write;

use super::EvaluationReport;
use crate::error::{Error, Result};
use crate::model::{ActionClass, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Json,
    #[value(name = "markdown", alias = "markdown-table")]
    Markdown,
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Renders reports as pretty JSON or as markdown tables.
///
/// The markdown results table has one row per scorer, one column per partition and an `Avg`
/// column holding the unweighted mean of that row's partition accuracies.
pub fn emit_report(reports: &[EvaluationReport], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::validation("no reports to emit"));
    }
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Markdown => Ok(markdown(reports)),
    }
}

fn markdown(reports: &[EvaluationReport]) -> String {
    let mut out = String::new();
    let partitions: Vec<Partition> = Partition::ALL
        .into_iter()
        .filter(|p| reports.iter().any(|r| r.partitions.contains_key(p)))
        .collect();

    let header: Vec<&str> = partitions.iter().map(|p| p.as_str()).collect();
    let _ = writeln!(out, "| Scorer | {} | Avg |", header.join(" | "));
    let _ = writeln!(out, "|---|{}---|", "---|".repeat(partitions.len()));
    for r in reports {
        let cells: Vec<String> = partitions
            .iter()
            .map(|p| r.partitions.get(p).map_or("-".to_string(), |t| pct(t.accuracy)))
            .collect();
        let accs: Vec<f64> = r.partitions.values().map(|t| t.accuracy).collect();
        let avg = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
        let _ = writeln!(out, "| {} | {} | {} |", r.scorer_name, cells.join(" | "), pct(avg));
    }

    let classes: Vec<ActionClass> = ActionClass::ALL
        .into_iter()
        .filter(|c| reports.iter().any(|r| r.per_class.contains_key(c)))
        .collect();
    if !classes.is_empty() {
        let names: Vec<&str> = classes.iter().map(|c| c.as_str()).collect();
        let _ = writeln!(out, "\n| Scorer | {} |", names.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(classes.len()));
        for r in reports {
            let cells: Vec<String> = classes
                .iter()
                .map(|c| r.per_class.get(c).map_or("-".to_string(), |t| pct(t.accuracy)))
                .collect();
            let _ = writeln!(out, "| {} | {} |", r.scorer_name, cells.join(" | "));
        }
    }

    for r in reports.iter().filter(|r| r.overlap.is_some()) {
        let o = r.overlap.as_ref().unwrap();
        let _ = writeln!(
            out,
            "\n{}: joint {} / union {} of {}, ensemble upper bound {}%",
            r.scorer_name,
            o.joint_correct,
            o.union_correct,
            o.total,
            pct(o.ensemble_upper_bound)
        );
    }
    out
}
