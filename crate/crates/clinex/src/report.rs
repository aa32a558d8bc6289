//! Result artifacts: the per-model macro-F1 feature grid, full metric
//! tables, sensitivity/specificity scatter data, and missing-count tables.
//! Every emitter is a byte-deterministic function of its input tables:
//! stable ordering, fixed rounding, no timestamps in bodies.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::FeatureSchema;
use crate::metrics::{fmt3, fmt_summary, round3, MetricKind, MetricTable, SUMMARY_ROW_LABEL};
use crate::pipeline::PredictionSet;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("metric tables disagree on the feature schema")]
    SchemaMismatch,
    #[error("no metric tables to report")]
    EmptyReport,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Markdown and CSV renderings of the same grid; numbers are identical
/// after rounding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTableArtifact {
    pub markdown: String,
    pub csv: String,
}

/// Emits the per-model × per-feature macro-F1 grid: 13 feature rows in
/// schema order plus the median [IQR] summary row. Markdown bolds each
/// row's maximum (all maxima on ties).
pub fn emit_feature_table(
    tables: &[&MetricTable],
    schema: &FeatureSchema,
) -> Result<FeatureTableArtifact, ReportError> {
    if tables.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let schema_digest = schema.digest();
    if tables.iter().any(|t| t.schema_digest != schema_digest) {
        return Err(ReportError::SchemaMismatch);
    }

    let mut markdown = String::new();
    markdown.push_str("| Feature |");
    for table in tables {
        markdown.push_str(&format!(" {} |", table.model_label));
    }
    markdown.push('\n');
    markdown.push_str("| --- |");
    for _ in tables {
        markdown.push_str(" --- |");
    }
    markdown.push('\n');

    let mut csv_writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["feature".to_string()];
    header.extend(tables.iter().map(|t| t.model_label.clone()));
    csv_writer.write_record(&header).expect("csv write");

    for (f, feature) in schema.features.iter().enumerate() {
        let values: Vec<Option<f64>> = tables.iter().map(|t| t.rows[f].macro_f1.value).collect();
        let row_max = values
            .iter()
            .flatten()
            .map(|&v| round3(v))
            .fold(f64::NEG_INFINITY, f64::max);

        markdown.push_str(&format!("| {} |", feature.display_name));
        let mut csv_row = vec![feature.canonical_id.clone()];
        for value in &values {
            let cell = fmt3(*value, "—");
            let bold = matches!(value, Some(v) if round3(*v) == row_max);
            if bold {
                markdown.push_str(&format!(" **{cell}** |"));
            } else {
                markdown.push_str(&format!(" {cell} |"));
            }
            csv_row.push(fmt3(*value, ""));
        }
        markdown.push('\n');
        csv_writer.write_record(&csv_row).expect("csv write");
    }

    // summary row; the maximum median is bolded
    let summaries: Vec<Option<_>> = tables
        .iter()
        .map(|t| t.summary_for(MetricKind::MacroF1).copied())
        .collect();
    let max_median = summaries
        .iter()
        .flatten()
        .map(|s| round3(s.median))
        .fold(f64::NEG_INFINITY, f64::max);
    markdown.push_str(&format!("| {SUMMARY_ROW_LABEL} |"));
    let mut csv_row = vec![SUMMARY_ROW_LABEL.to_string()];
    for summary in &summaries {
        match summary {
            Some(s) => {
                let median = format!("{:.3}", round3(s.median));
                let iqr = format!("[{:.3}, {:.3}]", round3(s.q1), round3(s.q3));
                if round3(s.median) == max_median {
                    markdown.push_str(&format!(" **{median}** {iqr} |"));
                } else {
                    markdown.push_str(&format!(" {median} {iqr} |"));
                }
                csv_row.push(fmt_summary(s));
            }
            None => {
                markdown.push_str(" — |");
                csv_row.push(String::new());
            }
        }
    }
    markdown.push('\n');
    csv_writer.write_record(&csv_row).expect("csv write");

    let csv = String::from_utf8(csv_writer.into_inner().expect("csv flush")).expect("csv utf8");
    Ok(FeatureTableArtifact { markdown, csv })
}

/// Emits per-feature (sensitivity, specificity) pairs as CSV: 13 rows,
/// nulls as empty cells.
pub fn emit_scatter_data(table: &MetricTable) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["feature_id", "sensitivity", "specificity"])
        .expect("csv write");
    for row in &table.rows {
        writer
            .write_record([
                row.feature_id.clone(),
                fmt3(row.sensitivity.value, ""),
                fmt3(row.specificity.value, ""),
            ])
            .expect("csv write");
    }
    String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Emits missing counts per (model, feature): field-granular columns plus
/// the per-model totals at both granularities.
pub fn emit_missing_table(sets: &[&PredictionSet], schema: &FeatureSchema) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(schema.feature_ids());
    header.push("total_missing_fields".to_string());
    header.push("transcripts_any_missing".to_string());
    writer.write_record(&header).expect("csv write");

    for set in sets {
        let counts = set.field_missing_counts(schema.len());
        let mut row = vec![set.model_label.clone()];
        row.extend(counts.iter().map(u64::to_string));
        row.push(counts.iter().sum::<u64>().to_string());
        row.push(set.transcript_any_missing().to_string());
        writer.write_record(&row).expect("csv write");
    }
    String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Filesystem-safe version of a model label: lowercased, with
/// non-alphanumeric runs collapsed to underscores.
pub fn sanitize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut last_underscore = true;
    for ch in label.to_lowercase().chars() {
        if ch.is_ascii_alphanumeric() || ch == '.' || ch == '-' {
            out.push(ch);
            last_underscore = false;
        } else if !last_underscore {
            out.push('_');
            last_underscore = true;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

fn write_file(path: &Path, content: &str) -> Result<(), ReportError> {
    fs::write(path, content).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the full report bundle under `out_dir`: table1.{md,csv},
/// metrics_<model>.csv, fig3_<model>.csv, and missing.csv. Returns the
/// written paths.
pub fn write_reports(
    out_dir: &Path,
    schema: &FeatureSchema,
    tables: &[&MetricTable],
    sets: &[&PredictionSet],
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();

    let grid = emit_feature_table(tables, schema)?;
    let md_path = out_dir.join("table1.md");
    write_file(&md_path, &grid.markdown)?;
    written.push(md_path);
    let csv_path = out_dir.join("table1.csv");
    write_file(&csv_path, &grid.csv)?;
    written.push(csv_path);

    for table in tables {
        let label = sanitize_label(&table.model_label);
        let metrics_path = out_dir.join(format!("metrics_{label}.csv"));
        write_file(&metrics_path, &table.to_csv())?;
        written.push(metrics_path);
        let fig3_path = out_dir.join(format!("fig3_{label}.csv"));
        write_file(&fig3_path, &emit_scatter_data(table))?;
        written.push(fig3_path);
    }

    let missing_path = out_dir.join("missing.csv");
    write_file(&missing_path, &emit_missing_table(sets, schema))?;
    written.push(missing_path);

    Ok(written)
}
