//! Confusion matrices and the six evaluation metrics, per (model, feature),
//! plus median/IQR aggregation across features.
//!
//! Degenerate denominators never raise: ratio metrics go null, MCC and
//! per-class F1 fall back to 0.0 with a degeneracy flag. Imbalanced features
//! make zero cells routine and the analysis must proceed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationTable, FeatureSchema};
use crate::parser::BinaryFeatureVector;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction and truth vectors have different lengths ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no values to summarize")]
    EmptyInput,
    #[error("prediction references unknown transcript {0:?}")]
    UnknownTranscript(String),
}

/// TP/TN/FP/FN counts for one (model, feature) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tpc: u64,
    pub tnc: u64,
    pub fpc: u64,
    pub fnc: u64,
}

impl ConfusionMatrix {
    pub fn from_counts(tpc: u64, tnc: u64, fpc: u64, fnc: u64) -> Self {
        ConfusionMatrix { tpc, tnc, fpc, fnc }
    }

    pub fn total(&self) -> u64 {
        self.tpc + self.tnc + self.fpc + self.fnc
    }
}

/// Tallies predictions against ground truth element-wise.
pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<ConfusionMatrix, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => cm.tpc += 1,
            (false, false) => cm.tnc += 1,
            (true, false) => cm.fpc += 1,
            (false, true) => cm.fnc += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Sensitivity,
    Specificity,
    Precision,
    MacroF1,
    Mcc,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Sensitivity => "sensitivity",
            MetricKind::Specificity => "specificity",
            MetricKind::Precision => "precision",
            MetricKind::MacroF1 => "macro_f1",
            MetricKind::Mcc => "mcc",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Column order used everywhere metrics are reported.
pub const METRIC_ORDER: [MetricKind; 6] = [
    MetricKind::Accuracy,
    MetricKind::Sensitivity,
    MetricKind::Specificity,
    MetricKind::Precision,
    MetricKind::MacroF1,
    MetricKind::Mcc,
];

/// One metric evaluation. `value` is None when the metric is undefined for
/// the matrix (zero denominator on a ratio); `degenerate` marks the 0.0
/// fallback convention for MCC and per-class F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl MetricValue {
    fn defined(kind: MetricKind, value: f64) -> Self {
        MetricValue {
            kind,
            value: Some(value),
            degenerate: false,
        }
    }

    fn null(kind: MetricKind) -> Self {
        MetricValue {
            kind,
            value: None,
            degenerate: false,
        }
    }
}

fn ratio(kind: MetricKind, num: u64, den: u64) -> MetricValue {
    if den == 0 {
        MetricValue::null(kind)
    } else {
        MetricValue::defined(kind, num as f64 / den as f64)
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> MetricValue {
    ratio(MetricKind::Accuracy, cm.tpc + cm.tnc, cm.total())
}

pub fn sensitivity(cm: &ConfusionMatrix) -> MetricValue {
    ratio(MetricKind::Sensitivity, cm.tpc, cm.tpc + cm.fnc)
}

pub fn specificity(cm: &ConfusionMatrix) -> MetricValue {
    ratio(MetricKind::Specificity, cm.tnc, cm.tnc + cm.fpc)
}

pub fn precision(cm: &ConfusionMatrix) -> MetricValue {
    ratio(MetricKind::Precision, cm.tpc, cm.tpc + cm.fpc)
}

/// Unweighted mean of the positive-class F1 (2TP/(2TP+FP+FN)) and the
/// negative-class F1 (2TN/(2TN+FN+FP)). A class F1 with a zero denominator
/// contributes 0 and sets the degeneracy flag.
pub fn macro_f1(cm: &ConfusionMatrix) -> MetricValue {
    let mut degenerate = false;
    let mut class_f1 = |two_hits: u64, den: u64| -> f64 {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            two_hits as f64 / den as f64
        }
    };
    let pos = class_f1(2 * cm.tpc, 2 * cm.tpc + cm.fpc + cm.fnc);
    let neg = class_f1(2 * cm.tnc, 2 * cm.tnc + cm.fnc + cm.fpc);
    MetricValue {
        kind: MetricKind::MacroF1,
        value: Some((pos + neg) / 2.0),
        degenerate,
    }
}

/// Matthews correlation coefficient. The numerator is computed in exact
/// integer arithmetic; denominator factors are multiplied in f64 before the
/// square root. Returns 0.0 with the degeneracy flag when any denominator
/// factor is zero.
pub fn mcc(cm: &ConfusionMatrix) -> MetricValue {
    let factors = [
        cm.tpc + cm.fpc,
        cm.tpc + cm.fnc,
        cm.tnc + cm.fpc,
        cm.tnc + cm.fnc,
    ];
    if factors.contains(&0) {
        return MetricValue {
            kind: MetricKind::Mcc,
            value: Some(0.0),
            degenerate: true,
        };
    }
    let num = cm.tpc as i128 * cm.tnc as i128 - cm.fpc as i128 * cm.fnc as i128;
    let den = factors.iter().map(|&f| f as f64).product::<f64>().sqrt();
    let value = (num as f64 / den).clamp(-1.0, 1.0);
    MetricValue::defined(MetricKind::Mcc, value)
}

/// Median plus first and third quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub n: usize,
}

/// Quantile by linear interpolation at rank (n−1)·q over the sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and quartiles of the given values (nulls excluded by the caller).
pub fn summarize_median_iqr(values: &[f64]) -> Result<Summary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    Ok(Summary {
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
        n: sorted.len(),
    })
}

/// Rounds half-to-even at 3 decimals; display precision for all reports.
pub fn round3(v: f64) -> f64 {
    (v * 1000.0).round_ties_even() / 1000.0
}

/// Formats a value at display precision; None renders as the given
/// placeholder.
pub fn fmt3(v: Option<f64>, null_as: &str) -> String {
    match v {
        Some(v) => format!("{:.3}", round3(v)),
        None => null_as.to_string(),
    }
}

/// Formats a summary as `median [q1, q3]` at display precision.
pub fn fmt_summary(s: &Summary) -> String {
    format!(
        "{:.3} [{:.3}, {:.3}]",
        round3(s.median),
        round3(s.q1),
        round3(s.q3)
    )
}

/// Metric values for one feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub feature_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    pub accuracy: MetricValue,
    pub sensitivity: MetricValue,
    pub specificity: MetricValue,
    pub precision: MetricValue,
    pub macro_f1: MetricValue,
    pub mcc: MetricValue,
    /// Field-granular missing count for this feature.
    pub missing_fields: u64,
}

impl FeatureRow {
    pub fn metric(&self, kind: MetricKind) -> &MetricValue {
        match kind {
            MetricKind::Accuracy => &self.accuracy,
            MetricKind::Sensitivity => &self.sensitivity,
            MetricKind::Specificity => &self.specificity,
            MetricKind::Precision => &self.precision,
            MetricKind::MacroF1 => &self.macro_f1,
            MetricKind::Mcc => &self.mcc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub kind: MetricKind,
    /// None when every per-feature value of this metric was null.
    pub summary: Option<Summary>,
}

/// Per-feature metric values for one run plus the median [IQR] summary row
/// and missing counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub model_label: String,
    pub schema_digest: String,
    pub rows: Vec<FeatureRow>,
    pub summaries: Vec<MetricSummary>,
    /// Transcript-granular missing count: transcripts with ≥1 missing field.
    pub transcript_any_missing: u64,
    pub evaluated_transcripts: u64,
}

pub const SUMMARY_ROW_LABEL: &str = "Median [IQR1, IQR3]";

impl MetricTable {
    /// Builds a table from externally supplied values of a single metric
    /// (one per feature, None for undefined). Used to aggregate published
    /// per-feature results without re-running inference.
    pub fn from_single_metric(
        model_label: &str,
        schema: &FeatureSchema,
        kind: MetricKind,
        values: &[Option<f64>],
    ) -> Self {
        assert_eq!(values.len(), schema.len());
        let rows = schema
            .features
            .iter()
            .zip(values)
            .map(|(feature, &value)| {
                let mut row = FeatureRow {
                    feature_id: feature.canonical_id.clone(),
                    confusion: None,
                    accuracy: MetricValue::null(MetricKind::Accuracy),
                    sensitivity: MetricValue::null(MetricKind::Sensitivity),
                    specificity: MetricValue::null(MetricKind::Specificity),
                    precision: MetricValue::null(MetricKind::Precision),
                    macro_f1: MetricValue::null(MetricKind::MacroF1),
                    mcc: MetricValue::null(MetricKind::Mcc),
                    missing_fields: 0,
                };
                let slot = match kind {
                    MetricKind::Accuracy => &mut row.accuracy,
                    MetricKind::Sensitivity => &mut row.sensitivity,
                    MetricKind::Specificity => &mut row.specificity,
                    MetricKind::Precision => &mut row.precision,
                    MetricKind::MacroF1 => &mut row.macro_f1,
                    MetricKind::Mcc => &mut row.mcc,
                };
                slot.value = value;
                row
            })
            .collect();
        let mut table = MetricTable {
            model_label: model_label.to_string(),
            schema_digest: schema.digest(),
            rows,
            summaries: Vec::new(),
            transcript_any_missing: 0,
            evaluated_transcripts: 0,
        };
        table.summaries = compute_summaries(&table.rows);
        table
    }

    pub fn summary_for(&self, kind: MetricKind) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.kind == kind)
            .and_then(|s| s.summary.as_ref())
    }

    pub fn total_missing_fields(&self) -> u64 {
        self.rows.iter().map(|r| r.missing_fields).sum()
    }

    /// CSV serialization: 13 feature rows then the summary row, columns =
    /// metrics + missing counts. Nulls serialize as empty cells.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["feature".to_string()];
        header.extend(METRIC_ORDER.iter().map(|k| k.as_str().to_string()));
        header.push("missing_fields".to_string());
        writer.write_record(&header).expect("csv write");
        for row in &self.rows {
            let mut record = vec![row.feature_id.clone()];
            record.extend(METRIC_ORDER.iter().map(|&k| fmt3(row.metric(k).value, "")));
            record.push(row.missing_fields.to_string());
            writer.write_record(&record).expect("csv write");
        }
        let mut summary_row = vec![SUMMARY_ROW_LABEL.to_string()];
        summary_row.extend(METRIC_ORDER.iter().map(|&k| {
            self.summary_for(k)
                .map(fmt_summary)
                .unwrap_or_default()
        }));
        summary_row.push(self.total_missing_fields().to_string());
        writer.write_record(&summary_row).expect("csv write");
        String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric table serializes")
    }

    pub fn from_json_str(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}

fn compute_summaries(rows: &[FeatureRow]) -> Vec<MetricSummary> {
    METRIC_ORDER
        .iter()
        .map(|&kind| {
            let values: Vec<f64> = rows.iter().filter_map(|r| r.metric(kind).value).collect();
            MetricSummary {
                kind,
                summary: summarize_median_iqr(&values).ok(),
            }
        })
        .collect()
}

/// Evaluates one run: per feature, the confusion matrix over all transcripts
/// and all six metrics, plus the cross-feature summary rows and the missing
/// tallies carried over from the resolution masks.
pub fn evaluate_run(
    predictions: &[BinaryFeatureVector],
    truth: &AnnotationTable,
    schema: &FeatureSchema,
    model_label: &str,
) -> Result<MetricTable, MetricsError> {
    let mut ordered: Vec<&BinaryFeatureVector> = predictions.iter().collect();
    ordered.sort_by(|a, b| a.transcript_id.cmp(&b.transcript_id));
    for p in &ordered {
        if truth.get(&p.transcript_id).is_none() {
            return Err(MetricsError::UnknownTranscript(p.transcript_id.clone()));
        }
    }

    let mut rows = Vec::with_capacity(schema.len());
    for (f, feature) in schema.features.iter().enumerate() {
        let pred: Vec<bool> = ordered.iter().map(|p| p.values[f]).collect();
        let truth_col: Vec<bool> = ordered
            .iter()
            .map(|p| truth.get(&p.transcript_id).expect("checked above")[f])
            .collect();
        let cm = confusion(&pred, &truth_col)?;
        let missing_fields = ordered.iter().filter(|p| p.missing_mask[f]).count() as u64;
        rows.push(FeatureRow {
            feature_id: feature.canonical_id.clone(),
            confusion: Some(cm),
            accuracy: accuracy(&cm),
            sensitivity: sensitivity(&cm),
            specificity: specificity(&cm),
            precision: precision(&cm),
            macro_f1: macro_f1(&cm),
            mcc: mcc(&cm),
            missing_fields,
        });
    }

    let summaries = compute_summaries(&rows);
    let transcript_any_missing = ordered.iter().filter(|p| p.any_missing()).count() as u64;
    Ok(MetricTable {
        model_label: model_label.to_string(),
        schema_digest: schema.digest(),
        rows,
        summaries,
        transcript_any_missing,
        evaluated_transcripts: ordered.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parser::BinaryFeatureVector;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn cm(tpc: u64, tnc: u64, fpc: u64, fnc: u64) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(tpc, tnc, fpc, fnc)
    }

    #[test]
    fn confusion_perfect_agreement() {
        let m = confusion(&[true, true, false], &[true, true, false]).unwrap();
        assert_eq!(m, cm(2, 1, 0, 0));
    }

    #[test]
    fn confusion_all_false_predictions() {
        let m = confusion(&[false, false], &[true, false]).unwrap();
        assert_eq!(m, cm(0, 1, 0, 1));
    }

    #[test]
    fn confusion_length_mismatch() {
        assert!(matches!(
            confusion(&[true], &[true, false]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn confusion_matches_elementwise_tally() {
        // deterministic pseudo-random 100-element pair
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state >> 62
        };
        let pred: Vec<bool> = (0..100).map(|_| next() % 2 == 0).collect();
        let truth: Vec<bool> = (0..100).map(|_| next() % 2 == 0).collect();
        let m = confusion(&pred, &truth).unwrap();
        let (mut tp, mut tn, mut fp, mut fnc) = (0, 0, 0, 0);
        for i in 0..100 {
            match (pred[i], truth[i]) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fnc += 1,
            }
        }
        assert_eq!(m, cm(tp, tn, fp, fnc));
        assert_eq!(m.total(), 100);
    }

    #[test]
    fn ratio_metric_examples() {
        let m = cm(9, 0, 0, 1);
        assert_eq!(sensitivity(&m).value, Some(0.9));

        let m = cm(2, 3, 1, 1);
        let acc = accuracy(&m).value.unwrap();
        assert!((acc - 5.0 / 7.0).abs() < 1e-15);
        let prec = precision(&m).value.unwrap();
        assert!((prec - 2.0 / 3.0).abs() < 1e-15);

        let m = cm(0, 5, 0, 2);
        assert_eq!(precision(&m).value, None);
    }

    #[test]
    fn macro_f1_examples() {
        let perfect = cm(5, 5, 0, 0);
        assert_eq!(macro_f1(&perfect).value, Some(1.0));

        let m = cm(2, 3, 1, 1);
        let v = macro_f1(&m).value.unwrap();
        let expected = (2.0 / 3.0 + 0.75) / 2.0;
        assert!((v - expected).abs() < 1e-12);
        assert!((round3(v) - 0.708).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_flags_zero_denominator_class() {
        // no positives anywhere: positive-class F1 degenerates to 0
        let m = cm(0, 7, 0, 0);
        let v = macro_f1(&m);
        assert!(v.degenerate);
        assert_eq!(v.value, Some(0.5));
    }

    #[test]
    fn mcc_examples() {
        assert_eq!(mcc(&cm(5, 5, 0, 0)).value, Some(1.0));

        let balanced = mcc(&cm(1, 1, 1, 1));
        assert_eq!(balanced.value, Some(0.0));
        assert!(!balanced.degenerate);

        let v = mcc(&cm(2, 3, 1, 1)).value.unwrap();
        assert!((v - 5.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn mcc_degenerate_factor_returns_flagged_zero() {
        let v = mcc(&cm(0, 5, 0, 0));
        assert_eq!(v.value, Some(0.0));
        assert!(v.degenerate);
    }

    #[test]
    fn summarize_matches_published_aggregates() {
        // two independently published 13-value columns pin the quantile
        // convention
        let qwen = [
            0.678, 0.832, 0.838, 0.915, 0.908, 0.907, 0.909, 0.924, 0.891, 0.899, 0.795, 0.903,
            0.818,
        ];
        let s = summarize_median_iqr(&qwen).unwrap();
        assert_eq!(fmt_summary(&s), "0.899 [0.832, 0.908]");

        let llama = [
            0.832, 0.825, 0.804, 0.905, 0.869, 0.892, 0.792, 0.907, 0.918, 0.816, 0.870, 0.930,
            0.874,
        ];
        let s = summarize_median_iqr(&llama).unwrap();
        assert_eq!(fmt_summary(&s), "0.870 [0.825, 0.905]");
    }

    #[test]
    fn summarize_single_value() {
        let s = summarize_median_iqr(&[0.42]).unwrap();
        assert_eq!(s.median, 0.42);
        assert_eq!(s.q1, 0.42);
        assert_eq!(s.q3, 0.42);
        assert_eq!(s.n, 1);
    }

    #[test]
    fn summarize_empty_is_an_error() {
        assert!(matches!(summarize_median_iqr(&[]), Err(MetricsError::EmptyInput)));
    }

    fn predictions_from(
        schema: &FeatureSchema,
        rows: &[(&str, Vec<bool>)],
    ) -> Vec<BinaryFeatureVector> {
        rows.iter()
            .map(|(id, values)| BinaryFeatureVector {
                transcript_id: id.to_string(),
                values: values.clone(),
                missing_mask: vec![false; schema.len()],
            })
            .collect()
    }

    #[test]
    fn evaluate_run_perfect_predictions() {
        let schema = fixtures::default_schema();
        let mut truth_rows = BTreeMap::new();
        let mut v1 = vec![false; 13];
        v1[0] = true;
        let mut v2 = vec![true; 13];
        v2[5] = false;
        truth_rows.insert("a".to_string(), v1.clone());
        truth_rows.insert("b".to_string(), v2.clone());
        let truth = AnnotationTable::new(truth_rows, &schema);
        let preds = predictions_from(&schema, &[("a", v1), ("b", v2)]);
        let table = evaluate_run(&preds, &truth, &schema, "perfect").unwrap();
        for row in &table.rows {
            assert_eq!(row.accuracy.value, Some(1.0));
            assert_eq!(row.mcc.value.is_some(), true);
            // sensitivity/specificity may be null where a feature has no
            // positives/negatives; defined values must be 1.0
            for kind in [MetricKind::Sensitivity, MetricKind::Specificity] {
                if let Some(v) = row.metric(kind).value {
                    assert_eq!(v, 1.0);
                }
            }
        }
        assert_eq!(table.transcript_any_missing, 0);
    }

    #[test]
    fn evaluate_run_all_false_predictions() {
        let schema = fixtures::default_schema();
        let mut truth_rows = BTreeMap::new();
        truth_rows.insert("a".to_string(), vec![true; 13]);
        truth_rows.insert("b".to_string(), vec![false; 13]);
        let truth = AnnotationTable::new(truth_rows, &schema);
        let preds = predictions_from(
            &schema,
            &[("a", vec![false; 13]), ("b", vec![false; 13])],
        );
        let table = evaluate_run(&preds, &truth, &schema, "all-false").unwrap();
        for row in &table.rows {
            assert_eq!(row.sensitivity.value, Some(0.0));
        }
    }

    #[test]
    fn evaluate_run_unknown_transcript() {
        let schema = fixtures::default_schema();
        let mut truth_rows = BTreeMap::new();
        truth_rows.insert("a".to_string(), vec![false; 13]);
        let truth = AnnotationTable::new(truth_rows, &schema);
        let preds = predictions_from(&schema, &[("ghost", vec![false; 13])]);
        assert!(matches!(
            evaluate_run(&preds, &truth, &schema, "m"),
            Err(MetricsError::UnknownTranscript(id)) if id == "ghost"
        ));
    }

    #[test]
    fn csv_has_fourteen_rows_and_summary_label() {
        let schema = fixtures::default_schema();
        let values: Vec<Option<f64>> = (0..13).map(|i| Some(0.5 + i as f64 * 0.01)).collect();
        let table = MetricTable::from_single_metric("m", &schema, MetricKind::MacroF1, &values);
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 15); // header + 13 + summary
        assert!(lines[14].contains(SUMMARY_ROW_LABEL));
    }

    prop_compose! {
        fn arb_cm()(tpc in 0u64..300, tnc in 0u64..300, fpc in 0u64..300, fnc in 0u64..300) -> ConfusionMatrix {
            ConfusionMatrix::from_counts(tpc, tnc, fpc, fnc)
        }
    }

    proptest! {
        #[test]
        fn class_swap_symmetry(tpc in 0u64..300, tnc in 0u64..300, fpc in 0u64..300, fnc in 0u64..300) {
            let m = cm(tpc, tnc, fpc, fnc);
            let swapped = cm(tnc, tpc, fnc, fpc);
            prop_assert_eq!(accuracy(&m).value, accuracy(&swapped).value);
            prop_assert_eq!(macro_f1(&m).value, macro_f1(&swapped).value);
            prop_assert_eq!(mcc(&m).value, mcc(&swapped).value);
            prop_assert_eq!(sensitivity(&m).value, specificity(&swapped).value);
            prop_assert_eq!(specificity(&m).value, sensitivity(&swapped).value);
        }

        #[test]
        fn count_scaling_leaves_metrics_unchanged(
            tpc in 0u64..100, tnc in 0u64..100, fpc in 0u64..100, fnc in 0u64..100,
            k in 1u64..20,
        ) {
            let m = cm(tpc, tnc, fpc, fnc);
            let scaled = cm(tpc * k, tnc * k, fpc * k, fnc * k);
            for (a, b) in [
                (accuracy(&m), accuracy(&scaled)),
                (sensitivity(&m), sensitivity(&scaled)),
                (specificity(&m), specificity(&scaled)),
                (precision(&m), precision(&scaled)),
                (macro_f1(&m), macro_f1(&scaled)),
                (mcc(&m), mcc(&scaled)),
            ] {
                match (a.value, b.value) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                    (None, None) => {}
                    other => prop_assert!(false, "definedness diverged: {:?}", other),
                }
            }
        }

        #[test]
        fn mcc_negation_antisymmetry(tpc in 0u64..100, tnc in 0u64..100, fpc in 0u64..100, fnc in 0u64..100) {
            let m = cm(tpc, tnc, fpc, fnc);
            // negating predictions swaps tp<->fn and tn<->fp
            let negated = cm(fnc, fpc, tnc, tpc);
            let a = mcc(&m);
            let b = mcc(&negated);
            if !a.degenerate && !b.degenerate {
                prop_assert!((a.value.unwrap() + b.value.unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn mcc_stays_in_range(m in arb_cm()) {
            let v = mcc(&m).value.unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn summarize_is_permutation_invariant(values in prop::collection::vec(0.0f64..1.0, 1..20), seed in 0usize..100) {
            let a = summarize_median_iqr(&values).unwrap();
            let mut shuffled = values.clone();
            // deterministic shuffle driven by the seed
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, (seed * 31 + i * 17) % (i + 1));
            }
            let b = summarize_median_iqr(&shuffled).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
