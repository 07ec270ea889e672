use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::{EvalResult, Metric};
use crate::error::{Error, Result};

/// Column holding the oracle phase-sensitive filter results.
pub const ORACLE_MODEL_ID: &str = "IPSF";
pub const NO_PROCESSING_COLUMN: &str = "No Proc.";
/// Test SNRs that make up the table rows.
pub const REPORT_SNRS_DB: [f64; 4] = [-5.0, 0.0, 5.0, 20.0];

pub const FULL_SCALE_FOOTNOTE: &str = "Full-scale reference (60 h corpora, 94M-parameter networks): \
two-speaker known-noise average improvement +9.1 dB SDR / +0.18 ESTOI; \
three-speaker +7.2 dB SDR / +0.13 ESTOI. Shown for context only.";

/// One metric's results for a (noise, speaker count) condition. Rows are
/// SNRs; the first column is the absolute unprocessed score, the others mean
/// improvements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub metric: Metric,
    pub noise: String,
    pub speakers: usize,
    pub snrs_db: Vec<f64>,
    pub columns: Vec<String>,
    /// `cells[row][col]`, `None` where no result exists.
    pub cells: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

#[derive(Default)]
struct Acc {
    sum: f64,
    n: usize,
}

impl Acc {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

fn snr_key(snr: Option<f64>) -> i64 {
    snr.map_or(i64::MIN, |s| (s * 1000.0).round() as i64)
}

/// Groups results into one table per (metric, noise, speaker count).
///
/// Every distinct utterance contributes its unprocessed score once; model
/// columns average the per-utterance improvements. Tables list the oracle
/// first after the unprocessed column, then models in name order.
pub fn aggregate(results: &[EvalResult]) -> Result<Vec<ReportTable>> {
    if results.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let models: BTreeSet<&str> = results.iter().map(|r| r.model.as_str()).collect();
    let mut columns = vec![NO_PROCESSING_COLUMN.to_string()];
    if models.contains(ORACLE_MODEL_ID) {
        columns.push(ORACLE_MODEL_ID.to_string());
    }
    columns.extend(models.iter().filter(|m| **m != ORACLE_MODEL_ID).map(|m| m.to_string()));

    let mut tables = Vec::new();
    for metric in Metric::ALL {
        // (noise, speakers) -> snr -> column -> accumulator
        let mut grid: BTreeMap<(String, usize), BTreeMap<i64, Vec<Acc>>> = BTreeMap::new();
        let mut seen: BTreeSet<(String, usize, i64, String)> = BTreeSet::new();
        for r in results {
            let key = (r.noise.clone(), r.speakers);
            let snr = snr_key(r.snr_db);
            let row = grid
                .entry(key)
                .or_default()
                .entry(snr)
                .or_insert_with(|| (0..columns.len()).map(|_| Acc::default()).collect());
            let out = r.outcome(metric);
            if seen.insert((r.noise.clone(), r.speakers, snr, r.utterance_id.clone())) {
                let u = out.unprocessed.iter().sum::<f64>() / out.unprocessed.len() as f64;
                row[0].push(u);
            }
            let col = columns.iter().position(|c| *c == r.model).expect("model column exists");
            row[col].push(out.improvement);
        }
        for ((noise, speakers), rows) in grid {
            let snrs_db: Vec<f64> = rows
                .keys()
                .map(|&k| if k == i64::MIN { f64::NAN } else { k as f64 / 1000.0 })
                .collect();
            let cells = rows.values().map(|r| r.iter().map(Acc::mean).collect()).collect();
            let counts = rows.values().map(|r| r.iter().map(|a| a.n).collect()).collect();
            tables.push(ReportTable {
                metric,
                noise,
                speakers,
                snrs_db,
                columns: columns.clone(),
                cells,
                counts,
            });
        }
    }
    Ok(tables)
}

impl ReportTable {
    /// Column mean over rows, each row weighted equally.
    pub fn column_average(&self, col: usize) -> Option<f64> {
        let vals: Vec<f64> = self.cells.iter().filter_map(|r| r[col]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_text(&self) -> String {
        let digits = match self.metric {
            Metric::Sdr => 2,
            Metric::Estoi => 3,
        };
        let unit = self.metric.unit();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {}{} | noise {} | {} speakers",
            self.metric.label(),
            if unit.is_empty() { "" } else { "in " },
            unit,
            self.noise,
            self.speakers
        );
        let width = self.columns.iter().map(String::len).max().unwrap_or(8).max(9);
        let _ = write!(out, "{:>8}", "SNR");
        for c in &self.columns {
            let _ = write!(out, " {c:>width$}");
        }
        out.push('\n');
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.digits$}"));
        for (snr, row) in self.snrs_db.iter().zip(&self.cells) {
            let label = if snr.is_nan() { "clean".to_string() } else { format!("{snr}") };
            let _ = write!(out, "{label:>8}");
            for v in row {
                let _ = write!(out, " {:>width$}", fmt(*v));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:>8}", "Avg.");
        for c in 0..self.columns.len() {
            let _ = write!(out, " {:>width$}", fmt(self.column_average(c)));
        }
        out.push('\n');
        out
    }
}

/// Aligned plain-text rendering of all tables with the reference footnote.
pub fn render_text(tables: &[ReportTable]) -> String {
    let mut out = String::new();
    for t in tables {
        out.push_str(&t.to_text());
        out.push('\n');
    }
    let _ = writeln!(out, "Columns after \"{NO_PROCESSING_COLUMN}\" are mean improvements over the unprocessed mixture.");
    let _ = writeln!(out, "{FULL_SCALE_FOOTNOTE}");
    out
}

/// One delimited record per cell:
/// `metric,noise,speakers,snr_db,column,value,count`.
pub fn render_csv(tables: &[ReportTable]) -> String {
    let mut out = String::from("metric,noise,speakers,snr_db,column,value,count\n");
    for t in tables {
        for ((snr, row), counts) in t.snrs_db.iter().zip(&t.cells).zip(&t.counts) {
            for ((col, v), n) in t.columns.iter().zip(row).zip(counts) {
                let snr = if snr.is_nan() { String::new() } else { snr.to_string() };
                let v = v.map_or(String::new(), |v| format!("{v:.6}"));
                let _ = writeln!(out, "{},{},{},{snr},{col},{v},{n}", t.metric.label(), t.noise, t.speakers);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::{PermutationAssignment, PermutationScope};
    use crate::metrics::{MetricOutcome, OutputMatch};

    fn result(id: &str, model: &str, snr: f64, sdr_imp: f64, unproc: f64) -> EvalResult {
        let outcome = |imp: f64| MetricOutcome {
            matched: OutputMatch {
                kept_outputs: vec![0, 1],
                permutation: PermutationAssignment::identity(2, PermutationScope::Utterance),
                per_source: vec![unproc + imp; 2],
                mean: unproc + imp,
            },
            unprocessed: vec![unproc; 2],
            improvement: imp,
        };
        EvalResult {
            utterance_id: id.into(),
            model: model.into(),
            noise: "ssn".into(),
            snr_db: Some(snr),
            speakers: 2,
            sdr_improvement_db: sdr_imp,
            estoi_improvement: 0.1,
            sdr: outcome(sdr_imp),
            estoi: outcome(0.1),
        }
    }

    #[test]
    fn single_result_fills_one_cell() {
        let t = aggregate(&[result("a", "desk", 0.0, 4.0, -2.0)]).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].metric, Metric::Sdr);
        assert_eq!(t[0].columns, vec!["No Proc.", "desk"]);
        assert_eq!(t[0].cells, vec![vec![Some(-2.0), Some(4.0)]]);
    }

    #[test]
    fn means_and_column_order() {
        let rs = [
            result("a", "desk", -5.0, 2.0, -3.0),
            result("b", "desk", -5.0, 4.0, -1.0),
            result("a", "IPSF", -5.0, 10.0, -3.0),
            result("b", "IPSF", -5.0, 12.0, -1.0),
            result("c", "desk", 20.0, 1.0, 5.0),
        ];
        let t = &aggregate(&rs).unwrap()[0];
        assert_eq!(t.columns, vec!["No Proc.", "IPSF", "desk"]);
        assert_eq!(t.snrs_db, vec![-5.0, 20.0]);
        assert_eq!(t.cells[0], vec![Some(-2.0), Some(11.0), Some(3.0)]);
        assert_eq!(t.counts[0], vec![2, 2, 2]);
        assert_eq!(t.cells[1], vec![Some(5.0), None, Some(1.0)]);
        let text = render_text(&aggregate(&rs).unwrap());
        assert!(text.contains("+9.1 dB"));
        let csv = render_csv(&aggregate(&rs).unwrap());
        assert!(csv.contains("SDR,ssn,2,-5,IPSF,11.000000,2"));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(aggregate(&[]), Err(Error::EmptyDataset)));
    }
}
