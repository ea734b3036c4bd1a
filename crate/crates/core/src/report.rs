//! Comma-separated output tables. Floats use shortest round-trip
//! formatting, so identical runs produce identical bytes.

use std::path::Path;

use crate::ensemble::{Confusion, ElementTrainReport, EvalReport, DAMAGE_FLAG_DP};
use crate::error::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("{other:?}"),
        },
    }
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn flag(dp: f64) -> &'static str {
    if dp >= DAMAGE_FLAG_DP {
        "damaged"
    } else {
        "healthy"
    }
}

pub fn format_elements(elements: &[usize]) -> String {
    elements
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn format_snr(snr_db: Option<f64>) -> String {
    snr_db.map_or_else(|| "none".to_string(), |s| s.to_string())
}

/// One row per element, Table 2 style.
pub fn write_train_report(path: &Path, reports: &[ElementTrainReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.element.to_string(),
                r.best_epoch.to_string(),
                r.train_accuracy.to_string(),
                r.best_validation_accuracy.to_string(),
                r.test_accuracy.to_string(),
                r.train_frames.to_string(),
                r.validation_frames.to_string(),
                r.test_frames.to_string(),
            ]
        })
        .collect();
    write_rows(
        path,
        &[
            "element",
            "best_epoch",
            "train_accuracy",
            "validation_accuracy",
            "test_accuracy",
            "train_frames",
            "validation_frames",
            "test_frames",
        ],
        &rows,
    )
}

pub fn write_loss_curves(path: &Path, reports: &[ElementTrainReport]) -> Result<()> {
    let mut rows = Vec::new();
    for r in reports {
        for (k, (loss, acc)) in r.loss_curve.iter().zip(&r.validation_curve).enumerate() {
            rows.push(vec![
                r.element.to_string(),
                (k + 1).to_string(),
                loss.to_string(),
                acc.to_string(),
            ]);
        }
    }
    write_rows(
        path,
        &["element", "epoch", "train_loss", "validation_accuracy"],
        &rows,
    )
}

/// Per-element accuracy on the training-round splits, recomputed at
/// evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitAccuracy {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

pub fn write_eval_report(
    path: &Path,
    eval: &EvalReport,
    splits: &[SplitAccuracy],
    snr_db: Option<f64>,
) -> Result<()> {
    let mut rows = Vec::new();
    for (i, s) in splits.iter().enumerate() {
        let c: Confusion = eval.element_confusion(i);
        rows.push(vec![
            i.to_string(),
            s.train.to_string(),
            s.validation.to_string(),
            s.test.to_string(),
            eval.element_scenario_mean_accuracy(i)?.to_string(),
            c.accuracy().to_string(),
            c.true_positive.to_string(),
            c.false_negative.to_string(),
            c.false_positive.to_string(),
            c.true_negative.to_string(),
            format_snr(snr_db),
        ]);
    }
    write_rows(
        path,
        &[
            "element",
            "train_accuracy",
            "validation_accuracy",
            "test_accuracy",
            "heldout_accuracy",
            "heldout_pooled_accuracy",
            "true_positive",
            "false_negative",
            "false_positive",
            "true_negative",
            "snr_db",
        ],
        &rows,
    )
}

/// Scenario by element DP grid.
pub fn write_dp_matrix(path: &Path, eval: &EvalReport) -> Result<()> {
    let n = eval.num_elements();
    let mut header = vec!["scenario".to_string(), "damaged".to_string()];
    header.extend((0..n).map(|i| format!("dp_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = eval
        .scenarios
        .iter()
        .map(|s| {
            let mut r = vec![s.scenario.to_string(), format_elements(&s.damaged)];
            r.extend(s.elements.iter().map(|e| e.dp.to_string()));
            r
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// Long-form DP table, one row per scenario and element.
pub fn write_dp_table(path: &Path, eval: &EvalReport) -> Result<()> {
    let mut rows = Vec::new();
    for s in &eval.scenarios {
        for e in &s.elements {
            rows.push(vec![
                s.scenario.to_string(),
                e.element.to_string(),
                u8::from(e.damaged).to_string(),
                e.dp.to_string(),
                e.n.to_string(),
                flag(e.dp).to_string(),
            ]);
        }
    }
    write_rows(
        path,
        &["scenario", "element", "damaged", "dp", "frames", "flag"],
        &rows,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpRow {
    pub scenario: usize,
    pub element: usize,
    pub damaged: bool,
    pub dp: f64,
    pub frames: usize,
}

pub fn read_dp_table(path: &Path) -> Result<Vec<DpRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("bad {what}"),
        };
        let field = |k: usize| rec.get(k).unwrap_or("");
        out.push(DpRow {
            scenario: field(0).parse().map_err(|_| bad("scenario"))?,
            element: field(1).parse().map_err(|_| bad("element"))?,
            damaged: field(2) == "1",
            dp: field(3).parse().map_err(|_| bad("dp"))?,
            frames: field(4).parse().map_err(|_| bad("frames"))?,
        });
    }
    Ok(out)
}

/// Bar-chart data for one scenario: element, DP, flag.
pub fn write_scenario_bars(path: &Path, rows: &[&DpRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.element.to_string(),
                r.dp.to_string(),
                flag(r.dp).to_string(),
            ]
        })
        .collect();
    write_rows(path, &["element", "dp", "flag"], &rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    /// Frames classified by one network.
    pub frames: usize,
    pub seconds: f64,
    pub frames_per_second: f64,
    /// Length of the recording in seconds of signal.
    pub recording_seconds: f64,
    /// Wall time to frame and classify the recording through every network.
    pub ensemble_seconds: f64,
}

pub fn write_throughput(path: &Path, t: &Throughput) -> Result<()> {
    write_rows(
        path,
        &[
            "frames",
            "seconds",
            "frames_per_second",
            "recording_seconds",
            "ensemble_seconds_per_recording",
            "realtime_factor",
        ],
        &[vec![
            t.frames.to_string(),
            t.seconds.to_string(),
            t.frames_per_second.to_string(),
            t.recording_seconds.to_string(),
            t.ensemble_seconds.to_string(),
            (t.recording_seconds / t.ensemble_seconds).to_string(),
        ]],
    )
}
