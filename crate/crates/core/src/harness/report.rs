//! Report files.
//!
//! `frames.csv`:
//! `method,criterion,threshold,frame,truth,estimates,correct,selected,front_back`
//! with DOA lists joined by `;`.
//!
//! `spectra.csv`: `method,criterion,threshold,frame,theta,value`.
//!
//! `sweep.csv`: `method,criterion,threshold,accuracy,front_back_rate,mean_selected,scenarios`.
//!
//! `sweep_by_snr.csv`: `snr_db` followed by the `sweep.csv` columns.
//!
//! `scenarios.csv`: `scenario,doas,snr_db,seed,method,criterion,threshold,accuracy,front_back_rate,mean_selected,scored_frames`.
//!
//! Thresholds are printed as `-inf` or in shortest decimal form; CDR
//! thresholds are in dB.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::sweep::{SweepConfig, SweepTable};
use super::{Evaluation, RunConfig, Summary};
use crate::coherence::Criterion;
use crate::error::{Error, Result};
use crate::spectra::Method;

pub fn fmt_threshold(t: f64) -> String {
    if t == f64::NEG_INFINITY {
        "-inf".into()
    } else if t == f64::INFINITY {
        "inf".into()
    } else {
        format!("{t}")
    }
}

pub fn parse_threshold(s: &str) -> Result<f64> {
    match s.trim() {
        "-inf" => Ok(f64::NEG_INFINITY),
        "inf" => Ok(f64::INFINITY),
        t => t.parse().map_err(|_| Error::Config(format!("bad threshold {t:?}"))),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(BufWriter::new(f))
}

fn io_err(dir: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(dir, e)
}

#[derive(Serialize)]
struct ResultEntry<'a> {
    method: Method,
    criterion: Criterion,
    threshold: String,
    summary: &'a Summary,
}

#[derive(Serialize)]
struct LocalizeSummary<'a> {
    input: &'a str,
    config: &'a RunConfig,
    frames_csv: &'a str,
    results: Vec<ResultEntry<'a>>,
}

/// Writes `summary.json`, `frames.csv` and, when any evaluation carries
/// spectra, `spectra.csv`.
pub fn emit_report(dir: &Path, input: &str, config: &RunConfig, results: &[Evaluation], directions: &[f64]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Empty("results"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let err = io_err(dir);
    let mut w = create(dir, "frames.csv")?;
    writeln!(w, "method,criterion,threshold,frame,truth,estimates,correct,selected,front_back").map_err(&err)?;
    for e in results {
        for f in &e.frames {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                e.key.method.name(),
                e.key.criterion.name(),
                fmt_threshold(e.key.threshold),
                f.frame,
                join(&f.truth),
                join(&f.estimates),
                f.correct as u8,
                f.selected,
                f.front_back_confused as u8
            )
            .map_err(&err)?;
        }
    }
    w.flush().map_err(&err)?;

    if results.iter().any(|e| !e.spectra.is_empty()) {
        let mut w = create(dir, "spectra.csv")?;
        writeln!(w, "method,criterion,threshold,frame,theta,value").map_err(&err)?;
        for e in results {
            for s in &e.spectra {
                for (theta, v) in directions.iter().zip(&s.values) {
                    writeln!(
                        w,
                        "{},{},{},{},{},{:.9e}",
                        e.key.method.name(),
                        e.key.criterion.name(),
                        fmt_threshold(e.key.threshold),
                        s.frame,
                        theta,
                        v
                    )
                    .map_err(&err)?;
                }
            }
        }
        w.flush().map_err(&err)?;
    }

    let summary = LocalizeSummary {
        input,
        config,
        frames_csv: "frames.csv",
        results: results
            .iter()
            .map(|e| ResultEntry {
                method: e.key.method,
                criterion: e.key.criterion,
                threshold: fmt_threshold(e.key.threshold),
                summary: &e.summary,
            })
            .collect(),
    };
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct BestEntry {
    method: Method,
    criterion: Criterion,
    threshold: String,
    accuracy: f64,
    baseline: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    config: &'a SweepConfig,
    scenarios: usize,
    sweep_csv: &'a str,
    best: Vec<BestEntry>,
}

/// Best threshold of every (method, criterion) curve and the all-bins
/// baseline of that method.
pub fn best_thresholds(rows: &[SweepCsvRow]) -> Vec<(Method, Criterion, f64, f64, f64)> {
    let mut out = Vec::new();
    for method in Method::ALL {
        let baseline = rows
            .iter()
            .find(|r| r.method == method && r.criterion == Criterion::All)
            .map(|r| r.accuracy);
        for criterion in Criterion::ALL {
            let mut best: Option<&SweepCsvRow> = None;
            for r in rows.iter().filter(|r| r.method == method && r.criterion == criterion) {
                if best.is_none_or(|b| r.accuracy > b.accuracy) {
                    best = Some(r);
                }
            }
            if let Some(b) = best {
                out.push((method, criterion, b.threshold, b.accuracy, baseline.unwrap_or(f64::NAN)));
            }
        }
    }
    out
}

/// Writes `sweep.csv`, `sweep_by_snr.csv`, `scenarios.csv` and `summary.json`.
pub fn emit_sweep(dir: &Path, config: &SweepConfig, table: &SweepTable) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Empty("sweep table"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let err = io_err(dir);
    let mut overall = create(dir, "sweep.csv")?;
    let mut by_snr = create(dir, "sweep_by_snr.csv")?;
    writeln!(overall, "method,criterion,threshold,accuracy,front_back_rate,mean_selected,scenarios").map_err(&err)?;
    writeln!(by_snr, "snr_db,method,criterion,threshold,accuracy,front_back_rate,mean_selected,scenarios").map_err(&err)?;
    for r in &table.rows {
        let line = format!(
            "{},{},{},{:.6},{:.6},{:.3},{}",
            r.key.method.name(),
            r.key.criterion.name(),
            fmt_threshold(r.key.threshold),
            r.accuracy,
            r.front_back_rate,
            r.mean_selected,
            r.scenarios
        );
        match r.snr_db {
            None => writeln!(overall, "{line}"),
            Some(s) => writeln!(by_snr, "{},{line}", fmt_threshold(s)),
        }
        .map_err(&err)?;
    }
    overall.flush().map_err(&err)?;
    by_snr.flush().map_err(&err)?;

    let mut w = create(dir, "scenarios.csv")?;
    writeln!(w, "scenario,doas,snr_db,seed,method,criterion,threshold,accuracy,front_back_rate,mean_selected,scored_frames").map_err(&err)?;
    for r in &table.per_scenario {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.3},{}",
            r.scenario,
            join(&r.doas),
            fmt_threshold(r.snr_db),
            r.seed,
            r.key.method.name(),
            r.key.criterion.name(),
            fmt_threshold(r.key.threshold),
            r.accuracy,
            r.front_back_rate,
            r.mean_selected,
            r.scored_frames
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)?;

    let rows = read_sweep_csv(&dir.join("sweep.csv"))?;
    let summary = SweepSummary {
        config,
        scenarios: table.per_scenario.iter().map(|r| r.scenario).max().map_or(0, |m| m + 1),
        sweep_csv: "sweep.csv",
        best: best_thresholds(&rows)
            .into_iter()
            .map(|(method, criterion, t, accuracy, baseline)| BestEntry { method, criterion, threshold: fmt_threshold(t), accuracy, baseline })
            .collect(),
    };
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCsvRow {
    pub method: Method,
    pub criterion: Criterion,
    pub threshold: f64,
    pub accuracy: f64,
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepCsvRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let bad = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let headers = reader.headers().map_err(bad)?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
    };
    let (cm, cc, ct, ca) = (col("method")?, col("criterion")?, col("threshold")?, col("accuracy")?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(bad)?;
        rows.push(SweepCsvRow {
            method: rec[cm].parse()?,
            criterion: rec[cc].parse()?,
            threshold: parse_threshold(&rec[ct])?,
            accuracy: rec[ca].parse().map_err(|_| Error::Config(format!("bad accuracy {:?}", &rec[ca])))?,
        });
    }
    Ok(rows)
}

/// Human-readable digest of a sweep directory, also written to `report.txt`.
pub fn render_report(sweep_dir: &Path, out: &Path) -> Result<String> {
    let rows = read_sweep_csv(&sweep_dir.join("sweep.csv"))?;
    if rows.is_empty() {
        return Err(Error::Empty("sweep table"));
    }
    let mut text = String::new();
    for method in Method::ALL {
        let mine: Vec<&SweepCsvRow> = rows.iter().filter(|r| r.method == method).collect();
        if mine.is_empty() {
            continue;
        }
        text.push_str(&format!("{}\n", method.name()));
        for criterion in Criterion::ALL {
            let curve: Vec<String> = mine
                .iter()
                .filter(|r| r.criterion == criterion)
                .map(|r| format!("{}:{:.1}", fmt_threshold(r.threshold), 100.0 * r.accuracy))
                .collect();
            if !curve.is_empty() {
                text.push_str(&format!("  {:<5} {}\n", criterion.name(), curve.join("  ")));
            }
        }
    }
    text.push_str("best thresholds\n");
    for (method, criterion, t, acc, base) in best_thresholds(&rows) {
        text.push_str(&format!(
            "  {:<9} {:<5} {:>6}  {:5.1}%  ({:+.1} points over all bins)\n",
            method.name(),
            criterion.name(),
            fmt_threshold(t),
            100.0 * acc,
            100.0 * (acc - base)
        ));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("report.txt");
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    Ok(text)
}
