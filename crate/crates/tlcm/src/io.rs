//! Report, sample, trace and manifest files.

use std::{
    fs::{File, OpenOptions},
    io::{BufRead, BufReader, BufWriter, Write},
    path::{Path, PathBuf},
};

use serde::Serialize;
use tlcm_core::{
    eval::MetricReport,
    trace::{TraceRecord, TraceSink},
    ConditionLabel, Matrix,
};

use crate::error::{AppError, AppResult};

pub const REPORT_HEADER: &str = "sampler,steps,n,w2,energy,mean_reward,wall_ms,seed";

/// `<path><suffix>`, e.g. `student.tlcm` + `.manifest.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> AppResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| AppError::io(path, e))
}

fn append(path: &Path) -> AppResult<BufWriter<File>> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map(BufWriter::new)
        .map_err(|e| AppError::io(path, e))
}

pub fn report_line(r: &MetricReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.sampler, r.steps, r.n, r.w2, r.energy, r.mean_reward, r.wall_ms, r.seed
    )
}

#[derive(Serialize)]
struct ReportJson<'a> {
    sampler: &'a str,
    steps: usize,
    n: usize,
    w2: f64,
    energy: f64,
    mean_reward: f64,
    wall_ms: u64,
    seed: u64,
}

/// Appends reports to `csv` (writing the header for a new or empty file) and
/// mirrors them into `<csv>.jsonl`.
pub fn append_reports(csv: &Path, reports: &[MetricReport]) -> AppResult<()> {
    let fresh = match File::open(csv) {
        Ok(f) => {
            let mut first = String::new();
            BufReader::new(f)
                .read_line(&mut first)
                .map_err(|e| AppError::io(csv, e))?;
            if !first.is_empty() && first.trim_end() != REPORT_HEADER {
                return Err(AppError::Config(format!(
                    "{} exists with a different header",
                    csv.display()
                )));
            }
            first.is_empty()
        }
        Err(_) => true,
    };
    let jsonl = sidecar(csv, ".jsonl");
    let mut out = append(csv)?;
    let mut js = append(&jsonl)?;
    let mut lines = String::new();
    let mut json_lines = String::new();
    if fresh {
        lines.push_str(REPORT_HEADER);
        lines.push('\n');
    }
    for r in reports {
        lines.push_str(&report_line(r));
        lines.push('\n');
        let j = ReportJson {
            sampler: &r.sampler,
            steps: r.steps,
            n: r.n,
            w2: r.w2,
            energy: r.energy,
            mean_reward: r.mean_reward,
            wall_ms: r.wall_ms,
            seed: r.seed,
        };
        json_lines.push_str(&serde_json::to_string(&j).expect("report serializes"));
        json_lines.push('\n');
    }
    out.write_all(lines.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| AppError::io(csv, e))?;
    js.write_all(json_lines.as_bytes())
        .and_then(|_| js.flush())
        .map_err(|e| AppError::io(&jsonl, e))
}

/// Samples as `x,y,class` rows.
pub fn write_samples(path: &Path, x: &Matrix, labels: &[ConditionLabel]) -> AppResult<()> {
    let mut out = create(path)?;
    let header: Vec<String> = (0..x.cols())
        .map(|j| format!("x{j}"))
        .chain(["class".to_string()])
        .collect();
    let mut body = || -> std::io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for (i, c) in labels.iter().enumerate() {
            for v in x.row(i) {
                write!(out, "{v},")?;
            }
            match c.class() {
                Some(k) => writeln!(out, "{k}")?,
                None => writeln!(out, "null")?,
            }
        }
        out.flush()
    };
    body().map_err(|e| AppError::io(path, e))
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub config_hash: &'a str,
    pub seed: u64,
    pub stage: &'a str,
    pub wall_ms: u64,
}

pub fn write_manifest(out: &Path, m: &Manifest) -> AppResult<PathBuf> {
    let path = sidecar(out, ".manifest.json");
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| AppError::io(&path, e))?;
    Ok(path)
}

#[derive(Serialize)]
struct TraceJson {
    stage: &'static str,
    iter: u64,
    loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_acc: Option<f64>,
}

/// Writes each trace record as one JSON line; the first write error is kept
/// and returned by [`JsonlTrace::finish`].
pub struct JsonlTrace {
    path: PathBuf,
    out: BufWriter<File>,
    err: Option<std::io::Error>,
}

impl JsonlTrace {
    pub fn create(path: PathBuf) -> AppResult<Self> {
        let out = create(&path)?;
        Ok(Self { path, out, err: None })
    }

    pub fn finish(mut self) -> AppResult<()> {
        if let Some(e) = self.err.take() {
            return Err(AppError::io(&self.path, e));
        }
        self.out.flush().map_err(|e| AppError::io(&self.path, e))
    }
}

impl TraceSink for JsonlTrace {
    fn record(&mut self, rec: &TraceRecord) {
        if self.err.is_some() {
            return;
        }
        let j = TraceJson {
            stage: rec.stage,
            iter: rec.iter,
            loss: rec.loss,
            mean_reward: rec.mean_reward,
            d_acc: rec.d_acc,
        };
        let line = serde_json::to_string(&j).expect("trace record serializes");
        if let Err(e) = writeln!(self.out, "{line}") {
            self.err = Some(e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(steps: usize) -> MetricReport {
        MetricReport {
            sampler: "tlcm".into(),
            steps,
            n: 10,
            w2: 0.25,
            energy: 0.0,
            mean_reward: -1.5,
            wall_ms: 0,
            seed: 7,
        }
    }

    #[test]
    fn header_written_once() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        append_reports(&p, &[report(2)]).unwrap();
        append_reports(&p, &[report(4)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            format!("{REPORT_HEADER}\ntlcm,2,10,0.25,0,-1.5,0,7\ntlcm,4,10,0.25,0,-1.5,0,7\n")
        );
        let js = std::fs::read_to_string(sidecar(&p, ".jsonl")).unwrap();
        assert_eq!(js.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(js.lines().next().unwrap()).unwrap();
        assert_eq!(v["steps"], 2);
    }

    #[test]
    fn foreign_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "a,b\n").unwrap();
        assert!(append_reports(&p, &[report(2)]).is_err());
    }

    #[test]
    fn trace_lines_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let mut t = JsonlTrace::create(p.clone()).unwrap();
        t.record(&TraceRecord::loss("mlcd", 0, 1.0));
        t.record(&TraceRecord {
            d_acc: Some(0.5),
            ..TraceRecord::loss("gan", 1, 2.0)
        });
        t.finish().unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["stage"], "mlcd");
        assert!(lines[0].get("d_acc").is_none());
        assert_eq!(lines[1]["d_acc"], 0.5);
    }
}
