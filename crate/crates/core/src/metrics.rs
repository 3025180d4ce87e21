//! Per-epoch metrics and their JSON Lines encoding.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Mean line-graph loss over the inner PGD steps; absent when no edge is a positive.
    pub l_lg: Option<f64>,
    pub l_ce: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub kept_edges: usize,
    /// Wall-clock time of the epoch. Only serialized when timing is requested,
    /// since it would make otherwise identical runs differ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

impl MetricsRecord {
    /// One JSON object with floats rounded to 6 significant digits.
    pub fn to_json_line(&self, with_timing: bool) -> String {
        let rounded = MetricsRecord {
            epoch: self.epoch,
            l_lg: self.l_lg.map(round_sig6),
            l_ce: round_sig6(self.l_ce),
            val_acc: round_sig6(self.val_acc),
            test_acc: round_sig6(self.test_acc),
            kept_edges: self.kept_edges,
            wall_ms: if with_timing {
                self.wall_ms.map(round_sig6)
            } else {
                None
            },
        };
        serde_json::to_string(&rounded).expect("metrics serialize")
    }
}

/// Append-only JSON Lines file that can be shared between threads.
#[derive(Debug)]
pub struct JsonlSink {
    path: PathBuf,
    file: Mutex<File>,
    with_timing: bool,
}

impl JsonlSink {
    pub fn create(path: &Path, with_timing: bool) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(JsonlSink {
            path: path.to_path_buf(),
            file: Mutex::new(file),
            with_timing,
        })
    }

    pub fn append_to(path: &Path, with_timing: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(JsonlSink {
            path: path.to_path_buf(),
            file: Mutex::new(file),
            with_timing,
        })
    }

    /// Writes one record as a single line; concurrent callers never interleave.
    pub fn append(&self, rec: &MetricsRecord) -> Result<()> {
        let mut line = rec.to_json_line(self.with_timing);
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn append_all(&self, recs: &[MetricsRecord]) -> Result<()> {
        let mut buf = String::new();
        for rec in recs {
            buf.push_str(&rec.to_json_line(self.with_timing));
            buf.push('\n');
        }
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(buf.as_bytes())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_jsonl(path: &Path, recs: &[MetricsRecord], with_timing: bool) -> Result<()> {
    JsonlSink::create(path, with_timing)?.append_all(recs)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

/// Trailing-window median of `values`; entry `t` covers `values[t+1-w..=t]`.
pub fn running_median(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|t| {
            let start = (t + 1).saturating_sub(window.max(1));
            let mut w: Vec<f64> = values[start..=t].to_vec();
            w.sort_by(f64::total_cmp);
            let mid = w.len() / 2;
            if w.len() % 2 == 1 {
                w[mid]
            } else {
                0.5 * (w[mid - 1] + w[mid])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize) -> MetricsRecord {
        MetricsRecord {
            epoch,
            l_lg: Some(0.693_147_180_559_945_3),
            l_ce: 12.345_678_9,
            val_acc: 0.8,
            test_acc: 2.0 / 3.0,
            kept_edges: 17,
            wall_ms: Some(1.234_567),
        }
    }

    #[test]
    fn json_line_format() {
        let line = rec(3).to_json_line(false);
        assert_eq!(
            line,
            r#"{"epoch":3,"l_lg":0.693147,"l_ce":12.3457,"val_acc":0.8,"test_acc":0.666667,"kept_edges":17}"#
        );
        assert!(rec(3).to_json_line(true).contains(r#""wall_ms":1.23457"#));
        let none = MetricsRecord { l_lg: None, ..rec(1) };
        assert!(none.to_json_line(false).contains(r#""l_lg":null"#));
    }

    #[test]
    fn concurrent_appends_stay_line_atomic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let sink = JsonlSink::create(&path, false).unwrap();
        std::thread::scope(|s| {
            for t in 0..4 {
                let sink = &sink;
                s.spawn(move || {
                    for e in 0..50 {
                        sink.append(&rec(t * 1000 + e)).unwrap();
                    }
                });
            }
        });
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 200);
        let mut epochs: Vec<usize> = back.iter().map(|r| r.epoch).collect();
        epochs.sort_unstable();
        epochs.dedup();
        assert_eq!(epochs.len(), 200);
    }

    #[test]
    fn running_median_window() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(running_median(&v, 3), vec![5.0, 3.0, 3.0, 2.0, 3.0]);
        assert_eq!(running_median(&v, 1), v.to_vec());
    }
}
