//! Aggregation of metrics streams into plot-ready TSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{read_jsonl, round_sig6, MetricsRecord};

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stats {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }

    /// Set when the std comes from a single value and carries no information.
    pub fn single_repeat(&self) -> bool {
        self.n == 1
    }
}

pub fn fmt_num(x: f64) -> String {
    round_sig6(x).to_string()
}

pub const SUMMARY_HEADER: &str = "metric\tmean\tstd\tn\tnote";

pub fn summary_row(name: &str, s: &Stats) -> String {
    format!(
        "{name}\t{}\t{}\t{}\t{}",
        fmt_num(s.mean),
        fmt_num(s.std),
        s.n,
        if s.single_repeat() { "single_repeat" } else { "" }
    )
}

/// Writes `summary.tsv`-style rows; metrics with no values are skipped.
pub fn write_summary(path: &Path, rows: &[(&str, Vec<f64>)]) -> Result<()> {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (name, values) in rows {
        if let Some(s) = Stats::of(values) {
            out.push_str(&summary_row(name, &s));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// The record with the highest validation accuracy (earliest on ties).
pub fn best_record(records: &[MetricsRecord]) -> Option<&MetricsRecord> {
    records
        .iter()
        .fold(None, |best: Option<&MetricsRecord>, r| match best {
            Some(b) if b.val_acc >= r.val_acc => Some(b),
            _ => Some(r),
        })
}

/// Per-epoch means across runs of possibly different lengths.
pub fn curves_tsv(runs: &[Vec<MetricsRecord>]) -> String {
    let longest = runs.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::from("epoch\tn\tl_ce\tl_lg\tval_acc\ttest_acc\tkept_edges\n");
    for t in 0..longest {
        let at: Vec<&MetricsRecord> = runs.iter().filter_map(|r| r.get(t)).collect();
        let mean = |f: &dyn Fn(&MetricsRecord) -> Option<f64>| {
            let v: Vec<f64> = at.iter().filter_map(|r| f(r)).collect();
            Stats::of(&v).map_or_else(|| "NA".to_string(), |s| fmt_num(s.mean))
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t + 1,
            at.len(),
            mean(&|r| Some(r.l_ce)),
            mean(&|r| r.l_lg),
            mean(&|r| Some(r.val_acc)),
            mean(&|r| Some(r.test_acc)),
            mean(&|r| Some(r.kept_edges as f64)),
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub test_acc: Stats,
    pub kept_edges: Stats,
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("mu\tn\ttest_acc_mean\ttest_acc_std\tkept_edges_mean\tkept_edges_std\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            fmt_num(r.mu),
            r.test_acc.n,
            fmt_num(r.test_acc.mean),
            fmt_num(r.test_acc.std),
            fmt_num(r.kept_edges.mean),
            fmt_num(r.kept_edges.std),
        ));
    }
    out
}

fn find_streams(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_streams(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "metrics.jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

/// The `μ` encoded by a `mu_<value>` path component, if any.
fn sweep_key(rel: &Path) -> Option<f64> {
    rel.components()
        .filter_map(|c| c.as_os_str().to_str()?.strip_prefix("mu_")?.parse().ok())
        .next()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportOutput {
    pub runs: usize,
    pub files: Vec<PathBuf>,
}

/// Scans `dir` for `metrics.jsonl` streams and writes `report.tsv`
/// (mean ± std at each run's best-validation epoch), `curves.tsv` and, for
/// `mu_<value>` subdirectories, `sweep.tsv`.
pub fn report(dir: &Path) -> Result<ReportOutput> {
    let mut paths = Vec::new();
    if dir.is_dir() {
        find_streams(dir, &mut paths)?;
    }
    if paths.is_empty() {
        return Err(Error::contract(format!(
            "no metrics.jsonl under {}",
            dir.display()
        )));
    }

    let mut runs = Vec::with_capacity(paths.len());
    let mut per_run = String::from("run\tbest_epoch\tval_acc\ttest_acc\tkept_edges\tepochs\n");
    let mut best = Vec::new();
    let mut grid: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for path in &paths {
        let records = read_jsonl(path)?;
        let rel = path.strip_prefix(dir).unwrap_or(path);
        let Some(b) = best_record(&records).cloned() else {
            log::warn!("{} is empty", path.display());
            continue;
        };
        per_run.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            rel.parent().map_or_else(|| ".".into(), |p| p.display().to_string()),
            b.epoch,
            fmt_num(b.val_acc),
            fmt_num(b.test_acc),
            b.kept_edges,
            records.len()
        ));
        if let Some(mu) = sweep_key(rel) {
            let cell = grid.entry(mu.to_bits()).or_insert((mu, Vec::new(), Vec::new()));
            cell.1.push(b.test_acc);
            cell.2.push(b.kept_edges as f64);
        }
        best.push(b);
        runs.push(records);
    }
    if runs.is_empty() {
        return Err(Error::contract(format!("every metrics.jsonl under {} is empty", dir.display())));
    }

    let mut files = Vec::new();
    let mut write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
        files.push(path);
        Ok(())
    };

    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let col = |f: fn(&MetricsRecord) -> f64| best.iter().map(f).collect::<Vec<f64>>();
    for (name, values) in [
        ("val_acc", col(|r| r.val_acc)),
        ("test_acc", col(|r| r.test_acc)),
        ("kept_edges", col(|r| r.kept_edges as f64)),
        ("best_epoch", col(|r| r.epoch as f64)),
    ] {
        let s = Stats::of(&values).expect("at least one run");
        summary.push_str(&summary_row(name, &s));
        summary.push('\n');
    }
    write("report.tsv", summary)?;
    write("runs.tsv", per_run)?;
    write("curves.tsv", curves_tsv(&runs))?;

    if !grid.is_empty() {
        let mut rows: Vec<SweepRow> = grid
            .into_values()
            .map(|(mu, acc, kept)| SweepRow {
                mu,
                test_acc: Stats::of(&acc).expect("non-empty cell"),
                kept_edges: Stats::of(&kept).expect("non-empty cell"),
            })
            .collect();
        rows.sort_by(|a, b| a.mu.total_cmp(&b.mu));
        write("sweep.tsv", sweep_tsv(&rows))?;
    }
    Ok(ReportOutput {
        runs: runs.len(),
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_repeats_have_zero_std() {
        let s = Stats::of(&[0.8; 5]).unwrap();
        assert!((s.mean - 0.8).abs() < 1e-15);
        assert!(s.std < 1e-15);
        assert!(!s.single_repeat());
    }

    #[test]
    fn single_repeat_is_flagged() {
        let s = Stats::of(&[0.7]).unwrap();
        assert_eq!(s.std, 0.0);
        assert!(s.single_repeat());
        assert!(summary_row("test_acc", &s).ends_with("single_repeat"));
    }

    #[test]
    fn best_record_prefers_earliest_maximum() {
        let rec = |epoch, val_acc| MetricsRecord {
            epoch,
            l_lg: None,
            l_ce: 1.0,
            val_acc,
            test_acc: 0.0,
            kept_edges: 0,
            wall_ms: None,
        };
        let rs = [rec(1, 0.5), rec(2, 0.7), rec(3, 0.7), rec(4, 0.6)];
        assert_eq!(best_record(&rs).unwrap().epoch, 2);
        assert!(best_record(&[]).is_none());
    }

    #[test]
    fn sweep_key_from_path() {
        assert_eq!(sweep_key(Path::new("mu_0.7/seed_1/metrics.jsonl")), Some(0.7));
        assert_eq!(sweep_key(Path::new("seed_1/metrics.jsonl")), None);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(report(dir.path()).is_err());
    }
}
