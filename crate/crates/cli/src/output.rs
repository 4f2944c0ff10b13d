//! Result tables and the write protocol for output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use echo_core::linalg::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Sweep value in configuration units.
    pub value: f64,
    pub coherence: C64,
    pub factors: Vec<C64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub column: String,
    pub metadata: BTreeMap<String, String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn failed_points(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn render(&self, include_factors: bool) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "# failed_points: {}", self.failed_points());
        for r in &self.rows {
            if let Some(e) = &r.error {
                let _ = writeln!(out, "# error at {:.9e}: {}", r.value, e.replace('\n', " "));
            }
        }
        let _ = write!(out, "{}\tL\tL_abs\tP\tstatus", self.column);
        if include_factors {
            out.push_str("\tfactors");
        }
        out.push('\n');
        for r in &self.rows {
            let status = if r.error.is_some() { "failed" } else { "ok" };
            let _ = write!(
                out,
                "{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{status}",
                r.value,
                r.coherence.re,
                r.coherence.norm(),
                0.5 * (1.0 + r.coherence.re)
            );
            if include_factors {
                let f: Vec<String> = r.factors.iter().map(|z| format!("{:.9e}{:+.9e}i", z.re, z.im)).collect();
                let _ = write!(out, "\t{}", f.join(","));
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `<stem>.tsv` inside `dir`. A `<stem>.failed` marker is created
/// first and removed only when `complete` is true.
pub fn write_result(dir: &Path, stem: &str, body: &str, complete: bool) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let marker = dir.join(format!("{stem}.failed"));
    fs::write(&marker, "incomplete\n").with_context(|| format!("writing {}", marker.display()))?;
    let path = dir.join(format!("{stem}.tsv"));
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    if complete {
        fs::remove_file(&marker).with_context(|| format!("removing {}", marker.display()))?;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(error: Option<String>) -> Table {
        Table {
            column: "tau_us".into(),
            metadata: BTreeMap::from([("seed".to_string(), "3".to_string())]),
            rows: vec![Row { value: 1.5, coherence: C64::new(0.5, 0.0), factors: vec![C64::new(1.0, 0.0)], error }],
        }
    }

    #[test]
    fn render_has_metadata_header_and_rows() {
        let text = table(None).render(true);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed: 3");
        assert!(lines.contains(&"tau_us\tL\tL_abs\tP\tstatus\tfactors"));
        let last = lines.last().unwrap();
        assert!(last.contains("7.500000000000e-1\tok"), "{last}");
    }

    #[test]
    fn marker_survives_incomplete_runs() {
        let dir = tempfile::tempdir().unwrap();
        let body = table(Some("boom".into())).render(false);
        write_result(dir.path(), "x", &body, false).unwrap();
        assert!(dir.path().join("x.failed").exists());
        assert!(fs::read_to_string(dir.path().join("x.tsv")).unwrap().contains("boom"));
        write_result(dir.path(), "y", &table(None).render(false), true).unwrap();
        assert!(!dir.path().join("y.failed").exists());
    }
}
