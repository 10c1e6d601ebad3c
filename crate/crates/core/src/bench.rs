//! Batch manifest runner: verifies every instance listed in a manifest and
//! reports newline-delimited structured records plus per-category summaries.
//!
//! Manifest format: one instance per line, `path category expected`, where
//! `path` is resolved relative to the manifest file, `category` is a free
//! grouping label (e.g. strings / lists / trees / mutants), and `expected`
//! is `safe` or `unknown`. Blank lines and `#` comments are skipped.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::engine::{verify_with_retry, Verdict, VerifyOpts, VerifyStats};
use crate::front::compile;

/// One parsed manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub category: String,
    pub expected: Verdict,
}

/// Parse manifest text. Paths are kept as written; [`run_entries`] resolves
/// them against the manifest's directory.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, String> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(path), Some(category), Some(expected)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(format!("manifest line {}: expected `path category expected`", lineno + 1));
        };
        if parts.next().is_some() {
            return Err(format!("manifest line {}: trailing fields", lineno + 1));
        }
        let expected = match expected {
            "safe" => Verdict::Safe,
            "unknown" => Verdict::Unknown,
            other => {
                return Err(format!(
                    "manifest line {}: expected verdict `safe` or `unknown`, got `{other}`",
                    lineno + 1
                ))
            }
        };
        out.push(ManifestEntry {
            path: path.to_string(),
            category: category.to_string(),
            expected,
        });
    }
    Ok(out)
}

/// Result of one instance. `verdict` is `safe`, `unknown`, or `error`
/// (missing file or rejected input; the run continues either way).
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub category: String,
    pub verdict: String,
    pub seconds: f64,
    pub expected: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<VerifyStats>,
}

/// Per-category solved/total counts plus expectation violations.
#[derive(Debug, Clone, Serialize)]
pub struct CategorySummary {
    pub category: String,
    pub safe: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub categories: Vec<CategorySummary>,
    /// Expected-safe instances that did not come back safe.
    pub missed_safe: usize,
    /// Expected-unknown instances that came back safe (soundness alarm).
    pub false_safe: usize,
}

impl BenchReport {
    /// Exit policy: every expected-safe instance solved and no
    /// expected-unknown instance certified.
    pub fn ok(&self) -> bool {
        self.missed_safe == 0 && self.false_safe == 0
    }
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Safe => "safe",
        Verdict::Unknown => "unknown",
    }
}

/// Run every entry, resolving paths against `base`.
pub fn run_entries(entries: &[ManifestEntry], base: &Path, opts: &VerifyOpts) -> BenchReport {
    let mut rows = Vec::new();
    for e in entries {
        let start = Instant::now();
        let path = base.join(&e.path);
        let name = Path::new(&e.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| e.path.clone());
        let mut row = BenchRow {
            name,
            category: e.category.clone(),
            verdict: "error".into(),
            seconds: 0.0,
            expected: verdict_label(e.expected).into(),
            error: None,
            stats: None,
        };
        let source = match fs::read_to_string(&path) {
            Ok(s) => s,
            Err(err) => {
                row.error = Some(format!("{}: {err}", path.display()));
                row.seconds = start.elapsed().as_secs_f64();
                rows.push(row);
                continue;
            }
        };
        match compile(&source, &row.name) {
            Ok(ir) => {
                let out = verify_with_retry(&ir, opts);
                row.verdict = verdict_label(out.verdict).into();
                row.stats = Some(out.stats);
                if let Some(r) = out.reason {
                    row.error = Some(r);
                }
            }
            Err(diags) => {
                row.error = Some(
                    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "),
                );
            }
        }
        row.seconds = start.elapsed().as_secs_f64();
        rows.push(row);
    }

    let mut categories: Vec<CategorySummary> = Vec::new();
    let mut missed_safe = 0;
    let mut false_safe = 0;
    for r in &rows {
        let c = match categories.iter_mut().find(|c| c.category == r.category) {
            Some(c) => c,
            None => {
                categories.push(CategorySummary { category: r.category.clone(), safe: 0, total: 0 });
                categories.last_mut().unwrap()
            }
        };
        c.total += 1;
        if r.verdict == "safe" {
            c.safe += 1;
        }
        if r.expected == "safe" && r.verdict != "safe" {
            missed_safe += 1;
        }
        if r.expected == "unknown" && r.verdict == "safe" {
            false_safe += 1;
        }
    }
    BenchReport { rows, categories, missed_safe, false_safe }
}

/// Read and run a manifest file.
pub fn run_manifest(manifest: &Path, opts: &VerifyOpts) -> Result<BenchReport, String> {
    let text = fs::read_to_string(manifest)
        .map_err(|e| format!("{}: {e}", manifest.display()))?;
    let entries = parse_manifest(&text)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    Ok(run_entries(&entries, base, opts))
}

/// Newline-delimited JSON: one record per row, then one summary record.
pub fn render_ndjson(report: &BenchReport) -> String {
    let mut out = String::new();
    for r in &report.rows {
        out.push_str(&serde_json::to_string(r).expect("row serializes"));
        out.push('\n');
    }
    #[derive(Serialize)]
    struct Tail<'a> {
        summary: &'a [CategorySummary],
        missed_safe: usize,
        false_safe: usize,
    }
    out.push_str(
        &serde_json::to_string(&Tail {
            summary: &report.categories,
            missed_safe: report.missed_safe,
            false_safe: report.false_safe,
        })
        .expect("summary serializes"),
    );
    out.push('\n');
    out
}

/// Fixed-width human-readable table with the same content as the NDJSON.
pub fn render_text(report: &BenchReport) -> String {
    let mut out = String::new();
    let name_w = report.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let cat_w = report.rows.iter().map(|r| r.category.len()).max().unwrap_or(8).max(8);
    out.push_str(&format!(
        "{:<name_w$}  {:<cat_w$}  {:<8}  {:<8}  {:>8}\n",
        "name", "category", "verdict", "expected", "seconds"
    ));
    for r in &report.rows {
        out.push_str(&format!(
            "{:<name_w$}  {:<cat_w$}  {:<8}  {:<8}  {:>8.2}\n",
            r.name, r.category, r.verdict, r.expected, r.seconds
        ));
        if let Some(e) = &r.error {
            out.push_str(&format!("{:name_w$}  note: {e}\n", ""));
        }
    }
    for c in &report.categories {
        out.push_str(&format!("{}: {}/{} safe\n", c.category, c.safe, c.total));
    }
    out.push_str(&format!(
        "missed expected-safe: {}; certified expected-unknown: {}\n",
        report.missed_safe, report.false_safe
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parses_and_rejects_bad_lines() {
        let m = "# corpus\nfoo.c strings safe\n\nbar.c mutants unknown # buggy\n";
        let entries = parse_manifest(m).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].path, "foo.c");
        assert_eq!(entries[0].category, "strings");
        assert_eq!(entries[0].expected, Verdict::Safe);
        assert_eq!(entries[1].expected, Verdict::Unknown);
        assert!(parse_manifest("foo.c strings").is_err());
        assert!(parse_manifest("foo.c strings maybe").is_err());
        assert!(parse_manifest("a b c d").is_err());
    }

    #[test]
    fn empty_manifest_is_empty_report() {
        let entries = parse_manifest("# nothing\n").unwrap();
        let report = run_entries(&entries, Path::new("."), &VerifyOpts::default());
        assert!(report.rows.is_empty());
        assert!(report.categories.is_empty());
        assert!(report.ok());
        assert_eq!(render_ndjson(&report).lines().count(), 1); // summary only
    }

    #[test]
    fn missing_file_records_error_row_and_run_continues() {
        let entries = parse_manifest("no_such_file.c strings safe\n").unwrap();
        let report = run_entries(&entries, Path::new("/nonexistent"), &VerifyOpts::default());
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].verdict, "error");
        assert!(report.rows[0].error.is_some());
        assert_eq!(report.missed_safe, 1);
        assert!(!report.ok());
    }

    #[test]
    fn totals_equal_row_counts() {
        let entries = parse_manifest("a.c strings safe\nb.c lists safe\nc.c strings unknown\n").unwrap();
        let report = run_entries(&entries, Path::new("/nonexistent"), &VerifyOpts::default());
        let total: usize = report.categories.iter().map(|c| c.total).sum();
        assert_eq!(total, report.rows.len());
    }
}
