//! Benchmark corpus loading and scoring.
//!
//! A corpus is a directory of cases; each case directory holds the C files
//! to scan plus an `expect.txt` ground-truth file. Ground-truth lines are
//! `<file>:<line> <RULE>`, optionally followed by `known_fn` for issues the
//! baseline deliberately misses; a single `CLEAN` token marks a no-issue
//! case. Matching is line-exact on (file, line, rule).

use crate::report::Finding;
use crate::rules::RuleId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Structural category of a corpus case, taken from the parent directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Basic,
    InProcedure,
    Variadic,
    ControlFlow,
    Combined,
}

impl Category {
    fn from_dir(name: &str) -> Option<Category> {
        match name {
            "basic" => Some(Category::Basic),
            "in_procedure" => Some(Category::InProcedure),
            "variadic" => Some(Category::Variadic),
            "control_flow" => Some(Category::ControlFlow),
            "combined" => Some(Category::Combined),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedFinding {
    pub file: String,
    pub line: u32,
    pub rule: RuleId,
    /// Baseline is expected to miss this issue (documented false negative).
    pub known_fn: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub expected: Vec<ExpectedFinding>,
    pub category: Category,
    pub expected_empty: bool,
}

#[derive(Debug, Clone)]
pub struct CorpusCase {
    pub name: String,
    pub dir: PathBuf,
    /// C files of the case, relative to `dir`, sorted.
    pub files: Vec<String>,
    pub truth: GroundTruth,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("case {case}: missing expect.txt")]
    MissingExpect { case: String },
    #[error("case {case}: cannot read {path}: {source}")]
    Io {
        case: String,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("case {case}: malformed expect line {line}: {reason}")]
    MalformedExpect {
        case: String,
        line: usize,
        reason: String,
    },
    #[error("case {case}: expect references {file}:{line} but the file has {actual} lines")]
    DanglingLine {
        case: String,
        file: String,
        line: u32,
        actual: usize,
    },
    #[error("case {case}: expect references unknown file {file}")]
    UnknownFile { case: String, file: String },
}

/// Loads every case under `dir`. The layout is
/// `<dir>/cases/<category>/<case>/` (or `<dir>/<category>/<case>/`).
/// An empty or missing tree yields an empty corpus.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusCase>, CorpusError> {
    let root = if dir.join("cases").is_dir() {
        dir.join("cases")
    } else {
        dir.to_path_buf()
    };
    let mut cases = Vec::new();
    let mut category_dirs: Vec<(Category, PathBuf)> = Vec::new();
    if let Ok(entries) = std::fs::read_dir(&root) {
        for e in entries.flatten() {
            let p = e.path();
            if !p.is_dir() {
                continue;
            }
            let name = e.file_name().to_string_lossy().to_string();
            if let Some(cat) = Category::from_dir(&name) {
                category_dirs.push((cat, p));
            }
        }
    }
    category_dirs.sort_by(|a, b| a.1.cmp(&b.1));
    for (category, cat_dir) in category_dirs {
        let mut case_dirs: Vec<PathBuf> = std::fs::read_dir(&cat_dir)
            .map(|it| {
                it.flatten()
                    .map(|e| e.path())
                    .filter(|p| p.is_dir())
                    .collect()
            })
            .unwrap_or_default();
        case_dirs.sort();
        for case_dir in case_dirs {
            cases.push(load_case(&case_dir, category)?);
        }
    }
    Ok(cases)
}

fn load_case(dir: &Path, category: Category) -> Result<CorpusCase, CorpusError> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_default();
    let mut files: Vec<String> = std::fs::read_dir(dir)
        .map(|it| {
            it.flatten()
                .map(|e| e.file_name().to_string_lossy().to_string())
                .filter(|n| n.ends_with(".c") || n.ends_with(".h"))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    let expect_path = dir.join("expect.txt");
    if !expect_path.is_file() {
        return Err(CorpusError::MissingExpect { case: name });
    }
    let text = std::fs::read_to_string(&expect_path).map_err(|source| CorpusError::Io {
        case: name.clone(),
        path: expect_path.display().to_string(),
        source,
    })?;
    let truth = parse_expect(&text, &name, category)?;
    // Every referenced line must exist in the case's files.
    for exp in &truth.expected {
        if !files.contains(&exp.file) {
            return Err(CorpusError::UnknownFile {
                case: name,
                file: exp.file.clone(),
            });
        }
        let file_path = dir.join(&exp.file);
        let content =
            std::fs::read_to_string(&file_path).map_err(|source| CorpusError::Io {
                case: name.clone(),
                path: file_path.display().to_string(),
                source,
            })?;
        let actual = content.lines().count();
        if exp.line as usize > actual {
            return Err(CorpusError::DanglingLine {
                case: name,
                file: exp.file.clone(),
                line: exp.line,
                actual,
            });
        }
    }
    Ok(CorpusCase {
        name,
        dir: dir.to_path_buf(),
        files,
        truth,
    })
}

fn parse_expect(text: &str, case: &str, category: Category) -> Result<GroundTruth, CorpusError> {
    let mut expected = Vec::new();
    let mut clean = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "CLEAN" {
            clean = true;
            continue;
        }
        let mut parts = line.split_whitespace();
        let locpart = parts.next().unwrap_or_default();
        let rulepart = parts.next().ok_or_else(|| CorpusError::MalformedExpect {
            case: case.to_string(),
            line: i + 1,
            reason: "expected `<file>:<line> <RULE>`".to_string(),
        })?;
        let known_fn = match parts.next() {
            None => false,
            Some("known_fn") => true,
            Some(other) => {
                return Err(CorpusError::MalformedExpect {
                    case: case.to_string(),
                    line: i + 1,
                    reason: format!("unexpected token {other}"),
                })
            }
        };
        let (file, lineno) = locpart.rsplit_once(':').ok_or_else(|| {
            CorpusError::MalformedExpect {
                case: case.to_string(),
                line: i + 1,
                reason: "missing `:` in location".to_string(),
            }
        })?;
        let lineno: u32 = lineno.parse().map_err(|_| CorpusError::MalformedExpect {
            case: case.to_string(),
            line: i + 1,
            reason: "bad line number".to_string(),
        })?;
        let rule = RuleId::parse(rulepart).ok_or_else(|| CorpusError::MalformedExpect {
            case: case.to_string(),
            line: i + 1,
            reason: format!("unknown rule {rulepart}"),
        })?;
        expected.push(ExpectedFinding {
            file: file.to_string(),
            line: lineno,
            rule,
            known_fn,
        });
    }
    if clean && !expected.is_empty() {
        return Err(CorpusError::MalformedExpect {
            case: case.to_string(),
            line: 0,
            reason: "CLEAN combined with expected findings".to_string(),
        });
    }
    Ok(GroundTruth {
        expected_empty: clean,
        expected,
        category,
    })
}

// -------------------------------------------------------------------
// Scoring
// -------------------------------------------------------------------

/// Counts for one rule (or the total row).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    /// Ground-truth issues.
    pub ni: usize,
    /// Reported findings (distinct flagged lines).
    pub n: usize,
    /// True positives.
    pub tp: usize,
}

impl RuleMetrics {
    /// Precision TP/N; `None` when nothing was reported.
    pub fn precision(&self) -> Option<f64> {
        if self.n == 0 {
            None
        } else {
            Some(self.tp as f64 / self.n as f64)
        }
    }

    /// Recall TP/NI; `None` when the ground truth is empty.
    pub fn recall(&self) -> Option<f64> {
        if self.ni == 0 {
            None
        } else {
            Some(self.tp as f64 / self.ni as f64)
        }
    }

    /// F1 = 2PR/(P+R); reported as 0 for the degenerate cases.
    pub fn f1(&self) -> f64 {
        match (self.precision(), self.recall()) {
            (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_rule: BTreeMap<RuleId, RuleMetrics>,
    pub total: RuleMetrics,
}

/// Scores per-case findings against per-case ground truth. A true positive
/// matches on (file, line, rule); counting is line-granular, like the
/// per-line issue counts the corpus is built from.
pub fn score(results: &[(String, Vec<Finding>)], truths: &[(String, GroundTruth)]) -> Metrics {
    let truth_by_case: BTreeMap<&str, &GroundTruth> =
        truths.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let mut metrics = Metrics::default();
    for rule in [RuleId::BpR1, RuleId::BpR2, RuleId::BpR3] {
        metrics.per_rule.insert(rule, RuleMetrics::default());
    }
    for (case, findings) in results {
        let truth = truth_by_case.get(case.as_str());
        let reported: BTreeSet<(String, u32, RuleId)> = findings
            .iter()
            .filter(|f| f.is_active())
            .map(|f| (f.location.file.clone(), f.location.line, f.rule))
            .collect();
        let expected: BTreeSet<(String, u32, RuleId)> = truth
            .map(|t| {
                t.expected
                    .iter()
                    .map(|e| (e.file.clone(), e.line, e.rule))
                    .collect()
            })
            .unwrap_or_default();
        for key @ (_, _, rule) in &reported {
            let m = metrics.per_rule.entry(*rule).or_default();
            m.n += 1;
            metrics.total.n += 1;
            if expected.contains(key) {
                m.tp += 1;
                metrics.total.tp += 1;
            }
        }
        for (_, _, rule) in &expected {
            let m = metrics.per_rule.entry(*rule).or_default();
            m.ni += 1;
            metrics.total.ni += 1;
        }
    }
    metrics
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.2}", x * 100.0),
        None => "n/a".to_string(),
    }
}

/// Renders the metrics table, one row per rule plus the total.
pub fn metrics_table(m: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>4} {:>4} {:>4} {:>8} {:>8} {:>6}",
        "rule", "NI", "N", "TP", "P(%)", "R(%)", "F1"
    );
    for (rule, rm) in &m.per_rule {
        let title = crate::rules::explain(*rule).title;
        let _ = writeln!(
            out,
            "{:<28} {:>4} {:>4} {:>4} {:>8} {:>8} {:>6.2}",
            format!("{rule} {title}"),
            rm.ni,
            rm.n,
            rm.tp,
            pct(rm.precision()),
            pct(rm.recall()),
            rm.f1()
        );
    }
    let _ = writeln!(
        out,
        "{:<28} {:>4} {:>4} {:>4} {:>8} {:>8} {:>6.2}",
        "total",
        m.total.ni,
        m.total.n,
        m.total.tp,
        pct(m.total.precision()),
        pct(m.total.recall()),
        m.total.f1()
    );
    out
}

/// Metrics as CSV (per rule plus total).
pub fn metrics_csv(m: &Metrics) -> String {
    let mut out = String::from("rule,ni,n,tp,precision,recall,f1\n");
    for (rule, rm) in &m.per_rule {
        let _ = writeln!(
            out,
            "{rule},{},{},{},{},{},{:.4}",
            rm.ni,
            rm.n,
            rm.tp,
            pct(rm.precision()),
            pct(rm.recall()),
            rm.f1()
        );
    }
    let _ = writeln!(
        out,
        "total,{},{},{},{},{},{:.4}",
        m.total.ni,
        m.total.n,
        m.total.tp,
        pct(m.total.precision()),
        pct(m.total.recall()),
        m.total.f1()
    );
    out
}

/// Per-case timing: lines of code, flow construction, rule matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTiming {
    pub case: String,
    pub loc: usize,
    pub flow_build_ms: f64,
    pub rule_match_ms: f64,
}

/// Timing rows as CSV for plotting.
pub fn timing_csv(rows: &[CaseTiming]) -> String {
    let mut out = String::from("case,loc,flow_build_ms,rule_match_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.3},{:.3}",
            r.case, r.loc, r.flow_build_ms, r.rule_match_ms
        );
    }
    out
}
