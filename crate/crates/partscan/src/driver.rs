//! Scan and bench orchestration: discover files, classify parameters, build
//! flow graphs, run the rules, and assemble deterministic reports.
//!
//! Parsing and per-graph detection run in parallel; results are merged and
//! globally sorted before emission so the parallelism degree never changes
//! the output bytes.

use crate::bench::{self, CaseTiming, CorpusCase, Metrics};
use crate::dataflow::{build_flow_view, FlowGraph, FlowOptions};
use crate::frontend::{Ast, FrontendOptions};
use crate::report::{ConfigEcho, Finding, OutputFormat, ScanReport, TimingBreakdown};
use crate::rules::{apply_filters, detect, RuleConfig};
use crate::tee::{classify_params, AnnotationTable, ApiCatalog, ParamRole};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    pub paths: Vec<PathBuf>,
    pub rules: RuleConfig,
    pub frontend: FrontendOptions,
    pub catalog_text: Option<String>,
    pub catalog_path: Option<String>,
    pub annotations_text: Option<String>,
    pub annotations_path: Option<String>,
    pub format: OutputFormat,
    /// Record timing in the report (off by default: timing would break
    /// byte-for-byte reproducibility).
    pub timing: bool,
    /// Dump every flow graph in text form (debug aid, golden-file tests).
    pub dump_flows: bool,
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] crate::tee::ConfigError),
    #[error("annotation table: {0}")]
    Annotations(String),
    #[error(transparent)]
    Corpus(#[from] bench::CorpusError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct ScanOutcome {
    pub report: ScanReport,
    /// Flow-graph dumps, present when `dump_flows` was set.
    pub flow_dumps: Vec<String>,
}

/// Discovers `.c`/`.h` files under the given paths. When exactly one
/// directory argument is scanned, unit paths are relative to it, so reports
/// stay stable regardless of where the tool runs from.
fn discover_files(paths: &[PathBuf]) -> Result<Vec<(PathBuf, String)>, ScanError> {
    let mut found: Vec<(PathBuf, String)> = Vec::new();
    let single_dir_root = match paths {
        [only] if only.is_dir() => Some(only.clone()),
        _ => None,
    };
    for p in paths {
        if !p.exists() {
            return Err(ScanError::Usage(format!("path {} does not exist", p.display())));
        }
        if p.is_file() {
            found.push((p.clone(), p.display().to_string()));
            continue;
        }
        for entry in walkdir::WalkDir::new(p).sort_by_file_name() {
            let entry = entry.map_err(|e| ScanError::Usage(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let ext = entry.path().extension().and_then(|e| e.to_str());
            if !matches!(ext, Some("c") | Some("h")) {
                continue;
            }
            let display = match &single_dir_root {
                Some(root) => entry
                    .path()
                    .strip_prefix(root)
                    .unwrap_or(entry.path())
                    .display()
                    .to_string(),
                None => entry.path().display().to_string(),
            };
            found.push((entry.path().to_path_buf(), display));
        }
    }
    found.sort_by(|a, b| a.1.cmp(&b.1));
    found.dedup_by(|a, b| a.1 == b.1);
    Ok(found)
}

fn load_annotations(opts: &ScanOptions) -> Result<Option<AnnotationTable>, ScanError> {
    match &opts.annotations_text {
        Some(text) => AnnotationTable::parse(text)
            .map(Some)
            .map_err(ScanError::Annotations),
        None => Ok(None),
    }
}

/// Parses the units, keeping the display path on each AST.
fn parse_all(
    files: &[(PathBuf, String)],
    options: &FrontendOptions,
) -> Result<Vec<Ast>, ScanError> {
    let mut asts: Vec<Ast> = files
        .par_iter()
        .map(|(path, display)| crate::frontend::parse_unit_as(path, display, options))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ScanError::Usage(e.to_string()))?;
    asts.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(asts)
}

/// Runs the full pipeline over already-parsed units.
pub fn analyze(
    asts: &[Ast],
    catalog: &ApiCatalog,
    annotations: Option<&AnnotationTable>,
    rules: &RuleConfig,
    dump_flows: bool,
) -> Result<(Vec<Finding>, Vec<String>, Vec<String>, f64, f64), ScanError> {
    crate::tee::validate_arity(catalog, asts)?;
    let classification = classify_params(asts, annotations);
    let mut warnings = classification.warnings.clone();

    let flow_start = Instant::now();
    let flow_opts = FlowOptions {
        deep_pointers: rules.deep_pointers,
    };
    // One graph per directional view of each classified binding.
    let views: Vec<(usize, ParamRole)> = classification
        .bindings
        .iter()
        .enumerate()
        .flat_map(|(i, b)| match b.role {
            ParamRole::Unknown => Vec::new(),
            ParamRole::InOut => vec![(i, ParamRole::Input), (i, ParamRole::Output)],
            ParamRole::Input => vec![(i, ParamRole::Input)],
            ParamRole::Output => vec![(i, ParamRole::Output)],
            ParamRole::SharedMemory => vec![(i, ParamRole::SharedMemory)],
        })
        .collect();
    let graphs: Vec<Result<FlowGraph, String>> = views
        .par_iter()
        .map(|(i, view)| {
            build_flow_view(&classification.bindings[*i], *view, asts, catalog, &flow_opts)
                .map_err(|e| e.to_string())
        })
        .collect();
    let flow_ms = flow_start.elapsed().as_secs_f64() * 1000.0;

    let mut ok_graphs = Vec::new();
    for g in graphs {
        match g {
            Ok(g) => ok_graphs.push(g),
            Err(e) => warnings.push(format!("flow build skipped: {e}")),
        }
    }

    let match_start = Instant::now();
    let catalog_ref = catalog;
    let mut findings: Vec<Finding> = ok_graphs
        .par_iter()
        .flat_map(|g| {
            let fs = detect(g, catalog_ref, rules);
            apply_filters(fs, g, rules)
        })
        .collect();
    let match_ms = match_start.elapsed().as_secs_f64() * 1000.0;
    findings.sort_by_key(|f| f.sort_key());
    findings.dedup();

    let dumps = if dump_flows {
        ok_graphs.iter().map(|g| g.dump()).collect()
    } else {
        Vec::new()
    };
    Ok((findings, warnings, dumps, flow_ms, match_ms))
}

/// The `scan` pipeline: classify, build flows, detect, filter, report.
pub fn run_scan(opts: &ScanOptions) -> Result<ScanOutcome, ScanError> {
    if opts.paths.is_empty() {
        return Err(ScanError::Usage("no input paths given".to_string()));
    }
    let catalog = crate::tee::load_catalog(opts.catalog_text.as_deref())?;
    let annotations = load_annotations(opts)?;

    let parse_start = Instant::now();
    let files = discover_files(&opts.paths)?;
    let asts = parse_all(&files, &opts.frontend)?;
    let parse_ms = parse_start.elapsed().as_millis() as u64;

    let (findings, mut warnings, flow_dumps, flow_ms, match_ms) = analyze(
        &asts,
        &catalog,
        annotations.as_ref(),
        &opts.rules,
        opts.dump_flows,
    )?;

    // Per-file diagnostics summary.
    for ast in &asts {
        if !ast.diagnostics.is_empty() {
            warnings.push(format!(
                "{}: {} parse diagnostic{}",
                ast.path,
                ast.diagnostics.len(),
                if ast.diagnostics.len() == 1 { "" } else { "s" }
            ));
        }
    }

    let mut report = ScanReport::new(ConfigEcho {
        paths: opts.paths.iter().map(|p| p.display().to_string()).collect(),
        refined: opts.rules.refined,
        extended_r2: opts.rules.extended_r2,
        deep_pointers: opts.rules.deep_pointers,
        format: format_name(opts.format).to_string(),
        catalog: opts.catalog_path.clone(),
        annotations: opts.annotations_path.clone(),
    });
    report.findings = findings;
    report.warnings = warnings;
    if opts.timing {
        report.timing = Some(TimingBreakdown {
            parse_ms,
            flow_build_ms: flow_ms as u64,
            rule_match_ms: match_ms as u64,
        });
    }
    report.sort();
    Ok(ScanOutcome { report, flow_dumps })
}

fn format_name(f: OutputFormat) -> &'static str {
    match f {
        OutputFormat::Text => "text",
        OutputFormat::Json => "json",
        OutputFormat::Sarif => "sarif",
    }
}

// -------------------------------------------------------------------
// Bench
// -------------------------------------------------------------------

pub struct BenchOutcome {
    pub metrics: Metrics,
    pub timings: Vec<CaseTiming>,
    pub cases: usize,
    pub clean_cases: usize,
    /// Per-case findings (case name -> active findings), for tooling.
    pub per_case: Vec<(String, Vec<Finding>)>,
}

/// Scans one corpus case in isolation and returns its findings.
pub fn scan_case(
    case: &CorpusCase,
    catalog: &ApiCatalog,
    rules: &RuleConfig,
    frontend: &FrontendOptions,
) -> Result<(Vec<Finding>, CaseTiming), ScanError> {
    let files: Vec<(PathBuf, String)> = case
        .files
        .iter()
        .map(|f| (case.dir.join(f), f.clone()))
        .collect();
    let mut loc = 0usize;
    for (p, _) in &files {
        loc += std::fs::read_to_string(p)
            .map(|t| t.lines().count())
            .unwrap_or(0);
    }
    let asts = parse_all(&files, frontend)?;
    let (findings, _, _, flow_ms, match_ms) = analyze(&asts, catalog, None, rules, false)?;
    Ok((
        findings,
        CaseTiming {
            case: case.name.clone(),
            loc,
            flow_build_ms: flow_ms,
            rule_match_ms: match_ms,
        },
    ))
}

/// Loads a corpus, scans every case with the given rule mode, and scores
/// the findings against ground truth.
pub fn run_bench(
    corpus_dir: &Path,
    rules: &RuleConfig,
    frontend: &FrontendOptions,
) -> Result<BenchOutcome, ScanError> {
    let catalog = crate::tee::load_catalog(None)?;
    let cases = bench::load_corpus(corpus_dir)?;
    let results: Vec<(String, Vec<Finding>, CaseTiming)> = cases
        .par_iter()
        .map(|case| {
            scan_case(case, &catalog, rules, frontend)
                .map(|(f, t)| (case.name.clone(), f, t))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut results = results;
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let per_case: Vec<(String, Vec<Finding>)> = results
        .iter()
        .map(|(n, f, _)| (n.clone(), f.clone()))
        .collect();
    let truths: Vec<(String, bench::GroundTruth)> = cases
        .iter()
        .map(|c| (c.name.clone(), c.truth.clone()))
        .collect();
    let metrics = bench::score(&per_case, &truths);
    let timings: Vec<CaseTiming> = results.into_iter().map(|(_, _, t)| t).collect();
    Ok(BenchOutcome {
        metrics,
        timings,
        cases: cases.len(),
        clean_cases: cases.iter().filter(|c| c.truth.expected_empty).count(),
        per_case,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn temp_tree(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("partscan-driver-{name}"));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    const TA: &str = "char test[256] = {};\nTEE_MemMove(test, params[1].memref.buffer, params[1].memref.size);\n";
    const CA: &str = r#"
void aes_oper(TEEC_Session session)
{
    TEEC_Operation op;
    TEEC_Result res;
    char g_AesOutpUT[] = {0x01, 0x02, 0x03, 0x04, 0x05};
    op.params[1].tmpref.buffer = g_AesOutpUT;
    op.params[1].tmpref.size = 5;
    res = l_CryptoVerifyCa_SendCommand(&op, &session, CMD_AES_OPER);
}
"#;

    #[test]
    fn scan_produces_relative_paths_for_single_dir() {
        let dir = temp_tree("relpath");
        fs::write(dir.join("ta.c"), TA).unwrap();
        fs::write(dir.join("ca.c"), CA).unwrap();
        let outcome = run_scan(&ScanOptions {
            paths: vec![dir.clone()],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(outcome.report.exit_code(), 1);
        let f = &outcome.report.findings[0];
        assert_eq!(f.location.file, "ta.c");
        assert_eq!((f.location.line, f.location.col), (2, 1));
    }

    #[test]
    fn missing_path_is_usage_error() {
        let err = run_scan(&ScanOptions {
            paths: vec![PathBuf::from("/nonexistent-dir-xyz")],
            ..Default::default()
        });
        assert!(matches!(err, Err(ScanError::Usage(_))));
    }

    #[test]
    fn scan_reports_are_byte_identical_across_thread_counts() {
        let dir = temp_tree("det");
        fs::write(dir.join("ta.c"), TA).unwrap();
        fs::write(dir.join("ca.c"), CA).unwrap();
        let opts = ScanOptions {
            paths: vec![dir.clone()],
            format: OutputFormat::Json,
            ..Default::default()
        };
        let render = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let report = pool.install(|| run_scan(&opts)).unwrap().report;
            let mut out = Vec::new();
            crate::report::emit(&report, OutputFormat::Json, &mut out).unwrap();
            out
        };
        assert_eq!(render(1), render(4));
    }

    #[test]
    fn bench_on_empty_dir_yields_zero_metrics() {
        let dir = temp_tree("benchempty");
        let out = run_bench(&dir, &RuleConfig::default(), &FrontendOptions::default()).unwrap();
        assert_eq!(out.cases, 0);
        assert_eq!(out.metrics.total.n, 0);
        assert_eq!(out.metrics.total.precision(), None);
    }
}
