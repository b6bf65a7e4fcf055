//! Command-line front end: `scan`, `bench`, and `explain`.

use clap::{Args, Parser, Subcommand};
use partscan::bench::{metrics_csv, metrics_table, timing_csv};
use partscan::driver::{run_bench, run_scan, ScanError, ScanOptions};
use partscan::frontend::FrontendOptions;
use partscan::report::{emit, OutputFormat};
use partscan::rules::{explain, RuleConfig, RuleId};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

const CONFIG_ENV: &str = "PARTSCAN_CONFIG";
const DEFAULT_CONFIG: &str = "partscan.toml";

#[derive(Parser, Debug)]
#[command(
    name = "partscan",
    about = "Detects bad-partitioning vulnerabilities in TEE application code",
    version
)]
struct Cli {
    /// Config file (TOML). Defaults to $PARTSCAN_CONFIG or ./partscan.toml.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan C sources for bad-partitioning issues.
    Scan(ScanArgs),
    /// Run the benchmark corpus and print precision/recall metrics.
    Bench(BenchArgs),
    /// Describe a rule and how to fix its findings.
    Explain {
        /// Rule id: BP-R1, BP-R2 or BP-R3.
        rule: String,
    },
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Files or directories to scan.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Enable the false-positive refinement filters (F1-F3).
    #[arg(long)]
    refined: bool,
    /// Also flag input-bounded loop writes into fixed-size buffers.
    #[arg(long)]
    extended_r2: bool,
    /// Propagate parameter identity through raw-pointer call arguments.
    #[arg(long)]
    deep_pointers: bool,
    /// Report format.
    #[arg(long, value_name = "text|json|sarif")]
    format: Option<String>,
    /// API catalog additions (TOML).
    #[arg(long, value_name = "FILE")]
    catalog: Option<PathBuf>,
    /// Parameter annotation table.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Dump every flow graph before the report (debugging).
    #[arg(long)]
    dump_flows: bool,
    /// Include timing in the report (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Worker threads (defaults to all cores; never affects output bytes).
    #[arg(long, short = 'j', value_name = "N")]
    jobs: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, short = 'o', value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Corpus directory (contains cases/<category>/<case>/).
    corpus: PathBuf,
    #[arg(long)]
    refined: bool,
    #[arg(long)]
    extended_r2: bool,
    #[arg(long)]
    deep_pointers: bool,
    /// Write metrics.csv and timing.csv into this directory.
    #[arg(long, value_name = "DIR")]
    csv: Option<PathBuf>,
    #[arg(long, short = 'j', value_name = "N")]
    jobs: Option<usize>,
}

/// Config-file mirror of the CLI flags; flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    refined: bool,
    extended_r2: bool,
    deep_pointers: bool,
    format: Option<String>,
    catalog: Option<PathBuf>,
    annotations: Option<PathBuf>,
    jobs: Option<usize>,
    frontend: FrontendSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FrontendSection {
    /// Extra object-like macro definitions.
    defines: BTreeMap<String, String>,
    /// Keep the #else branch of unresolvable conditionals.
    prefer_else_branch: bool,
}

fn load_file_config(explicit: Option<&PathBuf>) -> Result<FileConfig, String> {
    let path = explicit
        .cloned()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
        .or_else(|| {
            let p = PathBuf::from(DEFAULT_CONFIG);
            p.is_file().then_some(p)
        });
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
}

fn configure_pool(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let file_cfg = load_file_config(cli.config.as_ref())?;
    match cli.command {
        Command::Scan(args) => cmd_scan(args, file_cfg),
        Command::Bench(args) => cmd_bench(args, file_cfg),
        Command::Explain { rule } => cmd_explain(&rule),
    }
}

fn read_opt_file(path: &Option<PathBuf>, what: &str) -> Result<Option<String>, String> {
    match path {
        None => Ok(None),
        Some(p) => std::fs::read_to_string(p)
            .map(Some)
            .map_err(|e| format!("cannot read {what} {}: {e}", p.display())),
    }
}

fn cmd_scan(args: ScanArgs, file_cfg: FileConfig) -> Result<ExitCode, String> {
    configure_pool(args.jobs.or(file_cfg.jobs));
    let format: OutputFormat = args
        .format
        .or(file_cfg.format)
        .as_deref()
        .unwrap_or("text")
        .parse()?;
    let catalog_path = args.catalog.clone().or(file_cfg.catalog);
    let annotations_path = args.annotations.clone().or(file_cfg.annotations);
    let opts = ScanOptions {
        paths: args.paths,
        rules: RuleConfig {
            refined: args.refined || file_cfg.refined,
            extended_r2: args.extended_r2 || file_cfg.extended_r2,
            deep_pointers: args.deep_pointers || file_cfg.deep_pointers,
        },
        frontend: FrontendOptions {
            defines: file_cfg.frontend.defines,
            prefer_else_branch: file_cfg.frontend.prefer_else_branch,
        },
        catalog_text: read_opt_file(&catalog_path, "catalog")?,
        catalog_path: catalog_path.map(|p| p.display().to_string()),
        annotations_text: read_opt_file(&annotations_path, "annotations")?,
        annotations_path: annotations_path.map(|p| p.display().to_string()),
        format,
        timing: args.timing,
        dump_flows: args.dump_flows,
    };
    let outcome = match run_scan(&opts) {
        Ok(o) => o,
        Err(ScanError::Usage(m)) => return Err(m),
        Err(e) => return Err(e.to_string()),
    };
    let mut buf: Vec<u8> = Vec::new();
    for dump in &outcome.flow_dumps {
        buf.extend_from_slice(dump.as_bytes());
    }
    emit(&outcome.report, format, &mut buf).map_err(|e| e.to_string())?;
    match &args.output {
        Some(p) => std::fs::write(p, &buf).map_err(|e| e.to_string())?,
        None => {
            std::io::stdout()
                .write_all(&buf)
                .map_err(|e| e.to_string())?;
        }
    }
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ExitCode::from(outcome.report.exit_code() as u8))
}

fn cmd_bench(args: BenchArgs, file_cfg: FileConfig) -> Result<ExitCode, String> {
    configure_pool(args.jobs.or(file_cfg.jobs));
    let rules = RuleConfig {
        refined: args.refined || file_cfg.refined,
        extended_r2: args.extended_r2 || file_cfg.extended_r2,
        deep_pointers: args.deep_pointers || file_cfg.deep_pointers,
    };
    let frontend = FrontendOptions {
        defines: file_cfg.frontend.defines,
        prefer_else_branch: file_cfg.frontend.prefer_else_branch,
    };
    let outcome = run_bench(&args.corpus, &rules, &frontend).map_err(|e| e.to_string())?;
    println!(
        "corpus: {} cases ({} with issues, {} clean)",
        outcome.cases,
        outcome.cases - outcome.clean_cases,
        outcome.clean_cases
    );
    println!(
        "mode: {}{}{}",
        if rules.refined { "refined" } else { "baseline" },
        if rules.extended_r2 { " +extended-r2" } else { "" },
        if rules.deep_pointers { " +deep-pointers" } else { "" },
    );
    println!();
    print!("{}", metrics_table(&outcome.metrics));
    println!();
    println!(
        "note: the bundled corpus is a reconstruction; reference precision/recall values are \
         targets with tolerance rather than exact oracles."
    );
    if let Some(dir) = &args.csv {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("metrics.csv"), metrics_csv(&outcome.metrics))
            .map_err(|e| e.to_string())?;
        std::fs::write(dir.join("timing.csv"), timing_csv(&outcome.timings))
            .map_err(|e| e.to_string())?;
        println!("csv written to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_explain(rule: &str) -> Result<ExitCode, String> {
    let id = RuleId::parse(rule)
        .ok_or_else(|| format!("unknown rule {rule}; expected BP-R1, BP-R2 or BP-R3"))?;
    let doc = explain(id);
    println!("{id}: {}", doc.title);
    println!();
    println!("{}", doc.description);
    println!();
    println!("fix: {}", doc.fix);
    Ok(ExitCode::SUCCESS)
}
