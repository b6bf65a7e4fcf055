//! Findings and report emission: text, JSON, and SARIF 2.1.0.
//!
//! Reports are byte-deterministic for fixed inputs and config: findings are
//! sorted, maps are ordered, and timing is only included when explicitly
//! requested.

pub mod sarif;

use crate::loc::Loc;
use crate::rules::RuleId;
use crate::tee::ParamRole;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Refinement filter that suppressed a finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterId {
    F1,
    F2,
    F3,
}

impl std::fmt::Display for FilterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FilterId::F1 => f.write_str("F1"),
            FilterId::F2 => f.write_str("F2"),
            FilterId::F3 => f.write_str("F3"),
        }
    }
}

/// One rule violation anchored at a statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub rule: RuleId,
    pub location: Loc,
    pub entry_function: String,
    pub param_index: usize,
    pub param_role: ParamRole,
    #[serde(default)]
    pub command_id: Option<u64>,
    pub message: String,
    /// Locations from a data source to the flagged statement.
    pub trace: Vec<Loc>,
    #[serde(default)]
    pub suppressed_by: Option<FilterId>,
}

impl Finding {
    pub fn sort_key(&self) -> (String, u32, u32, RuleId) {
        (
            self.location.file.clone(),
            self.location.line,
            self.location.col,
            self.rule,
        )
    }

    pub fn is_active(&self) -> bool {
        self.suppressed_by.is_none()
    }
}

/// Echo of the configuration that produced a report. Parallelism is not
/// part of the echo: it never changes the output bytes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub paths: Vec<String>,
    pub refined: bool,
    pub extended_r2: bool,
    pub deep_pointers: bool,
    pub format: String,
    #[serde(default)]
    pub catalog: Option<String>,
    #[serde(default)]
    pub annotations: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub parse_ms: u64,
    pub flow_build_ms: u64,
    pub rule_match_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub tool: String,
    pub version: String,
    pub config: ConfigEcho,
    /// Sorted by (file, line, column, rule).
    pub findings: Vec<Finding>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingBreakdown>,
}

impl ScanReport {
    pub fn new(config: ConfigEcho) -> Self {
        ScanReport {
            tool: "partscan".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            findings: Vec::new(),
            warnings: Vec::new(),
            timing: None,
        }
    }

    pub fn active_findings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.is_active())
    }

    /// Exit code contract: 0 = clean, 1 = findings present.
    pub fn exit_code(&self) -> i32 {
        if self.active_findings().next().is_some() {
            1
        } else {
            0
        }
    }

    pub fn sort(&mut self) {
        self.findings.sort_by_key(|f| f.sort_key());
        self.warnings.sort();
        self.warnings.dedup();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    Sarif,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            "sarif" => Ok(OutputFormat::Sarif),
            other => Err(format!("unknown format {other}")),
        }
    }
}

/// Writes the report in the requested format.
pub fn emit(report: &ScanReport, format: OutputFormat, w: &mut impl Write) -> io::Result<()> {
    match format {
        OutputFormat::Text => emit_text(report, w),
        OutputFormat::Json => {
            let s = serde_json::to_string_pretty(report)?;
            writeln!(w, "{s}")
        }
        OutputFormat::Sarif => {
            let doc = sarif::to_sarif(report);
            let s = serde_json::to_string_pretty(&doc)?;
            writeln!(w, "{s}")
        }
    }
}

fn emit_text(report: &ScanReport, w: &mut impl Write) -> io::Result<()> {
    for f in report.active_findings() {
        writeln!(w, "{} {} {}", f.rule, f.location, f.message)?;
    }
    for f in report.findings.iter().filter(|f| !f.is_active()) {
        let filter = f.suppressed_by.expect("inactive finding has a filter");
        writeln!(w, "suppressed({filter}) {} {} {}", f.rule, f.location, f.message)?;
    }
    let n = report.active_findings().count();
    writeln!(w, "{} finding{}", n, if n == 1 { "" } else { "s" })?;
    if let Some(t) = &report.timing {
        writeln!(
            w,
            "timing: parse {} ms, flow build {} ms, rule match {} ms",
            t.parse_ms, t.flow_build_ms, t.rule_match_ms
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_finding(file: &str, line: u32, rule: RuleId) -> Finding {
        Finding {
            rule,
            location: Loc::new(file, line, 1),
            entry_function: "TA_InvokeCommandEntryPoint".into(),
            param_index: 1,
            param_role: ParamRole::Input,
            command_id: None,
            message: "input buffer used in memory copy without bounds check (param 1)".into(),
            trace: vec![Loc::new(file, line, 18), Loc::new(file, line, 1)],
            suppressed_by: None,
        }
    }

    #[test]
    fn text_line_format() {
        let mut r = ScanReport::new(ConfigEcho::default());
        r.findings.push(sample_finding("ta.c", 3, RuleId::BpR2));
        let mut out = Vec::new();
        emit(&r, OutputFormat::Text, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "BP-R2 ta.c:3:1 input buffer used in memory copy without bounds check (param 1)"
        );
        assert_eq!(text.lines().last().unwrap(), "1 finding");
    }

    #[test]
    fn empty_report_text_and_json_and_sarif() {
        let r = ScanReport::new(ConfigEcho::default());
        let mut out = Vec::new();
        emit(&r, OutputFormat::Text, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0 findings\n");

        let mut out = Vec::new();
        emit(&r, OutputFormat::Json, &mut out).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["findings"].as_array().unwrap().len(), 0);

        let mut out = Vec::new();
        emit(&r, OutputFormat::Sarif, &mut out).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        sarif::validate_sarif(&v).unwrap();
        assert_eq!(v["runs"][0]["results"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn findings_serialized_in_location_order() {
        let mut r = ScanReport::new(ConfigEcho::default());
        r.findings.push(sample_finding("b.c", 9, RuleId::BpR3));
        r.findings.push(sample_finding("a.c", 12, RuleId::BpR1));
        r.findings.push(sample_finding("a.c", 2, RuleId::BpR2));
        r.sort();
        let keys: Vec<(String, u32)> = r
            .findings
            .iter()
            .map(|f| (f.location.file.clone(), f.location.line))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("a.c".to_string(), 2),
                ("a.c".to_string(), 12),
                ("b.c".to_string(), 9)
            ]
        );
    }

    #[test]
    fn json_round_trips() {
        let mut r = ScanReport::new(ConfigEcho {
            paths: vec!["fixtures/fig4".into()],
            refined: true,
            format: "json".into(),
            ..Default::default()
        });
        r.findings.push(sample_finding("ta.c", 3, RuleId::BpR2));
        r.findings.push(Finding {
            suppressed_by: Some(FilterId::F1),
            ..sample_finding("ta.c", 7, RuleId::BpR1)
        });
        r.warnings.push("param 3 of f unclassified".into());
        let json = serde_json::to_string(&r).unwrap();
        let back: ScanReport = serde_json::from_str(&json).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn suppressed_findings_do_not_count() {
        let mut r = ScanReport::new(ConfigEcho::default());
        r.findings.push(Finding {
            suppressed_by: Some(FilterId::F3),
            ..sample_finding("ta.c", 2, RuleId::BpR3)
        });
        assert_eq!(r.exit_code(), 0);
        let mut out = Vec::new();
        emit(&r, OutputFormat::Text, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("suppressed(F3) BP-R3 ta.c:2:1"));
        assert!(text.ends_with("0 findings\n"));
    }
}
