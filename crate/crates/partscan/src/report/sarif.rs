//! SARIF 2.1.0 emission and an in-repo structural validator.

use super::{Finding, ScanReport};
use crate::loc::Loc;
use crate::rules::{explain, RuleId};
use serde::{Deserialize, Serialize};

const SARIF_VERSION: &str = "2.1.0";
const SARIF_SCHEMA: &str =
    "https://docs.oasis-open.org/sarif/sarif/v2.1.0/errata01/os/schemas/sarif-schema-2.1.0.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifReport {
    #[serde(rename = "$schema")]
    pub schema: String,
    pub version: String,
    pub runs: Vec<SarifRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifRun {
    pub tool: SarifTool,
    pub results: Vec<SarifResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifTool {
    pub driver: SarifDriver,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifDriver {
    pub name: String,
    pub version: String,
    pub rules: Vec<SarifRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifRule {
    pub id: String,
    pub name: String,
    #[serde(rename = "shortDescription")]
    pub short_description: SarifMessage,
    #[serde(rename = "fullDescription")]
    pub full_description: SarifMessage,
    pub help: SarifMessage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifMessage {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifResult {
    #[serde(rename = "ruleId")]
    pub rule_id: String,
    pub level: String,
    pub message: SarifMessage,
    pub locations: Vec<SarifLocation>,
    #[serde(rename = "codeFlows", skip_serializing_if = "Vec::is_empty", default)]
    pub code_flows: Vec<SarifCodeFlow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub suppressions: Vec<SarifSuppression>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifLocation {
    #[serde(rename = "physicalLocation")]
    pub physical_location: SarifPhysicalLocation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifPhysicalLocation {
    #[serde(rename = "artifactLocation")]
    pub artifact_location: SarifArtifactLocation,
    pub region: SarifRegion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifArtifactLocation {
    pub uri: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifRegion {
    #[serde(rename = "startLine")]
    pub start_line: u32,
    #[serde(rename = "startColumn")]
    pub start_column: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifCodeFlow {
    #[serde(rename = "threadFlows")]
    pub thread_flows: Vec<SarifThreadFlow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifThreadFlow {
    pub locations: Vec<SarifThreadFlowLocation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifThreadFlowLocation {
    pub location: SarifLocation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SarifSuppression {
    pub kind: String,
    pub justification: String,
}

fn location_of(loc: &Loc) -> SarifLocation {
    SarifLocation {
        physical_location: SarifPhysicalLocation {
            artifact_location: SarifArtifactLocation {
                uri: loc.file.clone(),
            },
            region: SarifRegion {
                start_line: loc.line,
                start_column: loc.col,
            },
        },
    }
}

fn result_of(f: &Finding) -> SarifResult {
    let code_flows = if f.trace.len() > 1 {
        vec![SarifCodeFlow {
            thread_flows: vec![SarifThreadFlow {
                locations: f
                    .trace
                    .iter()
                    .map(|l| SarifThreadFlowLocation {
                        location: location_of(l),
                    })
                    .collect(),
            }],
        }]
    } else {
        Vec::new()
    };
    let suppressions = match f.suppressed_by {
        Some(filter) => vec![SarifSuppression {
            kind: "external".to_string(),
            justification: format!("refinement filter {filter}"),
        }],
        None => Vec::new(),
    };
    SarifResult {
        rule_id: f.rule.to_string(),
        level: "warning".to_string(),
        message: SarifMessage {
            text: f.message.clone(),
        },
        locations: vec![location_of(&f.location)],
        code_flows,
        suppressions,
    }
}

pub fn to_sarif(report: &ScanReport) -> SarifReport {
    let rules = [RuleId::BpR1, RuleId::BpR2, RuleId::BpR3]
        .iter()
        .map(|r| {
            let doc = explain(*r);
            SarifRule {
                id: r.to_string(),
                name: doc.title.to_string(),
                short_description: SarifMessage {
                    text: doc.title.to_string(),
                },
                full_description: SarifMessage {
                    text: doc.description.to_string(),
                },
                help: SarifMessage {
                    text: doc.fix.to_string(),
                },
            }
        })
        .collect();
    SarifReport {
        schema: SARIF_SCHEMA.to_string(),
        version: SARIF_VERSION.to_string(),
        runs: vec![SarifRun {
            tool: SarifTool {
                driver: SarifDriver {
                    name: report.tool.clone(),
                    version: report.version.clone(),
                    rules,
                },
            },
            results: report.findings.iter().map(result_of).collect(),
        }],
    }
}

/// Structural validation of a SARIF document: the fields every consumer
/// relies on must be present and well-shaped.
pub fn validate_sarif(doc: &serde_json::Value) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    if doc.get("version").and_then(|v| v.as_str()) != Some(SARIF_VERSION) {
        errors.push(format!("version must be {SARIF_VERSION}"));
    }
    let Some(runs) = doc.get("runs").and_then(|r| r.as_array()) else {
        errors.push("runs array missing".to_string());
        return Err(errors);
    };
    if runs.is_empty() {
        errors.push("runs array empty".to_string());
    }
    for (i, run) in runs.iter().enumerate() {
        let driver = run.pointer("/tool/driver");
        if driver.is_none() {
            errors.push(format!("runs[{i}].tool.driver missing"));
            continue;
        }
        match run.pointer("/tool/driver/rules").and_then(|r| r.as_array()) {
            Some(rules) => {
                for (j, rule) in rules.iter().enumerate() {
                    if rule.get("id").and_then(|v| v.as_str()).is_none() {
                        errors.push(format!("runs[{i}].tool.driver.rules[{j}].id missing"));
                    }
                }
            }
            None => errors.push(format!("runs[{i}].tool.driver.rules missing")),
        }
        match run.get("results").and_then(|r| r.as_array()) {
            Some(results) => {
                for (j, res) in results.iter().enumerate() {
                    if res.get("ruleId").and_then(|v| v.as_str()).is_none() {
                        errors.push(format!("runs[{i}].results[{j}].ruleId missing"));
                    }
                    match res.get("locations").and_then(|l| l.as_array()) {
                        Some(locs) if !locs.is_empty() => {
                            for (k, loc) in locs.iter().enumerate() {
                                if loc
                                    .pointer("/physicalLocation/artifactLocation/uri")
                                    .is_none()
                                {
                                    errors.push(format!(
                                        "runs[{i}].results[{j}].locations[{k}] has no artifact uri"
                                    ));
                                }
                            }
                        }
                        _ => errors.push(format!("runs[{i}].results[{j}].locations empty")),
                    }
                    if res.get("message").and_then(|m| m.get("text")).is_none() {
                        errors.push(format!("runs[{i}].results[{j}].message.text missing"));
                    }
                }
            }
            None => errors.push(format!("runs[{i}].results missing")),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::ConfigEcho;
    use crate::tee::ParamRole;

    #[test]
    fn sarif_structure_is_valid() {
        let mut r = ScanReport::new(ConfigEcho::default());
        r.findings.push(Finding {
            rule: RuleId::BpR2,
            location: Loc::new("ta.c", 3, 1),
            entry_function: "e".into(),
            param_index: 1,
            param_role: ParamRole::Input,
            command_id: None,
            message: "m".into(),
            trace: vec![Loc::new("ta.c", 3, 18), Loc::new("ta.c", 3, 1)],
            suppressed_by: None,
        });
        let doc = serde_json::to_value(to_sarif(&r)).unwrap();
        validate_sarif(&doc).unwrap();
        assert_eq!(doc["runs"][0]["tool"]["driver"]["rules"].as_array().unwrap().len(), 3);
        assert_eq!(
            doc["runs"][0]["results"][0]["codeFlows"][0]["threadFlows"][0]["locations"]
                .as_array()
                .unwrap()
                .len(),
            2
        );
    }

    #[test]
    fn validator_rejects_missing_fields() {
        let doc = serde_json::json!({"version": "2.1.0", "runs": [{"tool": {}, "results": []}]});
        let errs = validate_sarif(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("tool.driver missing")));
    }
}
