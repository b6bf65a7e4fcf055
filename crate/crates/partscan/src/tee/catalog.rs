//! Classification tables for the security-relevant API surface.
//!
//! Five categories drive node tagging in the data-flow graphs: encryption
//! functions, memory-copy functions, allocators, memory comparators, and
//! variadic formatters. A built-in GlobalPlatform/libc table ships by
//! default; a TOML config can extend or override every category.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Argument positions of a memory-copy function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopySig {
    pub dest: usize,
    pub src: usize,
    pub len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocSig {
    pub size: usize,
}

/// Argument positions of a variadic formatter such as `snprintf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FmtSig {
    pub dest: usize,
    pub len: Option<usize>,
    /// Index of the first variadic argument (after the format string).
    pub variadic: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCatalog {
    pub enc_fns: BTreeSet<String>,
    pub copy_fns: BTreeMap<String, CopySig>,
    pub alloc_fns: BTreeMap<String, AllocSig>,
    pub cmp_fns: BTreeSet<String>,
    pub fmt_fns: BTreeMap<String, FmtSig>,
    /// Names added or overridden by user config (see [`validate_arity`]).
    #[serde(default)]
    user_entries: BTreeSet<String>,
}

impl Default for ApiCatalog {
    fn default() -> Self {
        let mut copy_fns = BTreeMap::new();
        copy_fns.insert(
            "TEE_MemMove".to_string(),
            CopySig {
                dest: 0,
                src: 1,
                len: Some(2),
            },
        );
        copy_fns.insert(
            "memcpy".to_string(),
            CopySig {
                dest: 0,
                src: 1,
                len: Some(2),
            },
        );
        copy_fns.insert(
            "strcpy".to_string(),
            CopySig {
                dest: 0,
                src: 1,
                len: None,
            },
        );
        copy_fns.insert(
            "strncpy".to_string(),
            CopySig {
                dest: 0,
                src: 1,
                len: Some(2),
            },
        );
        let mut alloc_fns = BTreeMap::new();
        alloc_fns.insert("TEE_Malloc".to_string(), AllocSig { size: 0 });
        alloc_fns.insert("malloc".to_string(), AllocSig { size: 0 });
        alloc_fns.insert("calloc".to_string(), AllocSig { size: 1 });
        let mut fmt_fns = BTreeMap::new();
        fmt_fns.insert(
            "snprintf".to_string(),
            FmtSig {
                dest: 0,
                len: Some(1),
                variadic: 3,
            },
        );
        fmt_fns.insert(
            "sprintf".to_string(),
            FmtSig {
                dest: 0,
                len: None,
                variadic: 2,
            },
        );
        ApiCatalog {
            enc_fns: ["TEE_CipherUpdate", "TEE_CipherDoFinal", "TEE_AsymmetricEncrypt"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            copy_fns,
            alloc_fns,
            cmp_fns: ["TEE_MemCompare", "memcmp"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            fmt_fns,
            user_entries: BTreeSet::new(),
        }
    }
}

impl ApiCatalog {
    pub fn copy_sig(&self, name: &str) -> Option<&CopySig> {
        self.copy_fns.get(name)
    }

    pub fn alloc_sig(&self, name: &str) -> Option<&AllocSig> {
        self.alloc_fns.get(name)
    }

    pub fn fmt_sig(&self, name: &str) -> Option<&FmtSig> {
        self.fmt_fns.get(name)
    }

    pub fn is_enc(&self, name: &str) -> bool {
        self.enc_fns.contains(name)
    }

    pub fn is_cmp(&self, name: &str) -> bool {
        self.cmp_fns.contains(name)
    }

    /// Names of catalog entries added or changed by user config, used for
    /// scan-time arity validation.
    pub fn user_entries(&self) -> &BTreeSet<String> {
        &self.user_entries
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed catalog config: {0}")]
    Malformed(String),
    #[error("catalog entry {function}: argument index {index} out of range for {arity}-argument function declared at {loc}")]
    BadArgumentIndex {
        function: String,
        index: usize,
        arity: usize,
        loc: String,
    },
}

/// Serde mirror of the five config sections. Unknown section names are
/// rejected so typos surface as errors.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogConfig {
    #[serde(default)]
    enc: FnList,
    #[serde(default)]
    copy: BTreeMap<String, CopySig>,
    #[serde(default)]
    alloc: BTreeMap<String, AllocSig>,
    #[serde(default)]
    cmp: FnList,
    #[serde(default)]
    fmt: BTreeMap<String, FmtSig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FnList {
    #[serde(default)]
    functions: Vec<String>,
}

/// Builds the catalog: defaults merged with user additions. User entries may
/// extend a category or override a default signature.
pub fn load_catalog(config: Option<&str>) -> Result<ApiCatalog, ConfigError> {
    let mut catalog = ApiCatalog::default();
    let Some(text) = config else {
        return Ok(catalog);
    };
    let parsed: CatalogConfig =
        toml::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    for f in parsed.enc.functions {
        catalog.user_entries.insert(f.clone());
        catalog.enc_fns.insert(f);
    }
    for f in parsed.cmp.functions {
        catalog.user_entries.insert(f.clone());
        catalog.cmp_fns.insert(f);
    }
    for (name, sig) in parsed.copy {
        catalog.user_entries.insert(name.clone());
        catalog.copy_fns.insert(name, sig);
    }
    for (name, sig) in parsed.alloc {
        catalog.user_entries.insert(name.clone());
        catalog.alloc_fns.insert(name, sig);
    }
    for (name, sig) in parsed.fmt {
        catalog.user_entries.insert(name.clone());
        catalog.fmt_fns.insert(name, sig);
    }
    Ok(catalog)
}

/// Verifies user-supplied argument indices against functions actually
/// defined in the scanned code; arity is only known at scan time.
pub fn validate_arity(
    catalog: &ApiCatalog,
    asts: &[crate::frontend::Ast],
) -> Result<(), ConfigError> {
    for ast in asts {
        for f in &ast.functions {
            if !catalog.user_entries.contains(&f.name) || f.variadic {
                continue;
            }
            let arity = f.params.len();
            let check = |index: usize| -> Result<(), ConfigError> {
                if index >= arity {
                    return Err(ConfigError::BadArgumentIndex {
                        function: f.name.clone(),
                        index,
                        arity,
                        loc: format!("{}", f.loc),
                    });
                }
                Ok(())
            };
            if let Some(sig) = catalog.copy_fns.get(&f.name) {
                check(sig.dest)?;
                check(sig.src)?;
                if let Some(l) = sig.len {
                    check(l)?;
                }
            }
            if let Some(sig) = catalog.alloc_fns.get(&f.name) {
                check(sig.size)?;
            }
            if let Some(sig) = catalog.fmt_fns.get(&f.name) {
                check(sig.dest)?;
                if let Some(l) = sig.len {
                    check(l)?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, FrontendOptions, SourceUnit};

    #[test]
    fn default_catalog_has_memmove_signature() {
        let catalog = load_catalog(None).unwrap();
        assert_eq!(
            catalog.copy_sig("TEE_MemMove"),
            Some(&CopySig {
                dest: 0,
                src: 1,
                len: Some(2)
            })
        );
        assert!(catalog.is_enc("TEE_CipherUpdate"));
        assert!(catalog.is_cmp("TEE_MemCompare"));
        assert_eq!(catalog.fmt_sig("snprintf").unwrap().variadic, 3);
    }

    #[test]
    fn user_config_extends_defaults() {
        let catalog = load_catalog(Some("[enc]\nfunctions = [\"my_seal\"]\n")).unwrap();
        assert!(catalog.is_enc("my_seal"));
        assert!(catalog.is_enc("TEE_CipherUpdate"));
    }

    #[test]
    fn unknown_category_rejected() {
        let err = load_catalog(Some("[shred]\nfunctions = [\"x\"]\n"));
        assert!(matches!(err, Err(ConfigError::Malformed(_))));
    }

    #[test]
    fn arity_mismatch_detected_at_scan_time() {
        let catalog = load_catalog(Some("[copy]\nmy_copy3 = { dest = 5, src = 1, len = 2 }\n"))
            .unwrap();
        let ast = parse_source(
            SourceUnit::new(
                "x.c",
                "void my_copy3(char *a, char *b, int n)\n{\n    memcpy(a, b, n);\n}\n".into(),
            ),
            &FrontendOptions::default(),
        );
        let err = validate_arity(&catalog, &[ast]);
        assert!(matches!(err, Err(ConfigError::BadArgumentIndex { index: 5, .. })));
    }

    #[test]
    fn default_entries_not_arity_checked() {
        // A local 2-arg function shadowing a default name must not error.
        let catalog = load_catalog(None).unwrap();
        let ast = parse_source(
            SourceUnit::new("x.c", "void memcpy(char *a, char *b)\n{\n}\n".into()),
            &FrontendOptions::default(),
        );
        assert!(validate_arity(&catalog, &[ast]).is_ok());
    }
}
