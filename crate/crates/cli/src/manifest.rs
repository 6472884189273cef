//! Batch run manifests: one case per line, whitespace-separated fields
//! `case_id pred_path gt_path [lung_path]`. Blank lines and `#` comments
//! are ignored. Paths are resolved relative to the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub case_id: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub lung: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub entries: Vec<ManifestEntry>,
}

impl RunManifest {
    /// Parse and validate: case ids must be unique and every referenced
    /// path must exist.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(CliError::Validation(format!(
                    "manifest line {}: expected `case_id pred gt [lung]`, got {} fields",
                    lineno + 1,
                    fields.len()
                )));
            }
            if !seen.insert(fields[0].to_string()) {
                return Err(CliError::Validation(format!(
                    "manifest line {}: duplicate case id `{}`",
                    lineno + 1,
                    fields[0]
                )));
            }
            let resolve = |s: &str| -> PathBuf {
                let p = Path::new(s);
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base.join(p)
                }
            };
            let entry = ManifestEntry {
                case_id: fields[0].to_string(),
                pred: resolve(fields[1]),
                gt: resolve(fields[2]),
                lung: fields.get(3).map(|s| resolve(s)),
            };
            for p in [Some(&entry.pred), Some(&entry.gt), entry.lung.as_ref()]
                .into_iter()
                .flatten()
            {
                if !p.exists() {
                    return Err(CliError::Validation(format!(
                        "manifest case `{}`: file not found: {}",
                        entry.case_id,
                        p.display()
                    )));
                }
            }
            entries.push(entry);
        }
        if entries.is_empty() {
            return Err(CliError::Validation(format!(
                "manifest {} lists no cases",
                path.display()
            )));
        }
        Ok(Self { entries })
    }
}
