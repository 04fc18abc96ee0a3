//! Provenance headers and file helpers shared by every command.
//!
//! Text artifacts start with one line `# srl-artifact <json>`; binary ones
//! carry the same JSON in their own header field.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;
const TEXT_PREFIX: &str = "# srl-artifact ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Corpus,
    CleaningReport,
    Samples,
    LabelMap,
    Encoded,
    Model,
    EpochLog,
    Metrics,
    Crossval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: Kind,
    pub version: u32,
    pub command: String,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(kind: Kind, command: &str, config: &RunConfig) -> Provenance {
        Provenance {
            kind,
            version: FORMAT_VERSION,
            command: command.to_string(),
            config: config.clone(),
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("provenance serialises")
    }

    pub fn text_line(&self) -> String {
        format!("{TEXT_PREFIX}{}\n", serde_json::to_string(self).expect("provenance serialises"))
    }

    /// Parses and checks a provenance value against the expected kind.
    pub fn check(value: &serde_json::Value, kind: Kind, path: &Path) -> Result<Provenance, CliError> {
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(CliError::Mismatch(format!(
                "{}: format version {} but this tool reads version {FORMAT_VERSION}",
                path.display(),
                version.map_or("missing".to_string(), |v| v.to_string())
            )));
        }
        let p: Provenance = serde_json::from_value(value.clone())
            .map_err(|e| CliError::artifact(path, format!("bad provenance header: {e}")))?;
        if p.kind != kind {
            return Err(CliError::Mismatch(format!(
                "{}: expected a {kind:?} artifact, found {:?}",
                path.display(),
                p.kind
            )));
        }
        Ok(p)
    }
}

/// Splits off and checks the provenance line of a text artifact. With
/// `required == false` a file without one (e.g. a raw corpus) is accepted.
pub fn split_text_header<'a>(
    text: &'a str,
    kind: Kind,
    path: &Path,
    required: bool,
) -> Result<(Option<Provenance>, &'a str), CliError> {
    match text.strip_prefix(TEXT_PREFIX) {
        Some(rest) => {
            let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
            let value: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| CliError::artifact(path, format!("bad provenance header: {e}")))?;
            Ok((Some(Provenance::check(&value, kind, path)?), body))
        }
        None if required => Err(CliError::Mismatch(format!(
            "{}: missing provenance header; expected a {kind:?} artifact",
            path.display()
        ))),
        None => Ok((None, text)),
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| CliError::artifact(path, format!("not UTF-8: {e}")))
}

pub fn check_output(path: &Path) -> Result<(), CliError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::Input(format!(
            "{}: output directory {} does not exist",
            path.display(),
            parent.display()
        )));
    }
    Ok(())
}

/// Writes through a sibling temporary file so a failed run never leaves a
/// partial output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
