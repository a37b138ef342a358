use std::fs;
use std::path::Path;

use chancert::sdp::Tolerances;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Top-level JSON document written to stdout by every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    /// Arguments after the program name.
    pub command: Vec<String>,
    /// SHA-256 over the length-prefixed contents of every input, in read order.
    pub input_digest: String,
    pub verdict: Option<String>,
    pub results: serde_json::Value,
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

/// What a command produced before it is wrapped into a [`Report`].
pub struct Outcome {
    pub verdict: Option<Verdict>,
    pub results: serde_json::Value,
}

pub struct Verdict {
    pub label: &'static str,
    /// Negative verdicts exit with status 1.
    pub positive: bool,
}

impl Verdict {
    pub fn positive(label: &'static str) -> Option<Self> {
        Some(Self { label, positive: true })
    }

    pub fn negative(label: &'static str) -> Option<Self> {
        Some(Self { label, positive: false })
    }

    pub fn either(ok: bool, yes: &'static str, no: &'static str) -> Option<Self> {
        if ok {
            Self::positive(yes)
        } else {
            Self::negative(no)
        }
    }
}

/// Reads inputs while accumulating their digest.
pub struct Inputs {
    hasher: Sha256,
}

impl Default for Inputs {
    fn default() -> Self {
        Self { hasher: Sha256::new() }
    }
}

impl Inputs {
    fn absorb(&mut self, text: &str) {
        self.hasher.update((text.len() as u64).to_le_bytes());
        self.hasher.update(text.as_bytes());
    }

    pub fn parse_file<T: DeserializeOwned>(&mut self, path: &Path, what: &'static str) -> CliResult<T> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.absorb(&text);
        parse_text(&text, what, &path.display().to_string())
    }

    /// Inline JSON when `arg` starts with `{` or `[`, a file path otherwise.
    pub fn parse_arg<T: DeserializeOwned>(&mut self, arg: &str, what: &'static str) -> CliResult<T> {
        let trimmed = arg.trim_start();
        if trimmed.starts_with('{') || trimmed.starts_with('[') {
            self.absorb(arg);
            parse_text(arg, what, "command line")
        } else {
            self.parse_file(Path::new(arg), what)
        }
    }

    pub fn digest(self) -> String {
        self.hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_text<T: DeserializeOwned>(text: &str, what: &'static str, origin: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        what,
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn report_round_trips() {
        let report = Report {
            command: vec!["check-jm".into(), "family.json".into()],
            input_digest: Inputs::default().digest(),
            verdict: Some("incompatible".into()),
            results: json!({ "margin": -0.1035533905932738, "tiny": 1.7584303869641514e-11, "nested": [1, 2.5, null] }),
            tolerances: Tolerances::uniform(1e-6),
            wall_time_seconds: Some(0.125),
        };
        let text = serde_json::to_string_pretty(&report).unwrap();
        assert_eq!(serde_json::from_str::<Report>(&text).unwrap(), report);
        let untimed = Report {
            wall_time_seconds: None,
            ..report
        };
        let text = serde_json::to_string(&untimed).unwrap();
        assert!(!text.contains("wallTimeSeconds"));
        assert_eq!(serde_json::from_str::<Report>(&text).unwrap(), untimed);
    }

    #[test]
    fn digest_depends_on_content_and_boundaries() {
        let digest = |parts: &[&str]| {
            let mut i = Inputs::default();
            parts.iter().for_each(|p| i.absorb(p));
            i.digest()
        };
        assert_eq!(digest(&["ab", "c"]), digest(&["ab", "c"]));
        assert_ne!(digest(&["ab", "c"]), digest(&["a", "bc"]));
        assert_eq!(
            digest(&[]),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
