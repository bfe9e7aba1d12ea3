//! The report document and the artifacts it indexes.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The run stopped early; the artifacts hold what was recorded before.
    Incomplete,
    Error,
}

impl Status {
    /// 0 pass, 1 tolerance failure, 2 anything that kept the run from finishing.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Incomplete | Status::Error => 2,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Incomplete => "INCOMPLETE",
            Status::Error => "ERROR",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable limit, e.g. `<= 1e-8` or `-1.5 ± 0.15`.
    pub limit: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            limit: format!("<= {limit:e}"),
            pass: value <= limit,
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            limit: format!(">= {limit:e}"),
            pass: value >= limit,
        }
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Check {
        Check {
            name: name.into(),
            value,
            limit: format!("{target} ± {tol}"),
            pass: (value - target).abs() <= tol,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Check {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            limit: "true".into(),
            pass: ok,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "ok  " } else { "FAIL" };
        write!(f, "{tag} {}: {:.6e} (want {})", self.name, self.value, self.limit)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    /// The resolved spec; `4nls-lab <kind> --spec report.json` reruns it.
    pub spec: Value,
    pub spec_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub strict: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub status: Status,
    pub checks: Vec<Check>,
    pub summary: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub manifest: Manifest,
    pub result: RunResult,
    pub files: Vec<FileEntry>,
}

impl ReportDocument {
    pub fn status(&self) -> Status {
        self.result.status
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.result.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Float formatting for CSV cells: shortest round-trip scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Writes artifacts into the output directory and keeps their hashes.
pub struct Artifacts {
    dir: PathBuf,
    pub files: Vec<FileEntry>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> io::Result<Artifacts> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.into_iter().collect::<Vec<_>>())?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.write(name, &bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn checks_and_formatting() {
        assert!(Check::within("x", -1.4, -1.5, 0.15).pass);
        assert!(!Check::at_most("y", 2e-8, 1e-8).pass);
        assert!(Check::at_least("z", 0.5, 0.5).pass);
        assert_eq!(num(1e-4), "1e-4");
        assert_eq!(num(0.25).parse::<f64>().unwrap(), 0.25);
        assert_eq!(Status::Fail.exit_code(), 1);
    }
}
