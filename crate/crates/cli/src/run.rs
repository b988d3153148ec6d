//! Run plumbing: exit codes, input capture, staged artifacts and manifests.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stabledrift_core::{sha256_hex, Error};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
/// A check ran to completion and its verdict failed; artifacts are written.
pub const EXIT_STATISTICAL: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ContractionFailure { .. }
            | Error::MaxIterExceeded { .. }
            | Error::EvaluationError(_)
            | Error::GridTooCoarse { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
    /// Full contents, so a manifest replays without the original files.
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    /// Arguments after the program name, `--out` removed.
    pub argv: Vec<String>,
    pub seed: u64,
    pub sub_seeds: BTreeMap<String, u64>,
    pub threads: Option<usize>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<OutputRecord>,
    pub status: String,
}

/// Reads input files, or serves them from a manifest during replay.
pub struct Inputs {
    embedded: Option<BTreeMap<String, String>>,
    used: RefCell<Vec<InputRecord>>,
}

impl Inputs {
    pub fn from_disk() -> Self {
        Inputs { embedded: None, used: RefCell::new(Vec::new()) }
    }

    pub fn from_manifest(m: &Manifest) -> Self {
        let map = m.inputs.iter().map(|r| (r.path.clone(), r.contents.clone())).collect();
        Inputs { embedded: Some(map), used: RefCell::new(Vec::new()) }
    }

    pub fn read(&self, path: &Path) -> Result<String, Failure> {
        let key = path.to_string_lossy().into_owned();
        let contents = match &self.embedded {
            Some(map) => map.get(&key).cloned().ok_or_else(|| invalid(format!("manifest does not embed input {key}")))?,
            None => std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {key}: {e}")))?,
        };
        let mut used = self.used.borrow_mut();
        if !used.iter().any(|r| r.path == key) {
            used.push(InputRecord { path: key, sha256: sha256_hex(contents.as_bytes()), contents: contents.clone() });
        }
        Ok(contents)
    }

    pub fn records(&self) -> Vec<InputRecord> {
        self.used.borrow().clone()
    }
}

/// Everything a command produces, held in memory until the run is over.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    pub sub_seeds: BTreeMap<String, u64>,
    plot_data: bool,
}

impl Artifacts {
    pub fn new(plot_data: bool) -> Self {
        Artifacts { plot_data, ..Default::default() }
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
        s.push('\n');
        self.add(name, s);
    }

    /// Two-column `x y` rows, only when plot data was requested.
    pub fn add_plot(&mut self, name: &str, rows: impl IntoIterator<Item = (f64, f64)>) {
        if self.plot_data {
            let body: String = rows.into_iter().map(|(x, y)| format!("{x:.12e} {y:.12e}\n")).collect();
            self.add(name, body);
        }
    }

    pub fn seed(&mut self, root: u64, component: &str) -> u64 {
        let s = stabledrift_core::rng::derive_seed(root, component);
        self.sub_seeds.insert(component.to_string(), s);
        s
    }

    /// Writes every artifact and the manifest into `dir`.
    pub fn commit(self, dir: &Path, mut manifest: Manifest) -> Result<(), Failure> {
        let io = |p: &Path, e: std::io::Error| invalid(format!("cannot write {}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
            manifest.outputs.push(OutputRecord { name: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        }
        manifest.sub_seeds = self.sub_seeds;
        let path = dir.join("manifest.json");
        let mut s = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        s.push('\n');
        std::fs::write(&path, s).map_err(|e| io(&path, e))
    }
}

/// Drops `--out DIR` / `--out=DIR` so the recorded argv is location-free.
pub fn strip_out(argv: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

pub fn read_manifest(path: &PathBuf) -> Result<Manifest, Failure> {
    let s = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&s).map_err(|e| invalid(format!("bad manifest {}: {e}", path.display())))?;
    for r in &m.inputs {
        if sha256_hex(r.contents.as_bytes()) != r.sha256 {
            return Err(invalid(format!("manifest input {} does not match its hash", r.path)));
        }
    }
    Ok(m)
}
