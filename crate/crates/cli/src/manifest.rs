//! Run manifests: enough provenance to reproduce any output directory.
//!
//! Every subcommand stamps a `manifest.json` (or `<file>.manifest.json` for
//! single-file outputs) holding the tool version, the effective
//! configuration and its hash, a SHA-256 stamp of every input read and
//! every file written, plus free-form notes (counts, shortfalls, loss
//! curves). Manifests contain no timestamps, so repeating a run with the
//! same inputs reproduces them byte for byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cqa_core::util::{atomic_write, file_sha256_hex, sha256_hex};

use crate::failure::{data_msg, FailCtx, Failure};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// Tool name and version, e.g. `cqa 0.1.0`.
    pub tool: String,
    pub subcommand: String,
    /// Effective configuration after merging config file and flags.
    pub config: serde_json::Value,
    pub config_sha256: String,
    /// Role -> input file stamp.
    pub inputs: BTreeMap<String, FileStamp>,
    /// Output file name -> content hash.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(subcommand: &str, config: serde_json::Value) -> Self {
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        Manifest {
            tool: format!("cqa {}", env!("CARGO_PKG_VERSION")),
            subcommand: subcommand.to_owned(),
            config,
            config_sha256,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    /// Hashes and records one input file under a role name.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<(), Failure> {
        let sha256 =
            file_sha256_hex(path).or_data(|| format!("reading input {}", path.display()))?;
        self.inputs
            .insert(role.to_owned(), FileStamp { path: path.display().to_string(), sha256 });
        Ok(())
    }

    /// Records the standard files of a split directory (dictionaries are
    /// optional on disk and skipped when absent).
    pub fn add_split_inputs(&mut self, dir: &Path) -> Result<(), Failure> {
        for name in ["train.txt", "valid.txt", "test.txt"] {
            self.add_input(&format!("split/{name}"), &dir.join(name))?;
        }
        for name in ["entities.dict", "relations.dict"] {
            let path = dir.join(name);
            if path.exists() {
                self.add_input(&format!("split/{name}"), &path)?;
            }
        }
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: serde_json::Value) {
        self.notes.insert(key.to_owned(), value);
    }

    /// Atomically writes one output file and records its hash.
    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<(), Failure> {
        atomic_write(path, |w| w.write_all(bytes))
            .or_data(|| format!("writing {}", path.display()))?;
        self.outputs.insert(file_name(path), sha256_hex(bytes));
        Ok(())
    }

    /// Records a file some other code already wrote (e.g. a checkpoint).
    pub fn record_output(&mut self, path: &Path) -> Result<(), Failure> {
        let sha256 =
            file_sha256_hex(path).or_data(|| format!("hashing output {}", path.display()))?;
        self.outputs.insert(file_name(path), sha256);
        Ok(())
    }

    /// Saves as `manifest.json` inside an output directory.
    pub fn save_in_dir(&self, dir: &Path) -> Result<(), Failure> {
        self.save_at(&dir.join("manifest.json"))
    }

    /// Saves as `<file name>.manifest.json` next to a single-file output.
    pub fn save_beside(&self, output: &Path) -> Result<(), Failure> {
        let name = format!("{}.manifest.json", file_name(output));
        self.save_at(&output.with_file_name(name))
    }

    fn save_at(&self, path: &Path) -> Result<(), Failure> {
        let mut body = serde_json::to_string_pretty(self)
            .or_internal(|| "serializing manifest".to_owned())?;
        body.push('\n');
        atomic_write(path, |w| w.write_all(body.as_bytes()))
            .or_data(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest, Failure> {
        let text = std::fs::read_to_string(path)
            .or_data(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).or_data(|| format!("parsing manifest {}", path.display()))
    }

    /// Checks this run's inputs against a producer manifest: any input
    /// whose file name appears among the producer's outputs must hash to
    /// the recorded value. Warns when nothing overlaps.
    pub fn verify_inputs_against(&self, producer: &Manifest, source: &Path) -> Result<(), Failure> {
        let mut checked = 0usize;
        for (role, stamp) in &self.inputs {
            let name = file_name(Path::new(&stamp.path));
            if let Some(expected) = producer.outputs.get(&name) {
                checked += 1;
                if expected != &stamp.sha256 {
                    return Err(data_msg(format!(
                        "input fingerprint mismatch for {role} ({}): manifest {} records {expected}, file hashes {}",
                        stamp.path,
                        source.display(),
                        stamp.sha256,
                    )));
                }
            }
        }
        if checked == 0 {
            eprintln!(
                "warning: no inputs overlap the outputs of {}; nothing verified",
                source.display()
            );
        } else {
            eprintln!("verified {checked} input(s) against {}", source.display());
        }
        Ok(())
    }

    /// Applies `--expect`: loads the producer manifest and verifies inputs.
    pub fn check_expectation(&self, expect: Option<&PathBuf>) -> Result<(), Failure> {
        if let Some(path) = expect {
            let producer = Manifest::load(path)?;
            self.verify_inputs_against(&producer, path)?;
        }
        Ok(())
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
