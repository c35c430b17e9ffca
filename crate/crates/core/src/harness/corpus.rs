//! On-disk corpus: one canonical graph file plus a JSON sidecar per case,
//! and a JSON-lines log of new bugs.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::generator::ConstraintLevel;
use crate::graph_model::{from_text, to_text, ComputationalGraph};
use crate::oracles::{CaseConfig, FuzzVerdict};
use crate::relaxation::BugRecord;

pub const BUG_LOG: &str = "bugs.jsonl";

/// Sidecar of a persisted case: enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub iteration: usize,
    pub level: ConstraintLevel,
    pub node_num: usize,
    pub gen_seed: u64,
    pub case_seed: u64,
    pub fingerprint: String,
    pub case: CaseConfig,
    pub verdict: FuzzVerdict,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

pub struct Corpus {
    dir: PathBuf,
}

impl Corpus {
    /// Opens `dir`, creating it, and starts a fresh bug log.
    pub fn create(dir: &Path) -> Result<Self, CorpusError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log = dir.join(BUG_LOG);
        fs::write(&log, "").map_err(io_err(&log))?;
        Ok(Corpus { dir: dir.to_path_buf() })
    }

    /// Opens `dir`, creating it, keeping any existing bug log.
    pub fn open(dir: &Path) -> Result<Self, CorpusError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Corpus { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `<stem>.graph` and `<stem>.json`; returns the graph file name.
    pub fn write_case(&self, stem: &str, g: &ComputationalGraph, record: &CaseRecord) -> Result<String, CorpusError> {
        let graph_file = format!("{stem}.graph");
        let gp = self.dir.join(&graph_file);
        fs::write(&gp, to_text(g)).map_err(io_err(&gp))?;
        let jp = self.dir.join(format!("{stem}.json"));
        let mut json = serde_json::to_string_pretty(record).expect("case records serialize");
        json.push('\n');
        fs::write(&jp, json).map_err(io_err(&jp))?;
        Ok(graph_file)
    }

    pub fn append_bug(&self, bug: &BugRecord) -> Result<(), CorpusError> {
        let path = self.dir.join(BUG_LOG);
        let mut f = OpenOptions::new().append(true).create(true).open(&path).map_err(io_err(&path))?;
        let mut line = serde_json::to_string(bug).expect("bug records serialize");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io_err(&path))
    }
}

/// Loads a case from either its `.graph` or its `.json` file.
pub fn load_case(path: &Path) -> Result<(ComputationalGraph, CaseRecord), CorpusError> {
    let gp = path.with_extension("graph");
    let jp = path.with_extension("json");
    let text = fs::read_to_string(&gp).map_err(io_err(&gp))?;
    let g = from_text(&text).map_err(|e| CorpusError::Malformed { path: gp.clone(), message: e.to_string() })?;
    let json = fs::read_to_string(&jp).map_err(io_err(&jp))?;
    let record = serde_json::from_str(&json).map_err(|e| CorpusError::Malformed { path: jp, message: e.to_string() })?;
    Ok((g, record))
}

/// Reads the bug log of a corpus directory.
pub fn read_bug_log(dir: &Path) -> Result<Vec<BugRecord>, CorpusError> {
    let path = dir.join(BUG_LOG);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| CorpusError::Malformed { path: path.clone(), message: e.to_string() }))
        .collect()
}
