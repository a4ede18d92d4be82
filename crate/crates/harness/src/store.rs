//! Append-only log of reviewer verdicts. Each line is one [`ReviewLabel`];
//! the latest line for a case is its active verdict and earlier lines stay as
//! history.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use qcseg::qc::{HumanLabels, QcLabel};
use qcseg::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Erroneous,
}

impl From<Verdict> for QcLabel {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Good => QcLabel::Accurate,
            Verdict::Erroneous => QcLabel::Erroneous,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewLabel {
    pub case_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub reviewer: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

pub fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub struct LabelStore {
    path: PathBuf,
    file: File,
    history: Vec<ReviewLabel>,
    active: BTreeMap<String, usize>,
}

impl LabelStore {
    /// Open (creating if needed) and replay the log.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut history = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let label: ReviewLabel = serde_json::from_str(line)
                .map_err(|e| Error::format(path.display().to_string(), format!("line {}: {e}", i + 1)))?;
            history.push(label);
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        let mut store = Self { path: path.to_path_buf(), file, history: Vec::new(), active: BTreeMap::new() };
        for l in history {
            store.index(l);
        }
        Ok(store)
    }

    fn index(&mut self, label: ReviewLabel) {
        self.active.insert(label.case_id.clone(), self.history.len());
        self.history.push(label);
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Persist one verdict before it becomes visible.
    pub fn append(&mut self, label: ReviewLabel) -> Result<()> {
        let mut line = serde_json::to_string(&label)?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))?;
        self.index(label);
        Ok(())
    }

    pub fn get(&self, case_id: &str) -> Option<&ReviewLabel> {
        self.active.get(case_id).map(|&i| &self.history[i])
    }

    pub fn history(&self) -> &[ReviewLabel] {
        &self.history
    }

    /// Active verdict per case.
    pub fn active(&self) -> impl Iterator<Item = &ReviewLabel> {
        self.active.values().map(|&i| &self.history[i])
    }

    pub fn human_labels(&self) -> HumanLabels {
        self.active().map(|l| (l.case_id.clone(), l.verdict.into())).collect()
    }
}
