//! Run directories: every artifact is listed in `manifest.json` with its
//! SHA-256, and loading re-hashes every listed file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use qcseg::models::checkpoint::{self, ARCH_FILE, CHECKPOINT_FILE};
use qcseg::models::{ArchConfig, TrainedModel};
use qcseg::phantom::io::sha256_hex;
use qcseg::pipeline::{png_bytes, Comparison, RunOutput, RunRecord};
use qcseg::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORD_FILE: &str = "record.json";
pub const MODEL_DIR: &str = "model";
pub const QC_MODEL_DIR: &str = "qc_model";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

/// Writes files under a directory and records them for the manifest.
pub struct ArtifactWriter {
    dir: PathBuf,
    files: BTreeMap<String, ManifestEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        let entry = ManifestEntry { path: rel.to_owned(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 };
        self.files.insert(rel.to_owned(), entry);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn write_model(&mut self, rel_dir: &str, model: &TrainedModel) -> Result<()> {
        self.write_json(&format!("{rel_dir}/{ARCH_FILE}"), &model.arch)?;
        self.write(&format!("{rel_dir}/{CHECKPOINT_FILE}"), &checkpoint::to_bytes(model)?)
    }

    pub fn finish(mut self) -> Result<Manifest> {
        let manifest = Manifest { files: self.files.values().cloned().collect() };
        self.files.clear();
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let p = self.dir.join(MANIFEST_FILE);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(manifest)
    }
}

/// Re-hash every file in the manifest.
pub fn verify_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_slice(&fs::read(&p).map_err(|e| Error::io(&p, e))?)?;
    for entry in &manifest.files {
        let fp = dir.join(&entry.path);
        let bytes = fs::read(&fp).map_err(|e| Error::io(&fp, e))?;
        let found = sha256_hex(&bytes);
        if found != entry.sha256 {
            return Err(Error::Checksum { path: fp, expected: entry.sha256.clone(), found });
        }
    }
    Ok(manifest)
}

fn read_rel(dir: &Path, rel: &str) -> Result<Vec<u8>> {
    let p = dir.join(rel);
    fs::read(&p).map_err(|e| Error::io(&p, e))
}

fn read_model(dir: &Path, rel_dir: &str) -> Result<TrainedModel> {
    let arch: ArchConfig = serde_json::from_slice(&read_rel(dir, &format!("{rel_dir}/{ARCH_FILE}"))?)?;
    let ckpt = format!("{rel_dir}/{CHECKPOINT_FILE}");
    checkpoint::from_bytes(&arch, &read_rel(dir, &ckpt)?).map_err(|e| match e {
        Error::Checksum { expected, found, .. } => Error::Checksum { path: dir.join(&ckpt), expected, found },
        other => other,
    })
}

pub struct SavedRun {
    pub record: RunRecord,
    pub model: TrainedModel,
    pub qc_model: Option<TrainedModel>,
    pub log: Vec<String>,
}

pub fn save_run(out: &RunOutput, dir: &Path) -> Result<Manifest> {
    let r = &out.record;
    let mut w = ArtifactWriter::new(dir)?;
    w.write_json("config.json", &r.config)?;
    w.write_json("census.json", &r.census)?;
    w.write_json(RECORD_FILE, r)?;
    w.write("metrics.csv", r.metrics.to_csv().as_bytes())?;
    let mut log = out.log.join("\n");
    log.push('\n');
    w.write("log.txt", log.as_bytes())?;
    w.write_model(MODEL_DIR, &out.model)?;
    if let Some(q) = &out.qc_model {
        w.write_model(QC_MODEL_DIR, q)?;
    }
    w.finish()
}

pub fn load_run(dir: &Path) -> Result<SavedRun> {
    let manifest = verify_manifest(dir)?;
    let record: RunRecord = serde_json::from_slice(&read_rel(dir, RECORD_FILE)?)?;
    let model = read_model(dir, MODEL_DIR)?;
    if model.checksum != record.model_checksum {
        return Err(Error::Checksum {
            path: dir.join(MODEL_DIR).join(CHECKPOINT_FILE),
            expected: record.model_checksum.clone(),
            found: model.checksum,
        });
    }
    let has_qc = manifest.files.iter().any(|f| f.path.starts_with(&format!("{QC_MODEL_DIR}/")));
    let qc_model = has_qc.then(|| read_model(dir, QC_MODEL_DIR)).transpose()?;
    if let (Some(q), Some(s)) = (&qc_model, &record.qc) {
        if q.checksum != s.model_checksum {
            return Err(Error::Checksum {
                path: dir.join(QC_MODEL_DIR).join(CHECKPOINT_FILE),
                expected: s.model_checksum.clone(),
                found: q.checksum.clone(),
            });
        }
    }
    let log = String::from_utf8_lossy(&read_rel(dir, "log.txt")?).lines().map(str::to_owned).collect();
    Ok(SavedRun { record, model, qc_model, log })
}

pub fn save_comparison(c: &Comparison, dir: &Path) -> Result<Manifest> {
    let mut w = ArtifactWriter::new(dir)?;
    w.write_json("comparison.json", c)?;
    w.write("summary.csv", c.summary_csv().as_bytes())?;
    w.write("deltas.csv", c.deltas_csv().as_bytes())?;
    w.write("dice.png", &png_bytes(&c.dice_plot())?)?;
    w.write("delta.png", &png_bytes(&c.delta_plot())?)?;
    w.finish()
}
