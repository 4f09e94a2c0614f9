//! Directory-backed dataset and model hubs with content-addressed versions.
//!
//! ```text
//! <root>/datasets/<id>/{dataset.csv, holidays.txt, meta.json}
//! <root>/models/<id>/{model.json, meta.json, train_report.json, epochs.csv}
//! <root>/predictions/<id>.{csv,json}
//! <root>/reports/
//! <root>/serving.json     active model pointer
//! <root>/events.ndjson    append-only event log
//! <root>/monitor.json     drift state and simulated clock
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ttf_core::ltv::{Day, HolidayCalendar, LtvDataset, CSV_HEADER};
use ttf_core::model::{artifact, MtFusionNet};

use crate::error::{OpsError, Result};

pub const VERSION_LEN: usize = 12;

pub fn content_id(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())[..VERSION_LEN].to_string()
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Writes to a sibling temp file, syncs, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| OpsError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| OpsError::io(&tmp, e))?;
        f.sync_all().map_err(|e| OpsError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| OpsError::io(path, e))
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| OpsError::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHubEntry {
    pub version: String,
    pub path: PathBuf,
    pub schema_fingerprint: String,
    pub created_at: String,
    pub first_date: Option<Day>,
    pub last_date: Option<Day>,
    pub provenance: serde_json::Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelStatus {
    Candidate,
    Approved,
    Retired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub mape_p: f64,
    pub mape_a: f64,
    pub records: usize,
    /// First held-out forecast origin across channels.
    pub holdout_start: Day,
}

impl ValidationMetrics {
    pub fn passing(&self) -> bool {
        self.records > 0 && self.mape_p.is_finite() && self.mape_a.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHubEntry {
    pub version: String,
    pub artifact: PathBuf,
    pub model_config_fingerprint: String,
    pub train_config_fingerprint: String,
    pub dataset_version: String,
    pub validation: ValidationMetrics,
    pub status: ModelStatus,
    pub created_at: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServingPointer {
    pub model_version: String,
    pub updated_at: String,
}

/// Where a simulated crash interrupts a pointer switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    AfterRead,
    AfterTempWrite,
}

#[derive(Clone, Debug)]
pub struct Hub {
    root: PathBuf,
}

/// Held while a mutating command runs; removed on drop.
#[derive(Debug)]
pub struct HubLock {
    path: PathBuf,
}

impl Drop for HubLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..16].to_string()
}

pub fn fingerprint<T: Serialize>(value: &T) -> String {
    fingerprint_bytes(&serde_json::to_vec(value).expect("value serialises"))
}

impl Hub {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let hub = Hub { root: root.into() };
        for dir in ["datasets", "models", "predictions", "reports"] {
            let p = hub.root.join(dir);
            fs::create_dir_all(&p).map_err(|e| OpsError::io(&p, e))?;
        }
        Ok(hub)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn lock(&self) -> Result<HubLock> {
        let path = self.root.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(HubLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default();
                Err(OpsError::Locked(format!(
                    "{} held by process {}",
                    path.display(),
                    holder.trim()
                )))
            }
            Err(e) => Err(OpsError::io(&path, e)),
        }
    }

    fn dataset_dir(&self, version: &str) -> PathBuf {
        self.root.join("datasets").join(version)
    }

    fn model_dir(&self, version: &str) -> PathBuf {
        self.root.join("models").join(version)
    }

    /// Stores the dataset under its content id. Publishing identical bytes
    /// again returns the existing entry untouched.
    pub fn publish_dataset(&self, data: &LtvDataset, provenance: serde_json::Value) -> Result<DatasetHubEntry> {
        let csv = data.to_csv_bytes()?;
        let mut holidays = Vec::new();
        data.calendar()
            .write(&mut holidays)
            .map_err(|e| OpsError::io("holidays.txt", e))?;
        let version = content_id(&[&csv, &holidays]);
        let dir = self.dataset_dir(&version);
        let meta = dir.join("meta.json");
        if meta.exists() {
            return read_json(&meta);
        }
        fs::create_dir_all(&dir).map_err(|e| OpsError::io(&dir, e))?;
        write_atomic(&dir.join("dataset.csv"), &csv)?;
        write_atomic(&dir.join("holidays.txt"), &holidays)?;
        let range = data.date_range();
        let entry = DatasetHubEntry {
            version,
            path: Path::new("datasets").join(dir.file_name().unwrap()).join("dataset.csv"),
            schema_fingerprint: fingerprint_bytes(CSV_HEADER.join(",").as_bytes()),
            created_at: now(),
            first_date: range.map(|r| r.0),
            last_date: range.map(|r| r.1),
            provenance,
        };
        write_json(&meta, &entry)?;
        Ok(entry)
    }

    pub fn dataset_entry(&self, version: &str) -> Result<DatasetHubEntry> {
        let meta = self.dataset_dir(version).join("meta.json");
        if !valid_id(version) || !meta.exists() {
            return Err(OpsError::UnknownVersion(version.to_string()));
        }
        read_json(&meta)
    }

    pub fn load_dataset(&self, version: &str) -> Result<LtvDataset> {
        self.dataset_entry(version)?;
        let dir = self.dataset_dir(version);
        let data = LtvDataset::load(dir.join("dataset.csv"))?;
        let calendar = HolidayCalendar::load(dir.join("holidays.txt"))?;
        Ok(data.with_calendar(calendar))
    }

    pub fn datasets(&self) -> Result<Vec<DatasetHubEntry>> {
        self.list("datasets", |v| self.dataset_entry(v))
    }

    /// Saves the artifact and its metadata. Re-registering an identical
    /// model keeps the existing status.
    pub fn register_model(&self, model: &MtFusionNet, mut entry: ModelHubEntry) -> Result<ModelHubEntry> {
        let version = artifact::version_id(model);
        let dir = self.model_dir(&version);
        let meta = dir.join("meta.json");
        if meta.exists() {
            return read_json(&meta);
        }
        fs::create_dir_all(&dir).map_err(|e| OpsError::io(&dir, e))?;
        write_atomic(&dir.join("model.json"), &artifact::to_bytes(model)?)?;
        entry.version = version.clone();
        entry.artifact = Path::new("models").join(&version).join("model.json");
        write_json(&meta, &entry)?;
        Ok(entry)
    }

    pub fn model_file(&self, version: &str, name: &str) -> PathBuf {
        self.model_dir(version).join(name)
    }

    pub fn model_entry(&self, version: &str) -> Result<ModelHubEntry> {
        let meta = self.model_dir(version).join("meta.json");
        if !valid_id(version) || !meta.exists() {
            return Err(OpsError::UnknownVersion(version.to_string()));
        }
        read_json(&meta)
    }

    pub fn update_model_entry(&self, entry: &ModelHubEntry) -> Result<()> {
        write_json(&self.model_dir(&entry.version).join("meta.json"), entry)
    }

    pub fn load_model(&self, version: &str) -> Result<MtFusionNet> {
        self.model_entry(version)?;
        Ok(artifact::load(self.model_dir(version).join("model.json"))?)
    }

    pub fn models(&self) -> Result<Vec<ModelHubEntry>> {
        self.list("models", |v| self.model_entry(v))
    }

    fn list<T>(&self, dir: &str, load: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
        let path = self.root.join(dir);
        let mut names: Vec<String> = fs::read_dir(&path)
            .map_err(|e| OpsError::io(&path, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        names.iter().map(|n| load(n)).collect()
    }

    pub fn serving(&self) -> Result<Option<ServingPointer>> {
        let path = self.root.join("serving.json");
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn set_serving(&self, version: &str) -> Result<ServingPointer> {
        self.set_serving_with_fault(version, None)
    }

    /// Pointer switch with an optional simulated crash. The target is
    /// checked before anything is written and the pointer only changes by
    /// rename, so a crash at either point leaves the old pointer intact.
    pub fn set_serving_with_fault(&self, version: &str, fault: Option<Fault>) -> Result<ServingPointer> {
        self.model_entry(version)?;
        let _current = self.serving()?;
        if fault == Some(Fault::AfterRead) {
            return Err(OpsError::Usage("simulated crash after pointer read".into()));
        }
        let pointer = ServingPointer {
            model_version: version.to_string(),
            updated_at: now(),
        };
        let path = self.root.join("serving.json");
        if fault == Some(Fault::AfterTempWrite) {
            let mut bytes = serde_json::to_vec_pretty(&pointer)?;
            bytes.push(b'\n');
            let tmp = temp_path(&path);
            fs::write(&tmp, bytes).map_err(|e| OpsError::io(&tmp, e))?;
            return Err(OpsError::Usage("simulated crash before pointer rename".into()));
        }
        write_json(&path, &pointer)?;
        Ok(pointer)
    }
}

/// Version ids are lowercase hex; anything else cannot name a hub entry.
fn valid_id(version: &str) -> bool {
    !version.is_empty() && version.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
}
