//! Durable call storage.
//!
//! Each call is one JSON document under `calls/`, replaced atomically on
//! every change (write to a temp file, fsync, rename). The original audio
//! bytes live under `audio/` and are never modified. Listing skips temp
//! files, so a crash mid-write leaves the previous version in place.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::queue::CallId;
use crate::record::{CallRecord, CallStatus};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("call {0} not found")]
    NotFound(CallId),
    #[error("stored record {path} is corrupt: {reason}")]
    CorruptRecord { path: PathBuf, reason: String },
    #[error("storage full")]
    StorageFull,
    #[error("storage i/o: {0}")]
    Io(io::Error),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        // ENOSPC
        if e.kind() == io::ErrorKind::StorageFull || e.raw_os_error() == Some(28) {
            StoreError::StorageFull
        } else {
            StoreError::Io(e)
        }
    }
}

#[derive(Debug, Clone)]
pub struct CallStore {
    root: PathBuf,
}

/// Result of reading every record at start-up.
#[derive(Debug, Default)]
pub struct LoadedRecords {
    pub records: Vec<CallRecord>,
    pub corrupt: Vec<StoreError>,
}

impl CallStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("calls"))?;
        fs::create_dir_all(root.join("audio"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn record_path(&self, id: &CallId) -> PathBuf {
        self.root
            .join("calls")
            .join(format!("{}.json", id.as_str()))
    }

    pub fn audio_path(&self, id: &CallId) -> PathBuf {
        self.root.join("audio").join(format!("{}.wav", id.as_str()))
    }

    /// Locator stored in records and CAD exports.
    pub fn audio_ref(id: &CallId) -> String {
        format!("audio/{}.wav", id.as_str())
    }

    pub fn put_audio(&self, id: &CallId, bytes: &[u8]) -> Result<(), StoreError> {
        write_atomic(&self.audio_path(id), bytes)
    }

    pub fn audio(&self, id: &CallId) -> Result<Vec<u8>, StoreError> {
        fs::read(self.audio_path(id)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound(id.clone()),
            _ => e.into(),
        })
    }

    pub fn persist(&self, record: &CallRecord) -> Result<(), StoreError> {
        let json = serde_json::to_vec_pretty(record).expect("records serialise");
        write_atomic(&self.record_path(&record.call_id), &json)
    }

    pub fn load(&self, id: &CallId) -> Result<CallRecord, StoreError> {
        let path = self.record_path(id);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound(id.clone()),
            _ => e.into(),
        })?;
        parse_record(&path, &bytes)
    }

    pub fn load_all(&self) -> Result<LoadedRecords, StoreError> {
        let mut out = LoadedRecords::default();
        let mut paths: Vec<PathBuf> = fs::read_dir(self.root.join("calls"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            match fs::read(&path)
                .map_err(StoreError::from)
                .and_then(|b| parse_record(&path, &b))
            {
                Ok(r) => out.records.push(r),
                Err(e) => out.corrupt.push(e),
            }
        }
        Ok(out)
    }

    /// Records in receive order, optionally filtered by status.
    pub fn list(&self, status: Option<CallStatus>) -> Result<Vec<CallRecord>, StoreError> {
        let mut records: Vec<CallRecord> = self
            .load_all()?
            .records
            .into_iter()
            .filter(|r| status.is_none_or(|s| r.status == s))
            .collect();
        records.sort_by(|a, b| (a.received_at, &a.call_id).cmp(&(b.received_at, &b.call_id)));
        Ok(records)
    }
}

fn parse_record(path: &Path, bytes: &[u8]) -> Result<CallRecord, StoreError> {
    serde_json::from_slice(bytes).map_err(|e| StoreError::CorruptRecord {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn record(id: &str) -> CallRecord {
        CallRecord::new(
            CallId::from(id),
            Utc::now(),
            id,
            CallStore::audio_ref(&CallId::from(id)),
            2.0,
        )
    }

    #[test]
    fn round_trip_and_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let store = CallStore::open(dir.path()).unwrap();
        let mut r = record("a");
        store.persist(&r).unwrap();
        r.stage_errors.push("x".into());
        store.persist(&r).unwrap();
        assert_eq!(store.load(&r.call_id).unwrap(), r);
        assert!(matches!(
            store.load(&CallId::from("zz")),
            Err(StoreError::NotFound(_))
        ));
    }

    #[test]
    fn corrupt_files_are_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let store = CallStore::open(dir.path()).unwrap();
        store.persist(&record("good")).unwrap();
        fs::write(dir.path().join("calls/bad.json"), b"{\"call_id\":").unwrap();
        fs::write(dir.path().join("calls/left.tmp"), b"partial").unwrap();
        let loaded = store.load_all().unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.corrupt.len(), 1);
        assert!(matches!(
            store.load(&CallId::from("bad")),
            Err(StoreError::CorruptRecord { .. })
        ));
    }

    #[test]
    fn list_filters_by_status() {
        let dir = tempfile::tempdir().unwrap();
        let store = CallStore::open(dir.path()).unwrap();
        store.persist(&record("a")).unwrap();
        store.persist(&record("b")).unwrap();
        assert_eq!(store.list(None).unwrap().len(), 2);
        assert_eq!(store.list(Some(CallStatus::Processing)).unwrap().len(), 2);
        assert!(store.list(Some(CallStatus::Queued)).unwrap().is_empty());
    }

    #[test]
    fn audio_bytes_kept_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let store = CallStore::open(dir.path()).unwrap();
        let id = CallId::from("a");
        store.put_audio(&id, b"RIFF....").unwrap();
        assert_eq!(store.audio(&id).unwrap(), b"RIFF....");
    }

    #[test]
    fn enospc_maps_to_storage_full() {
        let e: StoreError = io::Error::from_raw_os_error(28).into();
        assert!(matches!(e, StoreError::StorageFull));
    }
}
