//! Directory-per-session persistence.
//!
//! ```text
//! <store root>/
//!   profiles.json
//!   <session_id>/
//!     manifest.json      session metadata, file references, sync result
//!     annotations.json   per-note pre-labels and human edits
//!     keystones.json     keyboard calibration (once supplied)
//! ```
//!
//! Raw media is referenced by path and never copied. Every document is
//! replaced atomically (temp file, fsync, rename) so an acknowledged write
//! survives a crash.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::SyncResult;
use crate::fingering::{AnnotationStats, Finger, NoteAnnotation, Status};
use crate::geometry::{Calibration, GeometryError, KeyboardLayout};
use crate::midi::{FrameInterval, MidiError, NoteEvent};
use crate::skeleton::{Handedness, SkeletonError};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const KEYSTONES_FILE: &str = "keystones.json";
pub const PROFILES_FILE: &str = "profiles.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid document: {source}")]
    Document {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported schema version {found} in {path} (expected {SCHEMA_VERSION})")]
    UnsupportedSchema { path: PathBuf, found: u32 },
    #[error("session {0:?} not found")]
    SessionNotFound(String),
    #[error("note {0} not found")]
    NoteNotFound(usize),
    #[error("stale edit: expected version {expected}, stored version is {current}")]
    StaleEdit { expected: u64, current: u64 },
    #[error("session id {0:?} already exists")]
    IdCollision(String),
    #[error("invalid session id {0:?}")]
    InvalidId(String),
    #[error("incomplete session: {0}")]
    IncompleteSession(String),
    #[error("precondition failed: {0} is missing")]
    PreconditionFailed(&'static str),
    #[error("calibration: {0}")]
    Calibration(#[from] GeometryError),
    #[error("MIDI: {0}")]
    Midi(#[from] MidiError),
    #[error("skeleton: {0}")]
    Skeleton(#[from] SkeletonError),
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformerProfile {
    pub profile_id: String,
    pub display_name: String,
    pub handedness: Option<Handedness>,
    pub registered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PieceMeta {
    pub composer: Option<String>,
    pub title: Option<String>,
    #[serde(default)]
    pub tags: std::collections::BTreeMap<String, String>,
}

/// File references; relative paths resolve against the session directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FileRefs {
    pub midi: Option<String>,
    pub audio_daw: Option<String>,
    /// Audio track extracted from the video container.
    #[serde(default)]
    pub audio_video: Option<String>,
    pub video: Option<String>,
    pub skeleton: Option<String>,
    pub keystones: Option<String>,
}

impl FileRefs {
    fn entries(&self) -> [(&'static str, &Option<String>); 6] {
        [
            ("midi", &self.midi),
            ("audio_daw", &self.audio_daw),
            ("audio_video", &self.audio_video),
            ("video", &self.video),
            ("skeleton", &self.skeleton),
            ("keystones", &self.keystones),
        ]
    }
}

/// Which captured stream anchors the timeline. The video container's
/// audio is the reference; MIDI follows the DAW audio.
pub const REFERENCE_STREAM: &str = "video_audio";
pub const ALIGNED_STREAM: &str = "daw_audio";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncRecord {
    pub reference_stream: String,
    pub aligned_stream: String,
    pub lag_samples: i64,
    pub lag_s: f64,
    pub peak_correlation: f64,
    pub confidence: f64,
    pub reference_sample_rate: u32,
    pub aligned_sample_rate: u32,
    /// Shift added to MIDI times to land on the video timeline (`-lag_s`).
    pub midi_offset_s: f64,
}

impl SyncRecord {
    pub fn from_result(result: &SyncResult, aligned_sample_rate: u32) -> Self {
        Self {
            reference_stream: REFERENCE_STREAM.into(),
            aligned_stream: ALIGNED_STREAM.into(),
            lag_samples: result.lag_samples,
            lag_s: result.lag_s,
            peak_correlation: result.peak_correlation,
            confidence: result.confidence,
            reference_sample_rate: result.sample_rate,
            aligned_sample_rate,
            midi_offset_s: -result.lag_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub schema_version: u32,
    pub session_id: String,
    pub profile_id: String,
    #[serde(default)]
    pub piece: PieceMeta,
    pub files: FileRefs,
    pub fps: f64,
    pub sync: Option<SyncRecord>,
    pub annotation_state: String,
    pub created_at: DateTime<Utc>,
}

impl SessionManifest {
    /// Seconds added to MIDI times to obtain video times.
    pub fn video_offset_s(&self) -> f64 {
        self.sync.as_ref().map_or(0.0, |s| s.midi_offset_s)
    }
}

/// A manifest together with referenced files that do not exist.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedManifest {
    pub manifest: SessionManifest,
    pub missing: Vec<(&'static str, PathBuf)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub note: NoteEvent,
    pub interval: FrameInterval,
    pub annotation: NoteAnnotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDocument {
    pub schema_version: u32,
    pub session_id: String,
    pub fps: f64,
    pub video_offset_s: f64,
    pub notes: Vec<AnnotationRecord>,
}

impl AnnotationDocument {
    pub fn empty(session_id: &str, fps: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            session_id: session_id.to_string(),
            fps,
            video_offset_s: 0.0,
            notes: Vec::new(),
        }
    }

    pub fn stats(&self) -> AnnotationStats {
        crate::fingering::annotation_stats(self.notes.iter().map(|r| &r.annotation))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("annotation document serializes");
        out.push(b'\n');
        out
    }

    /// Apply a human label under optimistic versioning.
    pub fn apply_label(
        &mut self,
        note_index: usize,
        label: Finger,
        expected_version: u64,
    ) -> Result<&AnnotationRecord> {
        let record = self
            .notes
            .iter_mut()
            .find(|r| r.annotation.note_index == note_index)
            .ok_or(StoreError::NoteNotFound(note_index))?;
        let ann = &mut record.annotation;
        if ann.version != expected_version {
            return Err(StoreError::StaleEdit {
                expected: expected_version,
                current: ann.version,
            });
        }
        ann.status = if ann.auto_label() == Some(label) {
            Status::Verified
        } else {
            Status::Corrected
        };
        ann.label = Some(label);
        ann.version += 1;
        Ok(record)
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Replace `path` with `bytes` atomically and durably.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        StoreError::io(path, e)
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| StoreError::Document {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("document serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn check_schema(path: &Path, found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(StoreError::UnsupportedSchema {
            path: path.to_path_buf(),
            found,
        });
    }
    Ok(())
}

/// One session directory. Methods here do no locking; concurrent writers
/// go through [`Store`].
#[derive(Debug, Clone)]
pub struct SessionDir {
    root: PathBuf,
}

impl SessionDir {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let manifest = root.join(MANIFEST_FILE);
        if !manifest.is_file() {
            return Err(StoreError::SessionNotFound(root.display().to_string()));
        }
        Ok(Self { root })
    }

    /// Write `manifest` into `root` (created if needed) and start an empty
    /// annotation document unless one exists.
    pub fn init(root: impl Into<PathBuf>, manifest: &SessionManifest) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        write_json(&root.join(MANIFEST_FILE), manifest)?;
        let dir = Self { root };
        let ann = dir.resolve(&manifest.annotation_state);
        if !ann.exists() {
            write_atomic(
                &ann,
                &AnnotationDocument::empty(&manifest.session_id, manifest.fps).to_bytes(),
            )?;
        }
        Ok(dir)
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, reference: &str) -> PathBuf {
        let p = Path::new(reference);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn manifest(&self) -> Result<SessionManifest> {
        let path = self.root.join(MANIFEST_FILE);
        let m: SessionManifest = read_json(&path)?;
        check_schema(&path, m.schema_version)?;
        Ok(m)
    }

    /// Load the manifest and report referenced files that do not exist.
    pub fn load_checked(&self) -> Result<LoadedManifest> {
        let manifest = self.manifest()?;
        let mut missing = Vec::new();
        for (name, reference) in manifest.files.entries() {
            if let Some(r) = reference {
                let p = self.resolve(r);
                if !p.exists() {
                    missing.push((name, p));
                }
            }
        }
        let ann = self.resolve(&manifest.annotation_state);
        if !ann.exists() {
            missing.push(("annotation_state", ann));
        }
        Ok(LoadedManifest { manifest, missing })
    }

    pub fn save_manifest(&self, m: &SessionManifest) -> Result<()> {
        write_json(&self.root.join(MANIFEST_FILE), m)
    }

    pub fn annotations(&self) -> Result<AnnotationDocument> {
        let m = self.manifest()?;
        let path = self.resolve(&m.annotation_state);
        if !path.exists() {
            return Ok(AnnotationDocument::empty(&m.session_id, m.fps));
        }
        let doc: AnnotationDocument = read_json(&path)?;
        check_schema(&path, doc.schema_version)?;
        Ok(doc)
    }

    pub fn annotations_path(&self) -> Result<PathBuf> {
        Ok(self.resolve(&self.manifest()?.annotation_state))
    }

    pub fn save_annotations(&self, doc: &AnnotationDocument) -> Result<()> {
        write_atomic(&self.annotations_path()?, &doc.to_bytes())
    }

    pub fn calibration(&self) -> Result<Option<Calibration>> {
        let m = self.manifest()?;
        match &m.files.keystones {
            None => Ok(None),
            Some(r) => read_json(&self.resolve(r)).map(Some),
        }
    }

    /// Validate, persist and reference the calibration; returns the layout.
    pub fn put_calibration(&self, calibration: &Calibration) -> Result<KeyboardLayout> {
        let layout = calibration.build()?;
        write_json(&self.root.join(KEYSTONES_FILE), calibration)?;
        let mut m = self.manifest()?;
        if m.files.keystones.as_deref() != Some(KEYSTONES_FILE) {
            m.files.keystones = Some(KEYSTONES_FILE.into());
            self.save_manifest(&m)?;
        }
        Ok(layout)
    }

    pub fn update_label(
        &self,
        note_index: usize,
        label: Finger,
        expected_version: u64,
    ) -> Result<AnnotationRecord> {
        let mut doc = self.annotations()?;
        let record = doc.apply_label(note_index, label, expected_version)?.clone();
        self.save_annotations(&doc)?;
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewSession {
    /// Generated when absent.
    pub session_id: Option<String>,
    pub profile_id: String,
    pub piece: PieceMeta,
    pub files: FileRefs,
    pub fps: f64,
}

pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// A directory of sessions with in-process per-session write serialization.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    profiles_lock: Mutex<()>,
}

impl Store {
    /// Open an existing store root.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let meta = fs::metadata(&root).map_err(|e| StoreError::io(&root, e))?;
        if !meta.is_dir() {
            return Err(StoreError::io(
                &root,
                std::io::Error::new(std::io::ErrorKind::NotADirectory, "store root is not a directory"),
            ));
        }
        fs::read_dir(&root).map_err(|e| StoreError::io(&root, e))?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
            profiles_lock: Mutex::new(()),
        })
    }

    /// Create the root directory if needed, then open it.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock_for(&self, session_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(session_id.to_string())
            .or_default()
            .clone()
    }

    /// Run `f` while holding the session's write lock.
    pub fn with_session<T>(&self, session_id: &str, f: impl FnOnce(&SessionDir) -> Result<T>) -> Result<T> {
        let dir = self.session(session_id)?;
        let lock = self.lock_for(session_id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        f(&dir)
    }

    pub fn session(&self, session_id: &str) -> Result<SessionDir> {
        if !valid_session_id(session_id) {
            return Err(StoreError::SessionNotFound(session_id.to_string()));
        }
        SessionDir::open(self.root.join(session_id))
            .map_err(|_| StoreError::SessionNotFound(session_id.to_string()))
    }

    pub fn profiles(&self) -> Result<Vec<PerformerProfile>> {
        let path = self.root.join(PROFILES_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_json(&path)
    }

    pub fn register_profile(
        &self,
        display_name: &str,
        handedness: Option<Handedness>,
    ) -> Result<PerformerProfile> {
        let _guard = self.profiles_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut profiles = self.profiles()?;
        let profile = PerformerProfile {
            profile_id: uuid::Uuid::new_v4().simple().to_string(),
            display_name: display_name.to_string(),
            handedness,
            registered_at: Utc::now(),
        };
        profiles.push(profile.clone());
        write_json(&self.root.join(PROFILES_FILE), &profiles)?;
        Ok(profile)
    }

    pub fn create_session(&self, req: NewSession) -> Result<SessionManifest> {
        let files = &req.files;
        let exists = |r: &Option<String>| r.as_deref().is_some_and(|p| Path::new(p).exists());
        if !exists(&files.midi) {
            return Err(StoreError::IncompleteSession("MIDI file is missing".into()));
        }
        if !exists(&files.audio_daw) && !exists(&files.audio_video) && !exists(&files.video) {
            return Err(StoreError::IncompleteSession(
                "an audio capture (DAW audio, video audio or video) is required".into(),
            ));
        }
        if !(req.fps.is_finite() && req.fps > 0.0) {
            return Err(StoreError::IncompleteSession(format!("invalid fps {}", req.fps)));
        }
        let session_id = req
            .session_id
            .clone()
            .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        if !valid_session_id(&session_id) {
            return Err(StoreError::InvalidId(session_id));
        }
        let dir = self.root.join(&session_id);
        if let Err(e) = fs::create_dir(&dir) {
            return Err(if e.kind() == std::io::ErrorKind::AlreadyExists {
                StoreError::IdCollision(session_id)
            } else {
                StoreError::io(&dir, e)
            });
        }

        let absolute = |r: &Option<String>| -> Option<String> {
            r.as_ref().map(|p| {
                std::path::absolute(p)
                    .map(|a| a.display().to_string())
                    .unwrap_or_else(|_| p.clone())
            })
        };
        let manifest = SessionManifest {
            schema_version: SCHEMA_VERSION,
            session_id: session_id.clone(),
            profile_id: req.profile_id,
            piece: req.piece,
            files: FileRefs {
                midi: absolute(&files.midi),
                audio_daw: absolute(&files.audio_daw),
                audio_video: absolute(&files.audio_video),
                video: absolute(&files.video),
                skeleton: absolute(&files.skeleton),
                keystones: absolute(&files.keystones),
            },
            fps: req.fps,
            sync: None,
            annotation_state: ANNOTATIONS_FILE.into(),
            created_at: Utc::now(),
        };
        SessionDir::init(dir, &manifest)?;
        Ok(manifest)
    }

    /// All sessions, oldest first.
    pub fn list_sessions(&self) -> Result<Vec<SessionManifest>> {
        let entries = fs::read_dir(&self.root).map_err(|e| StoreError::io(&self.root, e))?;
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| StoreError::io(&self.root, e))?;
            if entry.path().join(MANIFEST_FILE).is_file() {
                out.push(SessionDir::open(entry.path())?.manifest()?);
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.session_id.cmp(&b.session_id)));
        Ok(out)
    }

    pub fn update_label(
        &self,
        session_id: &str,
        note_index: usize,
        label: Finger,
        expected_version: u64,
    ) -> Result<AnnotationRecord> {
        self.with_session(session_id, |dir| dir.update_label(note_index, label, expected_version))
    }

    pub fn put_calibration(&self, session_id: &str, calibration: &Calibration) -> Result<KeyboardLayout> {
        self.with_session(session_id, |dir| dir.put_calibration(calibration))
    }

    pub fn prelabel(&self, session_id: &str) -> Result<AnnotationStats> {
        self.with_session(session_id, crate::pipeline::prelabel_session)
    }

    pub fn set_sync(&self, session_id: &str, sync: SyncRecord) -> Result<SessionManifest> {
        self.with_session(session_id, |dir| {
            let mut m = dir.manifest()?;
            m.sync = Some(sync);
            dir.save_manifest(&m)?;
            Ok(m)
        })
    }
}
