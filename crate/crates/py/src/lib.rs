//! Python bindings: `import pianofinger`.
//!
//! Rich documents (annotations, manifests, statistics) cross the boundary
//! as plain dicts and lists built from their JSON form.

use std::fmt::Display;
use std::path::PathBuf;

use pianofinger_core::fingering::{self, Finger, ScoreVector, Thresholds, FINGER_COUNT};
use pianofinger_core::geometry::{self, Calibration, ImageSize, KeyboardLayout, Keystone, Point};
use pianofinger_core::midi::{self, MidiPerformance, NoteEvent, WriteOptions};
use pianofinger_core::payload::{self, ControlPayload};
use pianofinger_core::session::{Store, StoreError};
use pianofinger_core::skeleton::{self, SkeletonTrack};
use pianofinger_core::{audio, export, synth};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn store_err(e: StoreError) -> PyErr {
    match e {
        StoreError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn read(path: &PathBuf) -> PyResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))
}

/// Python object from any serializable value, via its JSON form.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn finger(index: u8) -> PyResult<Finger> {
    Finger::new(index).ok_or_else(|| value_err(format!("finger index {index} out of range 0-9")))
}

#[pyclass(name = "NoteEvent", module = "pianofinger", frozen, from_py_object)]
#[derive(Clone)]
struct PyNote(NoteEvent);

#[pymethods]
impl PyNote {
    #[new]
    #[pyo3(signature = (pitch, onset_s, offset_s, velocity = 64, channel = 0))]
    fn new(pitch: u8, onset_s: f64, offset_s: f64, velocity: u8, channel: u8) -> Self {
        let mut n = synth::note(pitch, onset_s, offset_s);
        n.velocity = velocity;
        n.channel = channel;
        PyNote(n)
    }

    #[getter]
    fn index(&self) -> usize {
        self.0.index
    }

    #[getter]
    fn pitch(&self) -> u8 {
        self.0.pitch
    }

    #[getter]
    fn velocity(&self) -> u8 {
        self.0.velocity
    }

    #[getter]
    fn channel(&self) -> u8 {
        self.0.channel
    }

    #[getter]
    fn onset_s(&self) -> f64 {
        self.0.onset_s
    }

    #[getter]
    fn offset_s(&self) -> f64 {
        self.0.offset_s
    }

    fn __repr__(&self) -> String {
        let n = &self.0;
        format!(
            "NoteEvent(index={}, pitch={}, onset_s={}, offset_s={})",
            n.index, n.pitch, n.onset_s, n.offset_s
        )
    }
}

#[pyclass(name = "MidiPerformance", module = "pianofinger", frozen)]
struct PyMidi(MidiPerformance);

#[pymethods]
impl PyMidi {
    /// Constant-tempo performance from a list of notes; notes are re-indexed
    /// in onset order.
    #[new]
    fn new(notes: Vec<PyNote>) -> Self {
        PyMidi(synth::performance(notes.into_iter().map(|n| n.0).collect()))
    }

    #[getter]
    fn notes(&self) -> Vec<PyNote> {
        self.0.notes.iter().copied().map(PyNote).collect()
    }

    #[getter]
    fn ppq(&self) -> u16 {
        self.0.ppq
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.0.duration_s
    }

    fn tick_to_seconds(&self, tick: u64) -> f64 {
        self.0.tick_to_seconds(tick)
    }

    #[pyo3(signature = (running_status = false))]
    fn to_bytes<'py>(&self, py: Python<'py>, running_status: bool) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &midi::write_midi(&self.0, WriteOptions { running_status }))
    }

    /// Copy with every note moved by `offset_s`, clipped at zero.
    fn shifted(&self, offset_s: f64) -> Self {
        PyMidi(audio::apply_offset_to_midi(&self.0, offset_s))
    }

    fn __len__(&self) -> usize {
        self.0.notes.len()
    }
}

#[pyfunction]
fn parse_midi(data: &[u8]) -> PyResult<PyMidi> {
    midi::parse_midi(data).map(PyMidi).map_err(value_err)
}

#[pyfunction]
fn read_midi(path: PathBuf) -> PyResult<PyMidi> {
    parse_midi(&read(&path)?)
}

/// `(first_frame, frame_count)` of the frames sounding during `note`.
#[pyfunction]
#[pyo3(signature = (note, fps, video_offset_s = 0.0))]
fn note_frame_interval(note: &PyNote, fps: f64, video_offset_s: f64) -> (u64, u64) {
    let iv = midi::note_frame_interval(&note.0, fps, video_offset_s);
    (iv.first_frame, iv.frame_count)
}

#[pyclass(name = "AudioBuffer", module = "pianofinger", frozen)]
struct PyAudio(audio::AudioBuffer);

#[pymethods]
impl PyAudio {
    #[new]
    fn new(samples: Vec<f32>, sample_rate: u32) -> PyResult<Self> {
        audio::AudioBuffer::new(samples, sample_rate).map(PyAudio).map_err(value_err)
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.0.sample_rate
    }

    #[getter]
    fn samples(&self) -> Vec<f32> {
        self.0.samples.clone()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.0.duration_s()
    }

    /// 16-bit PCM WAV encoding.
    fn to_wav<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &audio::encode_wav_pcm16(&self.0))
    }

    fn __len__(&self) -> usize {
        self.0.samples.len()
    }
}

#[pyfunction]
fn decode_wav(data: &[u8]) -> PyResult<PyAudio> {
    audio::decode_wav(data).map(PyAudio).map_err(value_err)
}

#[pyfunction]
fn read_wav(path: PathBuf) -> PyResult<PyAudio> {
    decode_wav(&read(&path)?)
}

#[pyclass(name = "SyncResult", module = "pianofinger", frozen, get_all)]
struct PySync {
    lag_samples: i64,
    lag_s: f64,
    peak_correlation: f64,
    confidence: f64,
    sample_rate: u32,
    /// Shift that moves MIDI recorded with `other` onto the reference timeline.
    midi_offset_s: f64,
}

#[pymethods]
impl PySync {
    fn __repr__(&self) -> String {
        format!(
            "SyncResult(lag_samples={}, lag_s={}, peak_correlation={:.4}, confidence={:.3})",
            self.lag_samples, self.lag_s, self.peak_correlation, self.confidence
        )
    }
}

/// Lag of `other` relative to `reference`; positive when `other` is late.
#[pyfunction]
fn cross_correlate_offset(py: Python<'_>, reference: &PyAudio, other: &PyAudio) -> PyResult<PySync> {
    let r = py
        .detach(|| audio::cross_correlate_offset(&reference.0, &other.0))
        .map_err(value_err)?;
    Ok(PySync {
        lag_samples: r.lag_samples,
        lag_s: r.lag_s,
        peak_correlation: r.peak_correlation,
        confidence: r.confidence,
        sample_rate: r.sample_rate,
        midi_offset_s: -r.lag_s,
    })
}

#[pyclass(name = "KeyboardLayout", module = "pianofinger", frozen)]
struct PyLayout(KeyboardLayout);

#[pymethods]
impl PyLayout {
    /// `keystones` holds `(boundary_index, (top_x, top_y), (bottom_x, bottom_y))`
    /// with boundary 0 the left edge of A0 and 52 the right edge of C8.
    #[new]
    fn new(image_size: (u32, u32), keystones: Vec<(u8, (f64, f64), (f64, f64))>) -> PyResult<Self> {
        let calibration = Calibration {
            image_size: ImageSize {
                width: image_size.0,
                height: image_size.1,
            },
            keystones: keystones
                .into_iter()
                .map(|(b, t, bot)| Keystone {
                    boundary_index: b,
                    top: Point::new(t.0, t.1),
                    bottom: Point::new(bot.0, bot.1),
                })
                .collect(),
        };
        calibration.build().map(PyLayout).map_err(value_err)
    }

    /// From a keystone calibration document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let calibration: Calibration = serde_json::from_str(text).map_err(value_err)?;
        calibration.build().map(PyLayout).map_err(value_err)
    }

    /// Region of `pitch` as a dict with `pitch`, `quad`, `width_px`, `is_black`.
    fn key_region<'py>(&self, py: Python<'py>, pitch: u8) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.0.key_region(pitch).map_err(value_err)?)
    }

    fn locate_key_at(&self, x: f64, y: f64) -> Option<u8> {
        self.0.locate_key_at(Point::new(x, y))
    }

    /// Distance in pixels from `(x, y)` to the key of `pitch`; 0 inside.
    fn distance(&self, pitch: u8, x: f64, y: f64) -> PyResult<f64> {
        let region = self.0.key_region(pitch).map_err(value_err)?;
        Ok(geometry::point_region_distance(Point::new(x, y), region))
    }

    #[getter]
    fn default_floating_margin(&self) -> f64 {
        self.0.default_floating_margin()
    }

    fn __len__(&self) -> usize {
        self.0.regions().len()
    }
}

#[pyclass(name = "SkeletonTrack", module = "pianofinger", frozen)]
struct PyTrack(SkeletonTrack);

#[pymethods]
impl PyTrack {
    /// Parse one JSON hand-frame record per line.
    #[staticmethod]
    fn from_jsonl(text: &str, fps: f64, image_size: (u32, u32)) -> PyResult<Self> {
        let size = ImageSize {
            width: image_size.0,
            height: image_size.1,
        };
        skeleton::load_skeletons(text.as_bytes(), fps, size)
            .map(PyTrack)
            .map_err(value_err)
    }

    fn to_jsonl(&self) -> String {
        skeleton::write_skeletons(&self.0)
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.0.fps
    }

    #[getter]
    fn frames(&self) -> Vec<u64> {
        self.0.frames.keys().copied().collect()
    }

    /// `(finger_index, x, y)` for every non-floating fingertip at `frame`.
    fn fingertips_at(&self, frame: u64) -> Vec<(u8, f64, f64)> {
        self.0
            .fingertips_at(frame)
            .into_iter()
            .map(|t| (t.finger_index, t.position.x, t.position.y))
            .collect()
    }

    /// Copy with unflagged hands marked floating or not; the margin
    /// defaults to half the mean white-key height.
    #[pyo3(signature = (layout, margin_px = None))]
    fn flag_floating(&self, layout: &PyLayout, margin_px: Option<f64>) -> Self {
        let margin = margin_px.unwrap_or_else(|| layout.0.default_floating_margin());
        PyTrack(self.0.flag_floating(&layout.0, margin))
    }
}

#[pyfunction]
#[pyo3(signature = (layout, track, note, fps, video_offset_s = 0.0))]
fn score_note(layout: &PyLayout, track: &PyTrack, note: &PyNote, fps: f64, video_offset_s: f64) -> PyResult<Vec<f64>> {
    let interval = midi::note_frame_interval(&note.0, fps, video_offset_s);
    let score = fingering::score_note(&note.0, &interval, &layout.0, &track.0).map_err(value_err)?;
    Ok(score.0.to_vec())
}

/// Outcome dict: `{"kind": "single", "finger": i}`, `{"kind": "multiple",
/// "fingers": [...]}` or `{"kind": "none"}`.
#[pyfunction]
#[pyo3(signature = (scores, interval_len, candidate = 0.5, dominant = 0.8))]
fn classify_candidates<'py>(
    py: Python<'py>,
    scores: Vec<f64>,
    interval_len: u64,
    candidate: f64,
    dominant: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let scores: [f64; FINGER_COUNT] = scores
        .try_into()
        .map_err(|v: Vec<f64>| value_err(format!("expected {FINGER_COUNT} scores, got {}", v.len())))?;
    let outcome = fingering::classify_candidates(
        &ScoreVector(scores),
        interval_len,
        Thresholds { candidate, dominant },
    );
    to_py(py, &outcome.kind)
}

/// One annotation dict per note, in note order.
#[pyfunction]
#[pyo3(signature = (performance, layout, track, fps, video_offset_s = 0.0))]
fn prelabel<'py>(
    py: Python<'py>,
    performance: &PyMidi,
    layout: &PyLayout,
    track: &PyTrack,
    fps: f64,
    video_offset_s: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let labels = py.detach(|| fingering::prelabel_performance(&performance.0, &layout.0, &track.0, fps, video_offset_s));
    to_py(py, &labels)
}

#[pyfunction]
fn finger_label(index: u8) -> PyResult<String> {
    Ok(finger(index)?.to_string())
}

#[pyfunction]
fn finger_index(label: &str) -> PyResult<u8> {
    label.parse::<Finger>().map(Finger::index).map_err(value_err)
}

#[pyclass(name = "Store", module = "pianofinger", frozen)]
struct PyStore(Store);

#[pymethods]
impl PyStore {
    #[new]
    #[pyo3(signature = (root, create = false))]
    fn new(root: PathBuf, create: bool) -> PyResult<Self> {
        let store = if create { Store::create(root) } else { Store::open(root) };
        store.map(PyStore).map_err(store_err)
    }

    fn list_sessions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.list_sessions().map_err(store_err)?)
    }

    fn annotations<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let doc = self.0.session(session_id).and_then(|d| d.annotations()).map_err(store_err)?;
        to_py(py, &doc)
    }

    /// Store a keystone calibration document; returns the number of key regions.
    fn put_calibration(&self, session_id: &str, calibration_json: &str) -> PyResult<usize> {
        let calibration: Calibration = serde_json::from_str(calibration_json).map_err(value_err)?;
        let layout = self.0.put_calibration(session_id, &calibration).map_err(store_err)?;
        Ok(layout.regions().len())
    }

    fn prelabel<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let stats = py.detach(|| self.0.prelabel(session_id)).map_err(store_err)?;
        to_py(py, &stats)
    }

    fn update_label<'py>(
        &self,
        py: Python<'py>,
        session_id: &str,
        note_index: usize,
        label: &str,
        expected_version: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let label: Finger = label.parse().map_err(value_err)?;
        let record = self
            .0
            .update_label(session_id, note_index, label, expected_version)
            .map_err(store_err)?;
        to_py(py, &record)
    }

    /// CSV export; `format` is `"full"` or `"labels"`.
    #[pyo3(signature = (session_id, format = "full"))]
    fn export(&self, session_id: &str, format: &str) -> PyResult<String> {
        let format: export::ExportFormat = format.parse().map_err(value_err)?;
        let doc = self.0.session(session_id).and_then(|d| d.annotations()).map_err(store_err)?;
        Ok(export::export_annotations(&doc, format))
    }
}

/// Recorder control payload text for `kind` in `profile`, `play`, `stop`.
#[pyfunction]
#[pyo3(signature = (kind, profile_id = None))]
fn encode_control_payload(kind: &str, profile_id: Option<String>) -> PyResult<String> {
    let p = match (kind, profile_id) {
        ("profile", Some(id)) => ControlPayload::profile(id),
        ("profile", None) => return Err(value_err("profile payload needs a profile_id")),
        ("play", None) => ControlPayload::play(),
        ("stop", None) => ControlPayload::stop(),
        (k, _) => return Err(value_err(format!("unsupported payload kind {k:?}"))),
    };
    payload::encode_control_payload(&p).map_err(value_err)
}

#[pyfunction]
fn decode_control_payload<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &payload::decode_control_payload(text).map_err(value_err)?)
}

#[pymodule]
fn pianofinger(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNote>()?;
    m.add_class::<PyMidi>()?;
    m.add_class::<PyAudio>()?;
    m.add_class::<PySync>()?;
    m.add_class::<PyLayout>()?;
    m.add_class::<PyTrack>()?;
    m.add_class::<PyStore>()?;
    m.add_function(wrap_pyfunction!(parse_midi, m)?)?;
    m.add_function(wrap_pyfunction!(read_midi, m)?)?;
    m.add_function(wrap_pyfunction!(note_frame_interval, m)?)?;
    m.add_function(wrap_pyfunction!(decode_wav, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(cross_correlate_offset, m)?)?;
    m.add_function(wrap_pyfunction!(score_note, m)?)?;
    m.add_function(wrap_pyfunction!(classify_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(prelabel, m)?)?;
    m.add_function(wrap_pyfunction!(finger_label, m)?)?;
    m.add_function(wrap_pyfunction!(finger_index, m)?)?;
    m.add_function(wrap_pyfunction!(encode_control_payload, m)?)?;
    m.add_function(wrap_pyfunction!(decode_control_payload, m)?)?;
    Ok(())
}
