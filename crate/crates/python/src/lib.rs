//! Python bindings: score parsing, fingerboard lookup, evaluation and
//! rendering.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use violin_fingerboard::eval;
use violin_fingerboard::fingerboard::{self, FingerboardTable, Lookup};
use violin_fingerboard::pipeline::{self, PipelineError, PipelineOptions};
use violin_fingerboard::render::{self, Lookahead, RenderConfig};
use violin_fingerboard::score::{self, NoteEvent, ScoreTimeline};
use violin_fingerboard::video::EncoderSpec;
use violin_fingerboard::{MidiNote, Pitch};

create_exception!(violin_fingerboard_py, ScoreError, PyValueError);
create_exception!(violin_fingerboard_py, PipelineFailure, PyOSError);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn midi(v: i64) -> PyResult<MidiNote> {
    u8::try_from(v)
        .ok()
        .and_then(MidiNote::new)
        .ok_or_else(|| PyValueError::new_err(format!("MIDI value {v} outside 0..=127")))
}

/// One timed note.
#[pyclass(frozen, skip_from_py_object, module = "violin_fingerboard_py")]
#[derive(Clone)]
struct Note {
    inner: NoteEvent,
}

#[pymethods]
impl Note {
    #[new]
    fn new(midi_value: i64, start_time: f64, duration: f64) -> PyResult<Self> {
        if !(start_time.is_finite() && start_time >= 0.0 && duration.is_finite() && duration > 0.0)
        {
            return Err(PyValueError::new_err(
                "start_time must be >= 0 and duration > 0",
            ));
        }
        Ok(Note {
            inner: NoteEvent::new(midi(midi_value)?, start_time, duration),
        })
    }

    #[getter]
    fn note_name(&self) -> &str {
        &self.inner.note_name
    }

    #[getter]
    fn midi(&self) -> u8 {
        self.inner.midi.value()
    }

    #[getter]
    fn start_time(&self) -> f64 {
        self.inner.start_time
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    fn __repr__(&self) -> String {
        format!(
            "Note({}, start_time={}, duration={})",
            self.inner.note_name, self.inner.start_time, self.inner.duration
        )
    }
}

/// Where a pitch is played: string, semitone offset, finger and label.
#[pyclass(frozen, get_all, module = "violin_fingerboard_py")]
struct Placement {
    string: &'static str,
    string_label: String,
    semitone_offset: u8,
    finger: u8,
    position_label: &'static str,
    midi: u8,
}

impl From<fingerboard::Placement> for Placement {
    fn from(p: fingerboard::Placement) -> Self {
        Placement {
            string: p.string.name(),
            string_label: p.string.to_string(),
            semitone_offset: p.semitone_offset,
            finger: p.finger,
            position_label: p.position_label,
            midi: p.midi().value(),
        }
    }
}

#[pymethods]
impl Placement {
    fn __repr__(&self) -> String {
        format!(
            "Placement({} string, finger {}, {:?})",
            self.string, self.finger, self.position_label
        )
    }
}

/// A parsed score: notes sorted by onset plus the tempo map.
#[pyclass(frozen, module = "violin_fingerboard_py")]
struct Timeline {
    inner: ScoreTimeline,
}

#[pymethods]
impl Timeline {
    #[new]
    fn new(notes: Vec<PyRef<'_, Note>>) -> Self {
        Timeline {
            inner: ScoreTimeline::from_events(notes.iter().map(|n| n.inner.clone()).collect()),
        }
    }

    #[getter]
    fn notes(&self) -> Vec<Note> {
        self.inner
            .events()
            .iter()
            .map(|e| Note { inner: e.clone() })
            .collect()
    }

    #[getter]
    fn total_duration(&self) -> f64 {
        self.inner.total_duration()
    }

    fn bpm_at(&self, time: f64) -> Option<f64> {
        self.inner.bpm_at(time)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.events().len()
    }
}

#[derive(FromPyObject)]
enum Document {
    Bytes(Vec<u8>),
    Text(String),
}

/// Parses MusicXML given as `bytes` or `str`.
#[pyfunction]
fn parse_musicxml(document: Document) -> PyResult<Timeline> {
    let bytes = match &document {
        Document::Bytes(b) => b.as_slice(),
        Document::Text(s) => s.as_bytes(),
    };
    score::parse_musicxml(bytes)
        .map(|inner| Timeline { inner })
        .map_err(|e| ScoreError::new_err(e.to_string()))
}

#[pyfunction]
fn timeline_from_json(data: &str) -> PyResult<Timeline> {
    score::events_from_json(data.as_bytes())
        .map(|events| Timeline {
            inner: ScoreTimeline::from_events(events),
        })
        .map_err(|e| ScoreError::new_err(e.to_string()))
}

#[derive(FromPyObject)]
enum NoteArg {
    Midi(i64),
    Name(String),
}

/// Preferred placement for a MIDI number or note name; `None` when out of range.
#[pyfunction]
fn lookup(note: NoteArg) -> PyResult<Option<Placement>> {
    let table = FingerboardTable::new();
    let found = match note {
        NoteArg::Midi(v) => table.lookup(midi(v)?),
        NoteArg::Name(n) => table.lookup_name(&n).map_err(value_err)?,
    };
    Ok(match found {
        Lookup::Found(p) => Some(p.into()),
        Lookup::OutOfRange => None,
    })
}

#[pyfunction]
fn normalize_name(name: &str) -> PyResult<String> {
    fingerboard::normalize_name(name).map_err(value_err)
}

/// All 64 `(string, offset)` placements.
#[pyfunction]
fn all_placements() -> Vec<Placement> {
    FingerboardTable::new()
        .all_entries()
        .iter()
        .map(|&p| p.into())
        .collect()
}

#[pyfunction]
fn table_dump() -> String {
    FingerboardTable::new().dump()
}

/// `(total, covered, fraction)` over distinct MIDI values.
#[pyfunction]
fn coverage(pitches: Vec<i64>) -> PyResult<(usize, usize, f64)> {
    let set = pitches
        .into_iter()
        .map(midi)
        .collect::<PyResult<BTreeSet<_>>>()?;
    let r = fingerboard::coverage(&set).map_err(value_err)?;
    Ok((r.total, r.covered, r.fraction))
}

#[pyfunction]
fn pitch_to_midi(step: &str, alter: i32, octave: i32) -> PyResult<u8> {
    let mut letters = step.chars();
    let step = match (letters.next(), letters.next()) {
        (Some(c), None) => violin_fingerboard::Step::from_letter(c),
        _ => None,
    }
    .ok_or_else(|| PyValueError::new_err(format!("bad step {step:?}")))?;
    let p = Pitch::new(step, alter, octave).map_err(value_err)?;
    Ok(violin_fingerboard::pitch_to_midi(&p).value())
}

#[pyfunction]
fn midi_to_sharp_name(value: i64) -> PyResult<String> {
    Ok(violin_fingerboard::midi_to_sharp_name(midi(value)?))
}

/// Aligns predicted against ground-truth notes and returns the metrics.
#[pyfunction]
#[pyo3(signature = (predicted, truth, tolerance = eval::DEFAULT_ONSET_TOLERANCE))]
fn evaluate<'py>(
    py: Python<'py>,
    predicted: &Timeline,
    truth: &Timeline,
    tolerance: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let table = FingerboardTable::new();
    let r = eval::evaluate(
        predicted.inner.events(),
        truth.inner.events(),
        &table,
        tolerance,
    )
    .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("note_accuracy", r.note_accuracy)?;
    d.set_item("duration_accuracy", r.duration_accuracy)?;
    d.set_item("fingerboard_accuracy", r.fingerboard_accuracy)?;
    d.set_item("matched", r.matched)?;
    d.set_item("predicted", r.predicted)?;
    d.set_item("truth", r.truth)?;
    d.set_item("duration_correct", r.duration_correct)?;
    d.set_item("fingerboard_correct", r.fingerboard_correct)?;
    Ok(d)
}

fn render_config(width: u32, height: u32, fps: u32, lookahead: Option<f64>) -> RenderConfig {
    RenderConfig {
        width,
        height,
        fps,
        lookahead: lookahead.map_or(RenderConfig::default().lookahead, Lookahead::Seconds),
        ..RenderConfig::default()
    }
}

/// One frame at `time` seconds, encoded as PNG.
#[pyfunction]
#[pyo3(signature = (timeline, time, width = 1280, height = 720, fps = 30, lookahead = None))]
fn render_frame_png<'py>(
    py: Python<'py>,
    timeline: &Timeline,
    time: f64,
    width: u32,
    height: u32,
    fps: u32,
    lookahead: Option<f64>,
) -> PyResult<Bound<'py, PyBytes>> {
    let cfg = render_config(width, height, fps, lookahead);
    let frame = render::render_frame(&timeline.inner, &FingerboardTable::new(), time, &cfg)
        .map_err(value_err)?;
    let mut buf = Vec::new();
    frame.write_png(&mut buf).map_err(value_err)?;
    Ok(PyBytes::new(py, &buf))
}

#[pyfunction]
fn frame_count(total_duration: f64, fps: u32) -> u64 {
    render::frame_count(total_duration, fps)
}

/// Runs the whole pipeline on a MusicXML file or score image. Returns the
/// run summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (input, out = None, encoder = None, session_base = None, width = 1280, height = 720, fps = 30))]
#[allow(clippy::too_many_arguments)]
fn render_video(
    py: Python<'_>,
    input: PathBuf,
    out: Option<PathBuf>,
    encoder: Option<PathBuf>,
    session_base: Option<PathBuf>,
    width: u32,
    height: u32,
    fps: u32,
) -> PyResult<String> {
    let mut opts = PipelineOptions {
        out,
        render: render_config(width, height, fps, None),
        ..PipelineOptions::default()
    };
    if let Some(e) = encoder {
        opts.encoder = EncoderSpec::ffmpeg(e);
    }
    if let Some(b) = session_base {
        opts.session_base = b;
    }
    let result = py.detach(|| pipeline::run_pipeline(&input, &opts));
    match result {
        Ok(r) => Ok(r.to_json()),
        Err(e @ (PipelineError::Score(_) | PipelineError::ReadInput { .. })) => {
            Err(ScoreError::new_err(e.to_string()))
        }
        Err(e) => Err(PipelineFailure::new_err(e.to_string())),
    }
}

#[pymodule]
fn violin_fingerboard_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Note>()?;
    m.add_class::<Placement>()?;
    m.add_class::<Timeline>()?;
    m.add("ScoreError", m.py().get_type::<ScoreError>())?;
    m.add("PipelineFailure", m.py().get_type::<PipelineFailure>())?;
    m.add_function(wrap_pyfunction!(parse_musicxml, m)?)?;
    m.add_function(wrap_pyfunction!(timeline_from_json, m)?)?;
    m.add_function(wrap_pyfunction!(lookup, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_name, m)?)?;
    m.add_function(wrap_pyfunction!(all_placements, m)?)?;
    m.add_function(wrap_pyfunction!(table_dump, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(pitch_to_midi, m)?)?;
    m.add_function(wrap_pyfunction!(midi_to_sharp_name, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(render_frame_png, m)?)?;
    m.add_function(wrap_pyfunction!(frame_count, m)?)?;
    m.add_function(wrap_pyfunction!(render_video, m)?)?;
    Ok(())
}
