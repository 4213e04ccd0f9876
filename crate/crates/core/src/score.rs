//! MusicXML ingest: turns a partwise or timewise score into a timed list of
//! sounded notes.
//!
//! Only the first part and its first voice are read. The clock is tracked in
//! quarter notes (`duration / divisions`) and converted to seconds through a
//! piecewise-constant tempo map at the end, so tempo changes anywhere in the
//! score apply to everything after them.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use roxmltree::{Document, Node, ParsingOptions};
use serde::Deserialize;
use thiserror::Error;

use crate::pitch::{midi_to_sharp_name, name_to_midi, MidiNote, Pitch, Step};

/// Tempo assumed until the score says otherwise.
pub const DEFAULT_BPM: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("malformed XML at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("{}", structure_message(.measure, .message))]
    Structure {
        measure: Option<String>,
        message: String,
    },
    #[error(
        "compressed .mxl archives are not supported; export an uncompressed .xml or .musicxml file"
    )]
    CompressedContainer,
    #[error("invalid note list: {0}")]
    NoteList(String),
}

fn structure_message(measure: &Option<String>, message: &str) -> String {
    match measure {
        Some(m) => format!("measure {m}: {message}"),
        None => message.to_string(),
    }
}

/// One sounded note.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteEvent {
    pub note_name: String,
    pub midi: MidiNote,
    pub start_time: f64,
    pub duration: f64,
}

impl NoteEvent {
    pub fn new(midi: MidiNote, start_time: f64, duration: f64) -> NoteEvent {
        NoteEvent {
            note_name: midi_to_sharp_name(midi),
            midi,
            start_time,
            duration,
        }
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempoChange {
    /// Seconds from the start of the score.
    pub time: f64,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTimeline {
    events: Vec<NoteEvent>,
    total_duration: f64,
    tempo_map: Vec<TempoChange>,
}

fn event_order(a: &NoteEvent, b: &NoteEvent) -> Ordering {
    a.start_time
        .total_cmp(&b.start_time)
        .then(a.midi.cmp(&b.midi))
}

impl ScoreTimeline {
    /// Sorts the events and derives the total duration from the last note end.
    /// The tempo map defaults to a single entry at [`DEFAULT_BPM`].
    pub fn from_events(mut events: Vec<NoteEvent>) -> ScoreTimeline {
        events.sort_by(event_order);
        let total_duration = events.iter().map(NoteEvent::end_time).fold(0.0, f64::max);
        ScoreTimeline {
            events,
            total_duration,
            tempo_map: vec![TempoChange {
                time: 0.0,
                bpm: DEFAULT_BPM,
            }],
        }
    }

    pub fn events(&self) -> &[NoteEvent] {
        &self.events
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn tempo_map(&self) -> &[TempoChange] {
        &self.tempo_map
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Tempo in effect at `time` seconds.
    pub fn bpm_at(&self, time: f64) -> Option<f64> {
        self.tempo_map
            .iter()
            .take_while(|c| c.time <= time)
            .last()
            .or(self.tempo_map.first())
            .map(|c| c.bpm)
    }

    /// Timeline JSON: `[{"note":"E4","start_time":1.250,"duration":0.500}]`.
    pub fn to_json(&self) -> String {
        timeline_to_json(self)
    }
}

/// Non-fatal issues found while reading a score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedScore {
    pub timeline: ScoreTimeline,
    pub warnings: Vec<ParseWarning>,
}

/// Parses a MusicXML document, logging warnings for anything skipped.
pub fn parse_musicxml(document: &[u8]) -> Result<ScoreTimeline, ScoreError> {
    let parsed = parse_musicxml_detailed(document)?;
    for w in &parsed.warnings {
        log::warn!("{}", w.0);
    }
    Ok(parsed.timeline)
}

pub fn parse_musicxml_detailed(document: &[u8]) -> Result<ParsedScore, ScoreError> {
    if document.starts_with(b"PK\x03\x04") {
        return Err(ScoreError::CompressedContainer);
    }
    let bytes = document.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(document);
    let bom = document.len() - bytes.len();
    let text = std::str::from_utf8(bytes).map_err(|e| ScoreError::Parse {
        offset: bom + e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    let doc = Document::parse_with_options(text, opts).map_err(|e| {
        let pos = e.pos();
        ScoreError::Parse {
            offset: bom + byte_offset(text, pos.row, pos.col),
            message: e.to_string(),
        }
    })?;
    Walker::default().walk(&doc)
}

fn byte_offset(text: &str, row: u32, col: u32) -> usize {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i + 1 == row as usize {
            return offset
                + line
                    .char_indices()
                    .nth(col.saturating_sub(1) as usize)
                    .map_or(line.len(), |(b, _)| b);
        }
        offset += line.len();
    }
    text.len()
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn child_text<'a>(node: Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

struct RawEvent {
    midi: MidiNote,
    onset: f64,
    length: f64,
}

#[derive(Default)]
struct Walker {
    divisions: Option<f64>,
    measure_start: f64,
    cursor: f64,
    measure_end: f64,
    last_onset: f64,
    voice: Option<String>,
    events: Vec<RawEvent>,
    open_ties: HashMap<MidiNote, usize>,
    tempos: Vec<(f64, f64)>,
    skipped_voices: BTreeSet<String>,
    warnings: Vec<ParseWarning>,
}

const EPS: f64 = 1e-9;

impl Walker {
    fn warn(&mut self, msg: String) {
        self.warnings.push(ParseWarning(msg));
    }

    fn walk(mut self, doc: &Document) -> Result<ParsedScore, ScoreError> {
        let root = doc.root_element();
        let measures = match root.tag_name().name() {
            "score-partwise" => self.partwise_measures(root),
            "score-timewise" => self.timewise_measures(root),
            other => {
                return Err(ScoreError::Structure {
                    measure: None,
                    message: format!("expected score-partwise or score-timewise, found <{other}>"),
                })
            }
        };
        for (number, data) in measures {
            self.measure(&number, data)?;
        }
        if !self.skipped_voices.is_empty() {
            let list: Vec<_> = self.skipped_voices.iter().cloned().collect();
            self.warn(format!("skipped additional voices: {}", list.join(", ")));
        }
        Ok(self.finish())
    }

    fn partwise_measures<'a, 'i>(&mut self, root: Node<'a, 'i>) -> Vec<(String, Node<'a, 'i>)> {
        let parts: Vec<_> = root.children().filter(|n| n.has_tag_name("part")).collect();
        if parts.len() > 1 {
            let ids: Vec<_> = parts[1..]
                .iter()
                .map(|p| p.attribute("id").unwrap_or("?"))
                .collect();
            self.warn(format!(
                "only the first part is read; skipped parts: {}",
                ids.join(", ")
            ));
        }
        parts
            .first()
            .map(|part| {
                part.children()
                    .filter(|n| n.has_tag_name("measure"))
                    .map(|m| (m.attribute("number").unwrap_or("?").to_string(), m))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn timewise_measures<'a, 'i>(&mut self, root: Node<'a, 'i>) -> Vec<(String, Node<'a, 'i>)> {
        let measures: Vec<_> = root
            .children()
            .filter(|n| n.has_tag_name("measure"))
            .collect();
        let mut ids: Vec<String> = Vec::new();
        if let Some(list) = child(root, "part-list") {
            ids.extend(
                list.children()
                    .filter(|n| n.has_tag_name("score-part"))
                    .filter_map(|n| n.attribute("id").map(str::to_string)),
            );
        }
        for m in &measures {
            for p in m.children().filter(|n| n.has_tag_name("part")) {
                if let Some(id) = p.attribute("id") {
                    if !ids.iter().any(|x| x == id) {
                        ids.push(id.to_string());
                    }
                }
            }
        }
        let Some(first) = ids.first().cloned() else {
            return Vec::new();
        };
        if ids.len() > 1 {
            self.warn(format!(
                "only the first part is read; skipped parts: {}",
                ids[1..].join(", ")
            ));
        }
        measures
            .iter()
            .filter_map(|m| {
                let number = m.attribute("number").unwrap_or("?").to_string();
                m.children()
                    .find(|p| p.has_tag_name("part") && p.attribute("id") == Some(first.as_str()))
                    .map(|p| (number, p))
            })
            .collect()
    }

    fn structure(measure: &str, message: impl Into<String>) -> ScoreError {
        ScoreError::Structure {
            measure: Some(measure.to_string()),
            message: message.into(),
        }
    }

    fn quarters(&self, measure: &str, node: Node) -> Result<Option<f64>, ScoreError> {
        let Some(text) = child_text(node, "duration") else {
            return Ok(None);
        };
        let divisions = self
            .divisions
            .ok_or_else(|| Self::structure(measure, "duration found before <divisions> was set"))?;
        let value: f64 = text
            .parse()
            .map_err(|_| Self::structure(measure, format!("bad duration {text:?}")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Self::structure(measure, format!("bad duration {text:?}")));
        }
        Ok(Some(value / divisions))
    }

    fn advance(&mut self, by: f64) {
        self.cursor += by;
        self.measure_end = self.measure_end.max(self.cursor);
    }

    fn measure(&mut self, number: &str, data: Node) -> Result<(), ScoreError> {
        self.cursor = 0.0;
        self.measure_end = 0.0;
        for el in data.children().filter(Node::is_element) {
            match el.tag_name().name() {
                "attributes" => {
                    if let Some(text) = child_text(el, "divisions") {
                        let d: f64 = text.parse().map_err(|_| {
                            Self::structure(number, format!("bad divisions {text:?}"))
                        })?;
                        if !(d.is_finite() && d > 0.0) {
                            return Err(Self::structure(number, format!("bad divisions {text:?}")));
                        }
                        self.divisions = Some(d);
                    }
                }
                "note" => self.note(number, el)?,
                "backup" => {
                    let q = self.quarters(number, el)?.unwrap_or(0.0);
                    self.cursor -= q;
                    if self.cursor < -EPS {
                        self.warn(format!(
                            "measure {number}: backup past the start of the measure"
                        ));
                        self.cursor = 0.0;
                    }
                }
                "forward" => {
                    let q = self.quarters(number, el)?.unwrap_or(0.0);
                    self.advance(q);
                }
                "direction" => {
                    let offset = match (child_text(el, "offset"), self.divisions) {
                        (Some(t), Some(d)) => t.parse::<f64>().map(|v| v / d).unwrap_or(0.0),
                        _ => 0.0,
                    };
                    if let Some(bpm) = direction_tempo(el) {
                        self.tempo(number, self.cursor + offset, bpm);
                    }
                }
                "sound" => {
                    if let Some(bpm) = el.attribute("tempo").and_then(|t| t.trim().parse().ok()) {
                        self.tempo(number, self.cursor, bpm);
                    }
                }
                _ => {}
            }
        }
        self.measure_start += self.measure_end;
        Ok(())
    }

    fn tempo(&mut self, measure: &str, local: f64, bpm: f64) {
        if bpm.is_finite() && bpm > 0.0 {
            self.tempos.push((self.measure_start + local.max(0.0), bpm));
        } else {
            self.warn(format!("measure {measure}: ignored tempo {bpm}"));
        }
    }

    fn note(&mut self, measure: &str, el: Node) -> Result<(), ScoreError> {
        if child(el, "grace").is_some() {
            self.warn(format!("measure {measure}: grace note skipped"));
            return Ok(());
        }
        let is_chord = child(el, "chord").is_some();
        let length = self
            .quarters(measure, el)?
            .ok_or_else(|| Self::structure(measure, "note without <duration>"))?;
        let onset = if is_chord {
            self.last_onset
        } else {
            self.cursor
        };
        if !is_chord {
            self.last_onset = onset;
            self.advance(length);
        }

        let voice = child_text(el, "voice").unwrap_or("1").to_string();
        let selected = self.voice.get_or_insert_with(|| voice.clone()).clone();

        if child(el, "rest").is_some() {
            return Ok(());
        }
        if child(el, "unpitched").is_some() {
            return Err(Self::structure(measure, "unpitched (percussion) note"));
        }
        let pitch_el = child(el, "pitch")
            .ok_or_else(|| Self::structure(measure, "note has neither <pitch> nor <rest>"))?;
        let pitch = read_pitch(pitch_el).map_err(|m| Self::structure(measure, m))?;
        let midi = pitch.midi();

        if voice != selected {
            self.skipped_voices.insert(voice);
            return Ok(());
        }
        if child(el, "cue").is_some() {
            self.warn(format!("measure {measure}: cue note {pitch} skipped"));
            return Ok(());
        }
        if is_chord {
            self.warn(format!("measure {measure}: chord tone {pitch} dropped"));
            return Ok(());
        }
        if length <= 0.0 {
            return Err(Self::structure(
                measure,
                format!("zero-length note {pitch}"),
            ));
        }

        let ties: Vec<&str> = el
            .children()
            .filter(|c| c.has_tag_name("tie"))
            .filter_map(|c| c.attribute("type"))
            .collect();
        let starts_tie = ties.contains(&"start");
        let onset_abs = self.measure_start + onset;

        if ties.contains(&"stop") {
            if let Some(&idx) = self.open_ties.get(&midi) {
                let ev = &mut self.events[idx];
                if (ev.onset + ev.length - onset_abs).abs() < EPS {
                    ev.length += length;
                    if !starts_tie {
                        self.open_ties.remove(&midi);
                    }
                    return Ok(());
                }
            }
        }
        self.events.push(RawEvent {
            midi,
            onset: onset_abs,
            length,
        });
        if starts_tie {
            self.open_ties.insert(midi, self.events.len() - 1);
        } else {
            self.open_ties.remove(&midi);
        }
        Ok(())
    }

    fn finish(mut self) -> ParsedScore {
        let clock = TempoClock::new(&self.tempos);
        let mut events: Vec<NoteEvent> = self
            .events
            .iter()
            .map(|e| {
                let start = clock.seconds(e.onset);
                NoteEvent::new(e.midi, start, clock.seconds(e.onset + e.length) - start)
            })
            .collect();
        events.sort_by(event_order);
        let last_end = events.iter().map(NoteEvent::end_time).fold(0.0, f64::max);
        let total_duration = clock.seconds(self.measure_start).max(last_end);
        let warnings = std::mem::take(&mut self.warnings);
        ParsedScore {
            timeline: ScoreTimeline {
                events,
                total_duration,
                tempo_map: clock.changes,
            },
            warnings,
        }
    }
}

fn read_pitch(el: Node) -> Result<Pitch, String> {
    let step_text = child_text(el, "step").ok_or("pitch without <step>")?;
    let mut letters = step_text.chars();
    let step = match (letters.next().and_then(Step::from_letter), letters.next()) {
        (Some(s), None) => s,
        _ => return Err(format!("bad step {step_text:?}")),
    };
    let alter = match child_text(el, "alter") {
        None => 0,
        Some(t) => {
            let v: f64 = t.parse().map_err(|_| format!("bad alter {t:?}"))?;
            if v.fract() != 0.0 {
                return Err(format!("microtonal alter {t} is not supported"));
            }
            v as i32
        }
    };
    let octave_text = child_text(el, "octave").ok_or("pitch without <octave>")?;
    let octave: i32 = octave_text
        .parse()
        .map_err(|_| format!("bad octave {octave_text:?}"))?;
    Pitch::new(step, alter, octave).map_err(|e| e.to_string())
}

fn direction_tempo(direction: Node) -> Option<f64> {
    if let Some(t) = direction
        .descendants()
        .filter(|n| n.has_tag_name("sound"))
        .find_map(|n| n.attribute("tempo"))
    {
        return t.trim().parse().ok();
    }
    let metronome = direction
        .descendants()
        .find(|n| n.has_tag_name("metronome"))?;
    let unit = match child_text(metronome, "beat-unit")? {
        "whole" => 4.0,
        "half" => 2.0,
        "quarter" => 1.0,
        "eighth" => 0.5,
        "16th" => 0.25,
        _ => return None,
    };
    let dots = metronome
        .children()
        .filter(|n| n.has_tag_name("beat-unit-dot"))
        .count() as i32;
    let dotted = unit * (2.0 - 0.5f64.powi(dots));
    let per_minute: f64 = child_text(metronome, "per-minute")?.parse().ok()?;
    Some(per_minute * dotted)
}

/// Quarter-note positions to seconds under a piecewise-constant tempo.
struct TempoClock {
    // (quarter position, seconds at that position, bpm)
    segments: Vec<(f64, f64, f64)>,
    changes: Vec<TempoChange>,
}

impl TempoClock {
    fn new(raw: &[(f64, f64)]) -> TempoClock {
        let mut points: Vec<(f64, f64)> = raw.to_vec();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (q, bpm) in points {
            match merged.last_mut() {
                Some(last) if (last.0 - q).abs() < EPS => last.1 = bpm,
                _ => merged.push((q, bpm)),
            }
        }
        if merged.first().is_none_or(|p| p.0 > EPS) {
            merged.insert(0, (0.0, DEFAULT_BPM));
        } else {
            merged[0].0 = 0.0;
        }
        let mut segments = Vec::with_capacity(merged.len());
        let mut seconds = 0.0;
        for (i, &(q, bpm)) in merged.iter().enumerate() {
            if i > 0 {
                let (pq, _, pbpm) = segments[i - 1];
                seconds += (q - pq) * 60.0 / pbpm;
            }
            segments.push((q, seconds, bpm));
        }
        let changes = segments
            .iter()
            .map(|&(_, time, bpm)| TempoChange { time, bpm })
            .collect();
        TempoClock { segments, changes }
    }

    fn seconds(&self, quarters: f64) -> f64 {
        let idx = self
            .segments
            .partition_point(|s| s.0 <= quarters)
            .saturating_sub(1);
        let (q, secs, bpm) = self.segments[idx];
        secs + (quarters - q) * 60.0 / bpm
    }
}

/// Shortest rendering with at least three decimals that parses back exactly.
pub(crate) fn format_seconds(x: f64) -> String {
    for places in 3..=17 {
        let s = format!("{x:.places$}");
        if s.parse::<f64>() == Ok(x) {
            return s;
        }
    }
    format!("{x:.17}")
}

pub fn timeline_to_json(t: &ScoreTimeline) -> String {
    events_to_json(t.events())
}

pub fn events_to_json(events: &[NoteEvent]) -> String {
    let mut out = String::from("[");
    for (i, e) in events.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"note\":\"{}\",\"start_time\":{},\"duration\":{}}}",
            e.note_name,
            format_seconds(e.start_time),
            format_seconds(e.duration)
        );
    }
    out.push(']');
    out
}

#[derive(Deserialize)]
struct JsonEvent {
    note: String,
    start_time: f64,
    duration: f64,
}

/// Reads a note list in the timeline JSON format. Any spelling is accepted
/// for `note`; names are normalized to sharps.
pub fn events_from_json(bytes: &[u8]) -> Result<Vec<NoteEvent>, ScoreError> {
    let raw: Vec<JsonEvent> =
        serde_json::from_slice(bytes).map_err(|e| ScoreError::NoteList(e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, e)| {
            let midi = name_to_midi(&e.note)
                .map_err(|err| ScoreError::NoteList(format!("entry {i}: {err}")))?;
            if !(e.start_time.is_finite() && e.start_time >= 0.0) {
                return Err(ScoreError::NoteList(format!("entry {i}: bad start_time")));
            }
            if !(e.duration.is_finite() && e.duration > 0.0) {
                return Err(ScoreError::NoteList(format!(
                    "entry {i}: duration must be positive"
                )));
            }
            Ok(NoteEvent::new(midi, e.start_time, e.duration))
        })
        .collect()
}
