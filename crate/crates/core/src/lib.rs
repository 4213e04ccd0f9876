//! Violin fingerboard tutor pipeline.
//!
//! A MusicXML score (or a score image run through an external OMR tool)
//! becomes a timed list of notes, each note is resolved to a string and
//! finger, and the result is drawn frame by frame onto a fingerboard diagram
//! and encoded to video. The [`eval`] module scores predicted note lists
//! against ground truth.

pub mod cli;
pub mod eval;
pub mod fingerboard;
pub mod omr;
pub mod pipeline;
pub mod pitch;
pub mod render;
pub mod score;
pub mod session;
pub mod video;

pub use fingerboard::{
    build_table, coverage, coverage_spelled, normalize_name, FingerboardTable, Lookup, Placement,
    ViolinString,
};
pub use pitch::{midi_to_sharp_name, pitch_to_midi, MidiNote, Pitch, Step};
pub use score::{parse_musicxml, timeline_to_json, NoteEvent, ScoreError, ScoreTimeline};
