//! Pitch to string/finger placement lookup for the violin, G3 through G6.
//!
//! Every string carries sixteen semitone slots (open plus fifteen stopped
//! positions), giving 64 `(string, offset)` placements in total. Of those, one
//! preferred placement is chosen per pitch: the highest string whose open
//! pitch does not exceed the note. That rule favours open strings and keeps
//! the hand as close to the nut as the tuning allows.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::pitch::{midi_to_sharp_name, name_to_midi, MidiNote, Pitch, PitchError};

/// Lowest covered pitch (open G string).
pub const LOWEST: u8 = 55;
/// Highest covered pitch (G6, offset 15 on the E string).
pub const HIGHEST: u8 = 91;
/// Semitone slots per string, including the open string.
pub const SLOTS_PER_STRING: u8 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerboardError {
    #[error(transparent)]
    Name(#[from] PitchError),
    #[error("coverage needs at least one pitch")]
    EmptyCoverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolinString {
    G,
    D,
    A,
    E,
}

impl ViolinString {
    /// Low to high.
    pub const ALL: [ViolinString; 4] = [
        ViolinString::G,
        ViolinString::D,
        ViolinString::A,
        ViolinString::E,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViolinString::G => "G",
            ViolinString::D => "D",
            ViolinString::A => "A",
            ViolinString::E => "E",
        }
    }

    pub fn roman_label(self) -> &'static str {
        match self {
            ViolinString::G => "IV",
            ViolinString::D => "III",
            ViolinString::A => "II",
            ViolinString::E => "I",
        }
    }

    pub fn open_midi(self) -> MidiNote {
        let v = match self {
            ViolinString::G => 55,
            ViolinString::D => 62,
            ViolinString::A => 69,
            ViolinString::E => 76,
        };
        MidiNote::new(v).expect("open strings are valid MIDI")
    }

    /// 0 for G through 3 for E.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ViolinString {
    /// `G (IV)` style, as printed in fingering charts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.roman_label())
    }
}

/// Which finger covers a semitone offset in the first-position hand frame.
pub fn finger_for_offset(offset: u8) -> u8 {
    match offset {
        0 => 0,
        1..=2 => 1,
        3..=4 => 2,
        5..=6 => 3,
        _ => 4,
    }
}

const POSITION_LABELS: [&str; SLOTS_PER_STRING as usize] = [
    "open", "-1", "1", "2", "2", "2+", "3", "3+", "4", "4+", "5", "5+", "6", "6+", "7", "7+",
];

/// Tape-marker label for a semitone offset. Offsets past the table return `None`.
pub fn position_label(offset: u8) -> Option<&'static str> {
    POSITION_LABELS.get(offset as usize).copied()
}

/// Where and how to play one pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Placement {
    pub string: ViolinString,
    pub semitone_offset: u8,
    pub finger: u8,
    pub position_label: &'static str,
}

impl Placement {
    fn at(string: ViolinString, semitone_offset: u8) -> Placement {
        Placement {
            string,
            semitone_offset,
            finger: finger_for_offset(semitone_offset),
            position_label: POSITION_LABELS[semitone_offset as usize],
        }
    }

    /// The sounding pitch of this placement.
    pub fn midi(&self) -> MidiNote {
        MidiNote::new(self.string.open_midi().value() + self.semitone_offset)
            .expect("placements stay below MIDI 92")
    }
}

/// Result of a table lookup. Out-of-range pitches are skipped by callers,
/// never treated as failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lookup {
    Found(Placement),
    OutOfRange,
}

impl Lookup {
    pub fn placement(self) -> Option<Placement> {
        match self {
            Lookup::Found(p) => Some(p),
            Lookup::OutOfRange => None,
        }
    }

    pub fn is_out_of_range(self) -> bool {
        matches!(self, Lookup::OutOfRange)
    }
}

/// The full 64-slot fingerboard plus the preferred placement per pitch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingerboardTable {
    // indexed by midi - LOWEST
    preferred: Vec<Placement>,
    // indexed by string index * 16 + offset
    all: Vec<Placement>,
}

impl Default for FingerboardTable {
    fn default() -> Self {
        build_table()
    }
}

pub fn build_table() -> FingerboardTable {
    let all = ViolinString::ALL
        .iter()
        .flat_map(|&s| (0..SLOTS_PER_STRING).map(move |off| Placement::at(s, off)))
        .collect();
    let preferred = (LOWEST..=HIGHEST)
        .map(|m| {
            let string = ViolinString::ALL
                .iter()
                .rev()
                .copied()
                .find(|s| s.open_midi().value() <= m)
                .expect("G string is open at the lowest covered pitch");
            Placement::at(string, m - string.open_midi().value())
        })
        .collect();
    FingerboardTable { preferred, all }
}

impl FingerboardTable {
    pub fn new() -> FingerboardTable {
        build_table()
    }

    pub fn lookup(&self, m: MidiNote) -> Lookup {
        let v = m.value();
        if (LOWEST..=HIGHEST).contains(&v) {
            Lookup::Found(self.preferred[(v - LOWEST) as usize])
        } else {
            Lookup::OutOfRange
        }
    }

    /// Looks up a note name in any spelling (flats are folded to sharps first).
    pub fn lookup_name(&self, name: &str) -> Result<Lookup, FingerboardError> {
        Ok(self.lookup(name_to_midi(name)?))
    }

    /// Any of the 64 slots, including the alternatives `lookup` never returns.
    pub fn placement_at(&self, string: ViolinString, offset: u8) -> Option<Placement> {
        (offset < SLOTS_PER_STRING)
            .then(|| self.all[string.index() * SLOTS_PER_STRING as usize + offset as usize])
    }

    /// Preferred placements, ascending by pitch.
    pub fn entries(&self) -> impl Iterator<Item = (MidiNote, Placement)> + '_ {
        self.preferred.iter().map(|p| (p.midi(), *p))
    }

    /// All 64 `(string, offset)` slots, string-major.
    pub fn all_entries(&self) -> &[Placement] {
        &self.all
    }

    /// Tab-separated dump, one line per preferred entry:
    /// `midi  name  string  finger  label`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (m, p) in self.entries() {
            out.push_str(&format_dump_line(m, &p));
            out.push('\n');
        }
        out
    }
}

pub fn format_dump_line(m: MidiNote, p: &Placement) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}",
        m.value(),
        midi_to_sharp_name(m),
        p.string,
        p.finger,
        p.position_label
    )
}

/// Rewrites any spelling to its sharps-only equivalent (`Bb3` -> `A#3`).
pub fn normalize_name(name: &str) -> Result<String, FingerboardError> {
    Ok(midi_to_sharp_name(name_to_midi(name)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub total: usize,
    pub covered: usize,
    pub fraction: f64,
}

fn report(total: usize, covered: usize) -> Result<CoverageReport, FingerboardError> {
    if total == 0 {
        return Err(FingerboardError::EmptyCoverage);
    }
    Ok(CoverageReport {
        total,
        covered,
        fraction: covered as f64 / total as f64,
    })
}

fn in_range(m: MidiNote) -> bool {
    (LOWEST..=HIGHEST).contains(&m.value())
}

/// Fraction of distinct pitches that have a placement.
pub fn coverage(pitches: &BTreeSet<MidiNote>) -> Result<CoverageReport, FingerboardError> {
    report(
        pitches.len(),
        pitches.iter().filter(|&&m| in_range(m)).count(),
    )
}

/// Like [`coverage`], but counts written spellings separately, so `Bb4` and
/// `A#4` are two pitches. This is how a repertoire's note inventory is usually
/// tallied.
pub fn coverage_spelled(pitches: &HashSet<Pitch>) -> Result<CoverageReport, FingerboardError> {
    report(
        pitches.len(),
        pitches.iter().filter(|p| in_range(p.midi())).count(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: u8) -> MidiNote {
        MidiNote::new(v).unwrap()
    }

    fn found(tbl: &FingerboardTable, v: u8) -> Placement {
        tbl.lookup(m(v)).placement().expect("in range")
    }

    #[test]
    fn strings_are_fifths_apart() {
        for w in ViolinString::ALL.windows(2) {
            assert_eq!(w[1].open_midi().value() - w[0].open_midi().value(), 7);
        }
    }

    #[test]
    fn builder_examples() {
        let tbl = build_table();
        let p = found(&tbl, 62);
        assert_eq!(
            (p.string, p.semitone_offset, p.finger, p.position_label),
            (ViolinString::D, 0, 0, "open")
        );
        let p = found(&tbl, 67);
        assert_eq!(
            (p.string, p.semitone_offset, p.finger, p.position_label),
            (ViolinString::D, 5, 3, "2+")
        );
        let p = found(&tbl, 79);
        assert_eq!(
            (p.string, p.semitone_offset, p.finger, p.position_label),
            (ViolinString::E, 3, 2, "2")
        );
        let p = found(&tbl, 91);
        assert_eq!(
            (p.string, p.semitone_offset, p.finger, p.position_label),
            (ViolinString::E, 15, 4, "7+")
        );
        let p = found(&tbl, 72);
        assert_eq!(
            (p.string, p.semitone_offset, p.finger, p.position_label),
            (ViolinString::A, 3, 2, "2")
        );
    }

    #[test]
    fn out_of_range_is_a_value() {
        let tbl = build_table();
        assert_eq!(tbl.lookup(m(54)), Lookup::OutOfRange);
        assert_eq!(tbl.lookup(m(92)), Lookup::OutOfRange);
        assert_eq!(tbl.lookup(m(0)), Lookup::OutOfRange);
        assert_eq!(tbl.lookup(m(127)), Lookup::OutOfRange);
    }

    // independent oracle: scan all 64 slots for the smallest offset
    #[test]
    fn preferred_is_minimal_offset_over_all_slots() {
        let tbl = build_table();
        for v in LOWEST..=HIGHEST {
            let best = tbl
                .all_entries()
                .iter()
                .filter(|p| p.midi().value() == v)
                .min_by_key(|p| p.semitone_offset)
                .unwrap();
            assert_eq!(found(&tbl, v), *best, "midi {v}");
        }
    }

    #[test]
    fn placement_invariants() {
        let tbl = build_table();
        assert_eq!(tbl.all_entries().len(), 64);
        assert_eq!(tbl.entries().count(), 37);
        let distinct: BTreeSet<_> = tbl
            .all_entries()
            .iter()
            .map(|p| (p.string, p.semitone_offset))
            .collect();
        assert_eq!(distinct.len(), 64);
        for p in tbl.all_entries() {
            assert_eq!(p.finger == 0, p.semitone_offset == 0);
            assert_eq!(
                p.midi().value() - p.string.open_midi().value(),
                p.semitone_offset
            );
        }
        for s in ViolinString::ALL {
            let p = tbl.lookup(s.open_midi()).placement().unwrap();
            assert_eq!((p.string, p.finger), (s, 0));
        }
        assert_eq!(
            tbl.placement_at(ViolinString::G, 7).unwrap().midi().value(),
            62
        );
        assert!(tbl.placement_at(ViolinString::G, 16).is_none());
    }

    #[test]
    fn normalize() {
        assert_eq!(normalize_name("Bb3").unwrap(), "A#3");
        assert_eq!(normalize_name("C4").unwrap(), "C4");
        assert_eq!(normalize_name("Fb4").unwrap(), "E4");
        assert!(matches!(
            normalize_name("Q4"),
            Err(FingerboardError::Name(_))
        ));
    }

    #[test]
    fn enharmonic_lookups_agree() {
        let tbl = build_table();
        for (a, b) in [
            ("Bb3", "A#3"),
            ("Db5", "C#5"),
            ("Gb4", "F#4"),
            ("E#4", "F4"),
            ("Cb5", "B4"),
        ] {
            assert_eq!(tbl.lookup_name(a).unwrap(), tbl.lookup_name(b).unwrap());
        }
    }

    #[test]
    fn coverage_examples() {
        let set = |vs: &[u8]| vs.iter().map(|&v| m(v)).collect::<BTreeSet<_>>();
        assert_eq!(coverage(&set(&[55, 62, 69, 76])).unwrap().fraction, 1.0);
        assert_eq!(coverage(&set(&[55, 93])).unwrap().fraction, 0.5);
        assert_eq!(
            coverage(&BTreeSet::new()),
            Err(FingerboardError::EmptyCoverage)
        );
    }

    #[test]
    fn spelled_coverage_counts_spellings() {
        let set: HashSet<Pitch> = ["Bb4", "A#4", "G3", "F#3", "Ab6"]
            .iter()
            .map(|n| n.parse().unwrap())
            .collect();
        let r = coverage_spelled(&set).unwrap();
        assert_eq!((r.total, r.covered), (5, 3));
        assert_eq!(
            coverage_spelled(&HashSet::new()),
            Err(FingerboardError::EmptyCoverage)
        );
    }

    #[test]
    fn dump_format() {
        let dump = build_table().dump();
        let lines: Vec<_> = dump.lines().collect();
        assert_eq!(lines.len(), 37);
        assert_eq!(lines[0], "55\tG3\tG (IV)\t0\topen");
        assert_eq!(lines[36], "91\tG6\tE (I)\t4\t7+");
    }
}
