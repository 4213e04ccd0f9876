//! Note names, accidentals and MIDI arithmetic.
//!
//! Octaves follow the convention where middle C is `C4` = MIDI 60. Names
//! produced by this module use naturals and sharps only, so every MIDI value
//! has exactly one canonical spelling.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PitchError {
    #[error("pitch {name} is outside the MIDI range 0..=127 (got {value})")]
    Range { name: String, value: i32 },
    #[error("alteration {0} is outside -2..=2")]
    Alter(i32),
    #[error("octave {0} is outside -1..=9")]
    Octave(i32),
    #[error("cannot parse note name {0:?}")]
    Name(String),
}

/// Diatonic step letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Step {
    pub const ALL: [Step; 7] = [
        Step::C,
        Step::D,
        Step::E,
        Step::F,
        Step::G,
        Step::A,
        Step::B,
    ];

    /// Semitones above C within one octave.
    pub fn semitone(self) -> i32 {
        match self {
            Step::C => 0,
            Step::D => 2,
            Step::E => 4,
            Step::F => 5,
            Step::G => 7,
            Step::A => 9,
            Step::B => 11,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Step::C => 'C',
            Step::D => 'D',
            Step::E => 'E',
            Step::F => 'F',
            Step::G => 'G',
            Step::A => 'A',
            Step::B => 'B',
        }
    }

    pub fn from_letter(c: char) -> Option<Step> {
        match c.to_ascii_uppercase() {
            'C' => Some(Step::C),
            'D' => Some(Step::D),
            'E' => Some(Step::E),
            'F' => Some(Step::F),
            'G' => Some(Step::G),
            'A' => Some(Step::A),
            'B' => Some(Step::B),
            _ => None,
        }
    }
}

/// A MIDI note number, always within `0..=127`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MidiNote(u8);

impl MidiNote {
    pub const MAX: u8 = 127;

    pub fn new(value: u8) -> Option<MidiNote> {
        (value <= Self::MAX).then_some(MidiNote(value))
    }

    pub fn from_i32(value: i32) -> Option<MidiNote> {
        u8::try_from(value).ok().and_then(MidiNote::new)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Canonical naturals-and-sharps spelling, e.g. `A#3` for 58.
    pub fn sharp_name(self) -> String {
        midi_to_sharp_name(self)
    }
}

impl fmt::Display for MidiNote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A spelled pitch: step letter, chromatic alteration and octave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pitch {
    step: Step,
    alter: i8,
    octave: i8,
}

impl Pitch {
    /// Builds a pitch, rejecting alterations beyond a double sharp/flat and
    /// spellings that fall outside the MIDI range.
    pub fn new(step: Step, alter: i32, octave: i32) -> Result<Pitch, PitchError> {
        if !(-2..=2).contains(&alter) {
            return Err(PitchError::Alter(alter));
        }
        if !(-1..=9).contains(&octave) {
            return Err(PitchError::Octave(octave));
        }
        let pitch = Pitch {
            step,
            alter: alter as i8,
            octave: octave as i8,
        };
        let value = pitch.raw_midi();
        if !(0..=127).contains(&value) {
            return Err(PitchError::Range {
                name: pitch.to_string(),
                value,
            });
        }
        Ok(pitch)
    }

    pub fn step(&self) -> Step {
        self.step
    }

    pub fn alter(&self) -> i32 {
        self.alter as i32
    }

    pub fn octave(&self) -> i32 {
        self.octave as i32
    }

    fn raw_midi(&self) -> i32 {
        12 * (self.octave as i32 + 1) + self.step.semitone() + self.alter as i32
    }

    pub fn midi(&self) -> MidiNote {
        pitch_to_midi(self)
    }
}

impl fmt::Display for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let accidental = match self.alter {
            -2 => "bb",
            -1 => "b",
            1 => "#",
            2 => "##",
            _ => "",
        };
        write!(f, "{}{}{}", self.step.letter(), accidental, self.octave)
    }
}

impl FromStr for Pitch {
    type Err = PitchError;

    /// Accepts a letter, up to two accidentals (`#`, `b`, `x`, `♯`, `♭`) and
    /// an octave number, e.g. `Bb3`, `F##4`, `C-1`.
    fn from_str(s: &str) -> Result<Pitch, PitchError> {
        let bad = || PitchError::Name(s.to_string());
        let trimmed = s.trim();
        let mut chars = trimmed.chars();
        let step = chars.next().and_then(Step::from_letter).ok_or_else(bad)?;
        let rest = chars.as_str();
        let octave_start = rest
            .find(|c: char| c.is_ascii_digit() || c == '-')
            .ok_or_else(bad)?;
        let (accidentals, octave) = rest.split_at(octave_start);
        let mut alter = 0i32;
        let mut count = 0;
        for c in accidentals.chars() {
            alter += match c {
                '#' | '♯' => 1,
                'x' | '𝄪' => 2,
                'b' | '♭' => -1,
                _ => return Err(bad()),
            };
            count += 1;
        }
        if count > 2 {
            return Err(bad());
        }
        let octave: i32 = octave.parse().map_err(|_| bad())?;
        Pitch::new(step, alter, octave)
    }
}

/// `12 * (octave + 1) + semitone(step) + alter`.
pub fn pitch_to_midi(p: &Pitch) -> MidiNote {
    // construction guarantees the range
    MidiNote(p.raw_midi() as u8)
}

const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

pub fn midi_to_sharp_name(m: MidiNote) -> String {
    let v = m.0 as i32;
    format!("{}{}", SHARP_NAMES[(v % 12) as usize], v / 12 - 1)
}

/// Parses any supported spelling and returns its MIDI value.
pub fn name_to_midi(name: &str) -> Result<MidiNote, PitchError> {
    name.parse::<Pitch>().map(|p| p.midi())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn midi(step: Step, alter: i32, octave: i32) -> u8 {
        pitch_to_midi(&Pitch::new(step, alter, octave).unwrap()).value()
    }

    #[test]
    fn table_anchored_values() {
        assert_eq!(midi(Step::C, 0, 4), 60);
        assert_eq!(midi(Step::A, 0, 4), 69);
        assert_eq!(midi(Step::B, -1, 3), 58);
    }

    #[test]
    fn sharp_names() {
        assert_eq!(midi_to_sharp_name(MidiNote(55)), "G3");
        assert_eq!(midi_to_sharp_name(MidiNote(58)), "A#3");
        assert_eq!(midi_to_sharp_name(MidiNote(76)), "E5");
        assert_eq!(midi_to_sharp_name(MidiNote(0)), "C-1");
        assert_eq!(midi_to_sharp_name(MidiNote(127)), "G9");
    }

    #[test]
    fn octave_boundary() {
        assert_eq!(name_to_midi("B3").unwrap().value(), 59);
        assert_eq!(name_to_midi("C4").unwrap().value(), 60);
        assert_eq!(name_to_midi("B#3").unwrap().value(), 60);
        assert_eq!(name_to_midi("Cb4").unwrap().value(), 59);
    }

    #[test]
    fn double_accidentals_collapse() {
        assert_eq!(name_to_midi("F##4").unwrap(), name_to_midi("G4").unwrap());
        assert_eq!(name_to_midi("Fx4").unwrap(), name_to_midi("G4").unwrap());
        assert_eq!(name_to_midi("Abb4").unwrap(), name_to_midi("G4").unwrap());
        assert_eq!(name_to_midi("B♭3").unwrap().value(), 58);
    }

    #[test]
    fn rejects_out_of_range_and_garbage() {
        assert!(matches!(
            Pitch::new(Step::G, 1, 9),
            Err(PitchError::Range { value: 128, .. })
        ));
        assert!(matches!(
            Pitch::new(Step::C, -1, -1),
            Err(PitchError::Range { .. })
        ));
        assert!(matches!(
            Pitch::new(Step::C, 3, 4),
            Err(PitchError::Alter(3))
        ));
        assert!(matches!(
            Pitch::new(Step::C, 0, 10),
            Err(PitchError::Octave(10))
        ));
        for bad in ["", "H4", "C", "C#b#4", "Cq4", "C4.5", "4C", "Cbbb4"] {
            assert!(bad.parse::<Pitch>().is_err(), "{bad:?} should not parse");
        }
        assert!(MidiNote::new(128).is_none());
        assert!(MidiNote::from_i32(-1).is_none());
    }

    proptest! {
        #[test]
        fn sharp_name_round_trip(v in 0u8..=127) {
            let m = MidiNote::new(v).unwrap();
            prop_assert_eq!(name_to_midi(&midi_to_sharp_name(m)).unwrap(), m);
        }

        #[test]
        fn flat_equals_sharp_equivalent(step_idx in 0usize..7, octave in 0i32..9) {
            let step = Step::ALL[step_idx];
            let flat = Pitch::new(step, -1, octave).unwrap();
            let lower = MidiNote::from_i32(flat.midi().value() as i32).unwrap();
            let sharp_spelling: Pitch = midi_to_sharp_name(lower).parse().unwrap();
            prop_assert_eq!(sharp_spelling.midi(), flat.midi());
            prop_assert!(sharp_spelling.alter() >= 0);
        }
    }
}
