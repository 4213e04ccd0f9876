#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

/// One element of a single-voice line, durations in divisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Item {
    Note { midi: u8, flat: bool, dur: u32 },
    Rest(u32),
}

impl Item {
    pub fn dur(&self) -> u32 {
        match *self {
            Item::Note { dur, .. } | Item::Rest(dur) => dur,
        }
    }
}

const SHARP_STEPS: [(&str, i32); 12] = [
    ("C", 0),
    ("C", 1),
    ("D", 0),
    ("D", 1),
    ("E", 0),
    ("F", 0),
    ("F", 1),
    ("G", 0),
    ("G", 1),
    ("A", 0),
    ("A", 1),
    ("B", 0),
];

const FLAT_STEPS: [(&str, i32); 12] = [
    ("C", 0),
    ("D", -1),
    ("D", 0),
    ("E", -1),
    ("E", 0),
    ("F", 0),
    ("G", -1),
    ("G", 0),
    ("A", -1),
    ("A", 0),
    ("B", -1),
    ("B", 0),
];

/// Step, alter and octave for `midi`, spelled with sharps or flats.
pub fn spell(midi: u8, flat: bool) -> (&'static str, i32, i32) {
    let table = if flat { &FLAT_STEPS } else { &SHARP_STEPS };
    let (step, alter) = table[(midi % 12) as usize];
    (step, alter, midi as i32 / 12 - 1)
}

pub fn item_xml(item: &Item) -> String {
    match *item {
        Item::Note { midi, flat, dur } => {
            let (step, alter, octave) = spell(midi, flat);
            let alter = if alter != 0 {
                format!("<alter>{alter}</alter>")
            } else {
                String::new()
            };
            format!(
                "<note><pitch><step>{step}</step>{alter}<octave>{octave}</octave></pitch>\
                 <duration>{dur}</duration><voice>1</voice></note>"
            )
        }
        Item::Rest(dur) => {
            format!("<note><rest/><duration>{dur}</duration><voice>1</voice></note>")
        }
    }
}

/// Partwise MusicXML for one violin part; each inner slice is one measure.
pub fn score_xml(divisions: u32, bpm: Option<f64>, measures: &[Vec<Item>]) -> String {
    let mut body = String::new();
    for (k, items) in measures.iter().enumerate() {
        body.push_str(&format!("<measure number=\"{}\">", k + 1));
        if k == 0 {
            body.push_str(&format!(
                "<attributes><divisions>{divisions}</divisions><time><beats>4</beats><beat-type>4</beat-type></time></attributes>"
            ));
            if let Some(t) = bpm {
                body.push_str(&format!("<direction><sound tempo=\"{t}\"/></direction>"));
            }
        }
        for it in items {
            body.push_str(&item_xml(it));
        }
        body.push_str("</measure>\n");
    }
    format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<score-partwise version="3.1">
<part-list><score-part id="P1"><part-name>Violin</part-name></score-part></part-list>
<part id="P1">
{body}</part>
</score-partwise>
"#
    )
}

/// Splits a flat line into measures of `per_measure` items.
pub fn in_measures(items: &[Item], per_measure: usize) -> Vec<Vec<Item>> {
    items.chunks(per_measure).map(<[Item]>::to_vec).collect()
}

/// 24 quarter notes at 120 BPM: a G-major two-octave scale up and down with
/// a few rests.
pub fn fixture_24() -> String {
    let scale = [55u8, 57, 59, 60, 62, 64, 66, 67, 69, 71, 72, 74, 76];
    let mut items = Vec::new();
    for &m in scale.iter().chain(scale.iter().rev().skip(1)).take(24) {
        items.push(Item::Note {
            midi: m,
            flat: false,
            dur: 1,
        });
        if items.len() % 9 == 0 {
            items.push(Item::Rest(1));
        }
    }
    score_xml(1, Some(120.0), &in_measures(&items, 4))
}

/// ffmpeg from the encoder variable, `PATH`, or the imageio-ffmpeg wheel.
pub fn find_ffmpeg() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("VIOLIN_FINGERBOARD_ENCODER") {
        let p = PathBuf::from(p);
        if p.is_file() {
            return Some(p);
        }
    }
    if let Ok(out) = Command::new("ffmpeg").arg("-version").output() {
        if out.status.success() {
            return Some(PathBuf::from("ffmpeg"));
        }
    }
    let out = Command::new("python3")
        .args([
            "-c",
            "import imageio_ffmpeg; print(imageio_ffmpeg.get_ffmpeg_exe())",
        ])
        .output()
        .ok()?;
    let path = PathBuf::from(String::from_utf8(out.stdout).ok()?.trim());
    (out.status.success() && path.is_file()).then_some(path)
}

/// Writes an executable shell script.
pub fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    }
    path
}

/// Encoder stub that copies the raw frame stream to the output path.
pub fn cat_encoder(dir: &Path) -> PathBuf {
    script(
        dir,
        "fake-ffmpeg",
        r#"for a; do out="$a"; done; cat > "$out""#,
    )
}

/// MP4 files open with an `ftyp` box.
pub fn looks_like_mp4(path: &Path) -> bool {
    fs::read(path).is_ok_and(|b| b.len() > 12 && &b[4..8] == b"ftyp")
}
