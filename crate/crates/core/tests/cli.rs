mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{cat_encoder, fixture_24, script};
use violin_fingerboard::omr::{CLOUD_MESSAGE, USER_MESSAGE};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_violin-fingerboard"));
    for var in [
        "VIOLIN_FINGERBOARD_ENCODER",
        "VIOLIN_FINGERBOARD_OMR",
        "VIOLIN_FINGERBOARD_CLOUD",
        "VIOLIN_FINGERBOARD_MODE",
        "VIOLIN_FINGERBOARD_SESSION_BASE",
    ] {
        cmd.env_remove(var);
    }
    cmd
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().unwrap();
    (
        status.code().unwrap_or(-1),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn write_fixture(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("scale.musicxml");
    fs::write(&p, fixture_24()).unwrap();
    p
}

#[test]
fn lookup_normalizes_flats() {
    let (code, out, _) = run(bin().args(["lookup", "Bb3"]));
    assert_eq!(code, 0);
    assert_eq!(out, "58\tA#3\tG (IV)\t2\t2\n");
}

#[test]
fn lookup_out_of_range_is_not_an_error() {
    let (code, out, _) = run(bin().args(["lookup", "G#6"]));
    assert_eq!(code, 0);
    assert!(out.contains("out of range"));
}

#[test]
fn lookup_bad_name_exits_2() {
    let (code, out, err) = run(bin().args(["lookup", "H2"]));
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("H2"));
}

#[test]
fn table_prints_37_rows() {
    let (code, out, _) = run(bin().arg("table"));
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 37);
    assert!(out.starts_with("55\tG3\tG (IV)\t0\topen\n"));
}

#[test]
fn parse_emits_json_timeline() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let (code, out, _) = run(bin().arg("parse").arg(&input));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let notes = v.as_array().unwrap();
    assert_eq!(notes.len(), 24);
    assert_eq!(notes[0]["note"], "G3");
    assert_eq!(notes[1]["start_time"].as_f64(), Some(0.5));
}

#[test]
fn parse_rejects_compressed_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let mxl = dir.path().join("a.mxl");
    fs::write(&mxl, b"PK\x03\x04").unwrap();
    assert_eq!(run(bin().arg("parse").arg(&mxl)).0, 2);
    let bad = dir.path().join("bad.xml");
    fs::write(&bad, "<score-partwise><part").unwrap();
    let (code, _, err) = run(bin().arg("parse").arg(&bad));
    assert_eq!(code, 2);
    assert!(err.contains("bad.xml"));
}

#[test]
fn eval_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_fixture(dir.path());
    let (code, out, _) = run(bin().arg("eval").arg(&truth).arg(&truth));
    assert_eq!(code, 0);
    assert!(out.starts_with("Score"));
    assert!(out.contains("100.0%"));

    let pred = dir.path().join("pred.json");
    fs::write(
        &pred,
        r#"[{"note":"G3","start_time":0.03,"duration":0.5},
            {"note":"Cb4","start_time":0.5,"duration":0.5}]"#,
    )
    .unwrap();
    let (code, out, _) = run(bin().arg("eval").arg(&pred).arg(&truth).arg("--json"));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["matched"], 1);
    assert_eq!(v["truth"], 24);
}

#[test]
fn render_with_stub_encoder_reports_json_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let out = dir.path().join("video.mp4");
    let (code, stdout, stderr) = run(bin()
        .arg("render")
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .arg("--encoder")
        .arg(cat_encoder(dir.path()))
        .args(["--width", "320", "--height", "240", "--fps", "10"])
        .arg("--session-base")
        .arg(dir.path().join("s")));
    assert_eq!(code, 0, "{stderr}");
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["notes"], 24);
    assert!(v["timings"]["omr"].is_null());
    let frames = v["frames"].as_u64().unwrap();
    assert_eq!(fs::metadata(&out).unwrap().len(), frames * 320 * 240 * 3);
    assert!(stderr.contains("Total"));
    assert!(stderr
        .lines()
        .any(|l| l.starts_with("OMR") && l.ends_with("N/A")));
}

#[test]
fn render_without_encoder_writes_png_frames() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let out = dir.path().join("clip.mp4");
    let (code, stdout, _) = run(bin()
        .arg("render")
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .arg("--encoder")
        .arg(dir.path().join("no-such-ffmpeg"))
        .args(["--width", "320", "--height", "240", "--fps", "2"])
        .arg("--session-base")
        .arg(dir.path().join("s")));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["fallback"], true);
    let frames_dir = dir.path().join("clip_frames");
    assert!(frames_dir.join("frame_000000.png").is_file());
    let n = fs::read_dir(&frames_dir).unwrap().count() as u64;
    assert_eq!(n, v["frames"].as_u64().unwrap());
}

#[test]
fn render_encoder_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let broken = script(
        dir.path(),
        "broken",
        "cat > /dev/null; echo 'codec exploded' >&2; exit 1",
    );
    let out = dir.path().join("v.mp4");
    let (code, _, err) = run(bin()
        .arg("render")
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .arg("--encoder")
        .arg(&broken)
        .args(["--width", "320", "--height", "240", "--fps", "2"])
        .arg("--session-base")
        .arg(dir.path().join("s")));
    assert_eq!(code, 3);
    assert!(err.contains("codec exploded"));
    assert!(!out.exists());
}

#[test]
fn render_image_in_cloud_mode_refuses() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("scan.jpg");
    fs::write(&image, b"jpeg").unwrap();
    let (code, _, err) = run(bin()
        .arg("render")
        .arg(&image)
        .arg("--session-base")
        .arg(dir.path().join("s"))
        .env("VIOLIN_FINGERBOARD_CLOUD", "1"));
    assert_eq!(code, 2);
    assert!(err.contains(CLOUD_MESSAGE));
}

#[test]
fn render_image_with_failing_recognizer() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("scan.png");
    fs::write(&image, b"png").unwrap();
    let omr = script(dir.path(), "omr", "exit 9");
    let (code, _, err) = run(bin()
        .arg("render")
        .arg(&image)
        .arg("--session-base")
        .arg(dir.path().join("s"))
        .env("VIOLIN_FINGERBOARD_OMR", &omr)
        .env("VIOLIN_FINGERBOARD_MODE", "local"));
    assert_eq!(code, 2);
    assert!(err.contains(USER_MESSAGE));
}

#[test]
fn render_unsupported_extension_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let pdf = dir.path().join("score.pdf");
    fs::write(&pdf, b"%PDF").unwrap();
    assert_eq!(run(bin().arg("render").arg(&pdf)).0, 2);
}

#[test]
fn frame_writes_png() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let png = dir.path().join("f.png");
    let (code, _, err) = run(bin()
        .arg("frame")
        .arg(&input)
        .args([
            "--time", "1.25", "--width", "320", "--height", "240", "--out",
        ])
        .arg(&png));
    assert_eq!(code, 0, "{err}");
    assert_eq!(&fs::read(&png).unwrap()[1..4], b"PNG");
}

#[test]
fn cleanup_session_and_unknown_id() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("s");
    let input = write_fixture(dir.path());
    let (_, stdout, _) = run(bin()
        .arg("render")
        .arg(&input)
        .arg("--out")
        .arg(dir.path().join("v.mp4"))
        .arg("--encoder")
        .arg(cat_encoder(dir.path()))
        .args(["--width", "320", "--height", "240", "--fps", "2"])
        .arg("--session-base")
        .arg(&base));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let id = v["session"].as_str().unwrap().to_string();
    assert!(base.join(format!("session-{id}")).is_dir());

    let (code, out, _) = run(bin()
        .args(["cleanup", "--session", &id])
        .arg("--session-base")
        .arg(&base));
    assert_eq!(code, 0);
    assert!(out.contains("removed"));
    assert!(!base.join(format!("session-{id}")).exists());

    let (code, out, _) = run(bin()
        .args(["cleanup", "--session", &id])
        .arg("--session-base")
        .arg(&base));
    assert_eq!(code, 0);
    assert!(out.contains("nothing to do"));

    let (code, _, _) = run(bin()
        .args(["cleanup", "--session", "nope"])
        .arg("--session-base")
        .arg(&base));
    assert_eq!(code, 2);
}

#[test]
fn cleanup_sweep_by_age() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("s");
    fs::create_dir_all(base.join(format!("session-{}", "a".repeat(32)))).unwrap();
    let (code, out, _) = run(bin()
        .args(["cleanup", "--older-than", "0"])
        .arg("--session-base")
        .arg(&base));
    assert_eq!(code, 0);
    assert_eq!(out, "removed 1 sessions, 0 bytes\n");
}

fn notes_json(notes: &[(&str, f64, f64)]) -> String {
    let items: Vec<String> = notes
        .iter()
        .map(|(n, s, d)| format!(r#"{{"note":"{n}","start_time":{s},"duration":{d}}}"#))
        .collect();
    format!("[{}]", items.join(","))
}

#[test]
fn parse_rests_only_prints_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("rests.xml");
    fs::write(
        &input,
        common::score_xml(1, None, &[vec![common::Item::Rest(4)]]),
    )
    .unwrap();
    let (code, out, _) = run(bin().arg("parse").arg(&input));
    assert_eq!((code, out.as_str()), (0, "[]\n"));
}

#[test]
fn eval_missing_note_and_zero_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.json");
    let pred = dir.path().join("pred.json");
    fs::write(
        &truth,
        notes_json(&[
            ("G3", 0.0, 0.5),
            ("A3", 0.5, 0.5),
            ("B3", 1.0, 0.5),
            ("C4", 1.5, 0.5),
        ]),
    )
    .unwrap();
    fs::write(
        &pred,
        notes_json(&[("G3", 0.0, 0.5), ("A3", 0.52, 0.5), ("B3", 1.0, 0.5)]),
    )
    .unwrap();
    let eval = |extra: &[&str]| {
        let (code, out, _) = run(bin()
            .arg("eval")
            .arg(&pred)
            .arg(&truth)
            .arg("--json")
            .args(extra));
        assert_eq!(code, 0);
        serde_json::from_str::<serde_json::Value>(&out).unwrap()
    };
    assert_eq!(eval(&[])["note_accuracy"], 0.75);
    // the A3 onset is 20 ms off, so only G3 and B3 survive an exact match
    let exact = eval(&["--tolerance", "0"]);
    assert_eq!(exact["matched"], 2);
    assert_eq!(exact["note_accuracy"], 0.5);

    fs::write(&pred, "[{\"note\":\"G3\"}]").unwrap();
    assert_eq!(run(bin().arg("eval").arg(&pred).arg(&truth)).0, 2);
}

#[test]
fn cleanup_sweep_on_empty_base() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(bin()
        .args(["cleanup", "--older-than", "0", "--session-base"])
        .arg(dir.path().join("never-created")));
    assert_eq!(code, 0);
    assert_eq!(out, "removed 0 sessions, 0 bytes\n");
}
