//! Bridge to an external optical music recognition tool.
//!
//! The recognizer is an opaque executable that reads a score image and writes
//! MusicXML into an output directory. This module only builds its command
//! line, runs it with a timeout, and finds the MusicXML it produced.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant, SystemTime};

use thiserror::Error;

use crate::video::resolve_executable;

/// Path (or name on `PATH`) of the recognizer executable.
pub const OMR_ENV: &str = "VIOLIN_FINGERBOARD_OMR";
/// Any value other than empty, `0` or `false` forces cloud mode.
pub const CLOUD_ENV: &str = "VIOLIN_FINGERBOARD_CLOUD";
pub const OUT_DIR_PLACEHOLDER: &str = "{out_dir}";
pub const IMAGE_PLACEHOLDER: &str = "{image}";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

pub const USER_MESSAGE: &str =
    "The score image could not be recognised. Try a cleaner, well-lit scan, or upload a MusicXML file instead.";
pub const CLOUD_MESSAGE: &str =
    "Image upload is unavailable in cloud mode; only MusicXML files (.xml, .musicxml) are accepted.";

#[derive(Debug, Error)]
pub enum OmrError {
    #[error("{USER_MESSAGE} ({detail})")]
    Failed { detail: String },
    #[error("{CLOUD_MESSAGE}")]
    Mode,
    #[error("bad OMR argument template: {0}")]
    Template(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeploymentMode {
    Local,
    Cloud,
}

/// Read access to environment variables, so mode detection can be tested
/// without touching the process environment.
pub trait EnvView {
    fn var(&self, key: &str) -> Option<String>;
}

pub struct ProcessEnv;

impl EnvView for ProcessEnv {
    fn var(&self, key: &str) -> Option<String> {
        std::env::var(key).ok()
    }
}

impl EnvView for HashMap<String, String> {
    fn var(&self, key: &str) -> Option<String> {
        self.get(key).cloned()
    }
}

fn flag_set(value: Option<String>) -> bool {
    value.is_some_and(|v| {
        let v = v.trim().to_ascii_lowercase();
        !(v.is_empty() || v == "0" || v == "false" || v == "no")
    })
}

fn is_writable_dir(dir: &Path) -> bool {
    if fs::create_dir_all(dir).is_err() {
        return false;
    }
    let probe = dir.join(format!(".write-probe-{:016x}", rand::random::<u64>()));
    match fs::File::create(&probe) {
        Ok(_) => fs::remove_file(&probe).is_ok(),
        Err(_) => false,
    }
}

/// Cloud when the flag is set or the session root cannot be written.
pub fn detect_mode(env: &impl EnvView, session_root: &Path) -> DeploymentMode {
    if flag_set(env.var(CLOUD_ENV)) || !is_writable_dir(session_root) {
        DeploymentMode::Cloud
    } else {
        DeploymentMode::Local
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmrCommand {
    executable: PathBuf,
    arg_template: Vec<String>,
    pub timeout: Duration,
    /// Fixed output file relative to the session directory. When unset the
    /// newest MusicXML file written during the run is used.
    pub output_file: Option<PathBuf>,
}

impl OmrCommand {
    pub fn new(
        executable: impl Into<PathBuf>,
        arg_template: Vec<String>,
    ) -> Result<OmrCommand, OmrError> {
        for placeholder in [OUT_DIR_PLACEHOLDER, IMAGE_PLACEHOLDER] {
            let n: usize = arg_template
                .iter()
                .map(|a| a.matches(placeholder).count())
                .sum();
            if n != 1 {
                return Err(OmrError::Template(format!(
                    "{placeholder} must appear exactly once, found {n}"
                )));
            }
        }
        Ok(OmrCommand {
            executable: executable.into(),
            arg_template,
            timeout: DEFAULT_TIMEOUT,
            output_file: None,
        })
    }

    /// `<exe> -o {out_dir} --save-cache -d {image}`
    pub fn oemer(executable: impl Into<PathBuf>) -> OmrCommand {
        let template = [
            "-o",
            OUT_DIR_PLACEHOLDER,
            "--save-cache",
            "-d",
            IMAGE_PLACEHOLDER,
        ];
        OmrCommand::new(executable, template.iter().map(|s| s.to_string()).collect())
            .expect("default template is valid")
    }

    pub fn from_env() -> OmrCommand {
        match std::env::var_os(OMR_ENV) {
            Some(p) if !p.is_empty() => OmrCommand::oemer(p),
            _ => OmrCommand::oemer("oemer"),
        }
    }

    pub fn executable(&self) -> &Path {
        &self.executable
    }

    pub fn args(&self, out_dir: &Path, image: &Path) -> Vec<String> {
        self.arg_template
            .iter()
            .map(|a| {
                a.replace(OUT_DIR_PLACEHOLDER, &out_dir.to_string_lossy())
                    .replace(IMAGE_PLACEHOLDER, &image.to_string_lossy())
            })
            .collect()
    }
}

fn is_musicxml(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("xml" | "musicxml")
    )
}

fn musicxml_files(dir: &Path, out: &mut HashMap<PathBuf, SystemTime>) {
    let Ok(entries) = fs::read_dir(dir) else {
        return;
    };
    for e in entries.flatten() {
        let path = e.path();
        let Ok(meta) = e.metadata() else { continue };
        if meta.is_dir() {
            musicxml_files(&path, out);
        } else if is_musicxml(&path) {
            out.insert(path, meta.modified().unwrap_or(SystemTime::UNIX_EPOCH));
        }
    }
}

fn drain<R: Read + Send + 'static>(stream: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut text = String::new();
        if let Some(mut s) = stream {
            let _ = s.read_to_string(&mut text);
        }
        text
    })
}

fn wait_with_timeout(
    child: &mut Child,
    timeout: Duration,
) -> io::Result<Option<std::process::ExitStatus>> {
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            child.wait()?;
            return Ok(None);
        }
        thread::sleep(Duration::from_millis(10));
    }
}

/// Runs the recognizer on `image`, writing into `session_dir`, and returns the
/// MusicXML file it produced.
pub fn run_omr(
    image: &Path,
    session_dir: &Path,
    cmd: &OmrCommand,
    mode: DeploymentMode,
) -> Result<PathBuf, OmrError> {
    if mode == DeploymentMode::Cloud {
        return Err(OmrError::Mode);
    }
    let failed = |detail: String| OmrError::Failed { detail };
    if !image.is_file() {
        return Err(failed(format!("image {} not found", image.display())));
    }
    let program = resolve_executable(cmd.executable()).ok_or_else(|| {
        failed(format!(
            "recognizer {} not found",
            cmd.executable().display()
        ))
    })?;

    let mut before = HashMap::new();
    musicxml_files(session_dir, &mut before);

    let mut child = Command::new(&program)
        .args(cmd.args(session_dir, image))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| failed(format!("cannot start {}: {e}", program.display())))?;
    let stdout = drain(child.stdout.take());
    let stderr = drain(child.stderr.take());
    let status = wait_with_timeout(&mut child, cmd.timeout)?;
    let diagnostics = {
        let (out, err) = (
            stdout.join().unwrap_or_default(),
            stderr.join().unwrap_or_default(),
        );
        let mut text = err.trim().to_string();
        if text.is_empty() {
            text = out.trim().to_string();
        }
        text
    };
    match status {
        None => {
            return Err(failed(format!(
                "recognizer timed out after {:?}",
                cmd.timeout
            )))
        }
        Some(s) if !s.success() => {
            let detail = if diagnostics.is_empty() {
                format!("recognizer exited with {s}")
            } else {
                format!("recognizer exited with {s}: {diagnostics}")
            };
            return Err(failed(detail));
        }
        Some(_) => {}
    }

    if let Some(name) = &cmd.output_file {
        let path = session_dir.join(name);
        return if path.is_file() {
            Ok(path)
        } else {
            Err(failed(format!(
                "expected output {} was not written",
                path.display()
            )))
        };
    }
    let mut after = HashMap::new();
    musicxml_files(session_dir, &mut after);
    after
        .into_iter()
        .filter(|(p, t)| before.get(p).is_none_or(|old| t > old))
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
        .map(|(p, _)| p)
        .ok_or_else(|| failed("recognizer produced no MusicXML".into()))
}
