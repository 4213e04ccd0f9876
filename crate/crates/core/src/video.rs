//! MP4 assembly through an external encoder process.
//!
//! Frames are streamed as raw RGB24 to the encoder's stdin while a producer
//! thread keeps rendering ahead through a small bounded queue, so the whole
//! video is never held in memory. When no encoder can be found, the frames are
//! written as a numbered PNG sequence instead.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc::sync_channel;
use std::thread;

use thiserror::Error;

use crate::render::{Frame, RenderError};

/// Overrides the encoder executable.
pub const ENCODER_ENV: &str = "VIOLIN_FINGERBOARD_ENCODER";
/// Raw pixel layout sent to the encoder.
pub const PIXEL_FORMAT: &str = "rgb24";

const QUEUE_DEPTH: usize = 8;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("encoder exited with {status}: {diagnostics}")]
    Encoder { status: String, diagnostics: String },
    #[error("no frames to encode")]
    NoFrames,
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    FrameSize {
        index: u64,
        got: (u32, u32),
        expected: (u32, u32),
    },
    #[error(transparent)]
    Png(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    pub executable: PathBuf,
    /// Output options placed between the raw-video input description and the
    /// output path.
    pub extra_args: Vec<String>,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::ffmpeg("ffmpeg")
    }
}

impl EncoderSpec {
    /// H.264 in an MP4 container with 4:2:0 chroma.
    pub fn ffmpeg(executable: impl Into<PathBuf>) -> EncoderSpec {
        let extra = [
            "-c:v",
            "libx264",
            "-preset",
            "fast",
            "-pix_fmt",
            "yuv420p",
            "-movflags",
            "+faststart",
        ];
        EncoderSpec {
            executable: executable.into(),
            extra_args: extra.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// `ffmpeg` from `PATH`, unless [`ENCODER_ENV`] names another executable.
    pub fn from_env() -> EncoderSpec {
        match std::env::var_os(ENCODER_ENV) {
            Some(path) if !path.is_empty() => EncoderSpec::ffmpeg(path),
            _ => EncoderSpec::default(),
        }
    }

    /// The executable to run, if it exists and is executable.
    pub fn resolve(&self) -> Option<PathBuf> {
        resolve_executable(&self.executable)
    }

    fn command(&self, program: &Path, width: u32, height: u32, fps: u32, out: &Path) -> Command {
        let mut cmd = Command::new(program);
        cmd.args(["-hide_banner", "-loglevel", "error", "-nostdin", "-y"])
            .args(["-f", "rawvideo", "-pix_fmt", PIXEL_FORMAT])
            .arg("-s")
            .arg(format!("{width}x{height}"))
            .arg("-r")
            .arg(fps.to_string())
            .args(["-i", "-"])
            .args(&self.extra_args)
            .arg(out);
        cmd
    }
}

pub(crate) fn resolve_executable(exe: &Path) -> Option<PathBuf> {
    if exe.as_os_str().is_empty() {
        return None;
    }
    if exe.components().count() > 1 {
        return is_executable(exe).then(|| exe.to_path_buf());
    }
    let path = std::env::var_os("PATH").unwrap_or_default();
    std::env::split_paths(&path)
        .map(|dir| dir.join(exe))
        .find(|candidate| is_executable(candidate))
}

fn is_executable(path: &Path) -> bool {
    let Ok(meta) = fs::metadata(path) else {
        return false;
    };
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        meta.is_file() && meta.permissions().mode() & 0o111 != 0
    }
    #[cfg(not(unix))]
    {
        meta.is_file()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodeOutcome {
    Video {
        path: PathBuf,
        bytes: u64,
        frames: u64,
    },
    /// No encoder was available; frames were written as PNG files.
    FallbackUsed { dir: PathBuf, frames: u64 },
}

impl EncodeOutcome {
    pub fn frames(&self) -> u64 {
        match self {
            EncodeOutcome::Video { frames, .. } | EncodeOutcome::FallbackUsed { frames, .. } => {
                *frames
            }
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            EncodeOutcome::Video { path, .. } => path,
            EncodeOutcome::FallbackUsed { dir, .. } => dir,
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, EncodeOutcome::FallbackUsed { .. })
    }
}

/// Directory used for the PNG fallback: `<out stem>_frames` beside `out`.
pub fn fallback_dir(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into());
    out.with_file_name(format!("{stem}_frames"))
}

/// Encodes `frames` to `out` at `fps`. Frames are produced on a separate
/// thread and written to the encoder strictly in order.
pub fn encode<I>(
    frames: I,
    fps: u32,
    out: &Path,
    spec: &EncoderSpec,
) -> Result<EncodeOutcome, EncodeError>
where
    I: Iterator<Item = Frame> + Send,
{
    thread::scope(|scope| {
        let (tx, rx) = sync_channel::<Frame>(QUEUE_DEPTH);
        scope.spawn(move || {
            for frame in frames {
                if tx.send(frame).is_err() {
                    break;
                }
            }
        });
        let mut queue = rx.into_iter();
        let first = queue.next().ok_or(EncodeError::NoFrames)?;
        let stream = std::iter::once(first).chain(queue);
        match spec.resolve() {
            Some(program) => stream_to_encoder(stream, fps, out, spec, &program),
            None => {
                log::warn!(
                    "encoder {} not found; writing PNG frames instead",
                    spec.executable.display()
                );
                write_png_sequence(stream, &fallback_dir(out))
            }
        }
    })
}

fn write_png_sequence(
    frames: impl Iterator<Item = Frame>,
    dir: &Path,
) -> Result<EncodeOutcome, EncodeError> {
    fs::create_dir_all(dir)?;
    let mut count = 0;
    for frame in frames {
        frame.save_png(&dir.join(format!("frame_{count:06}.png")))?;
        count += 1;
    }
    Ok(EncodeOutcome::FallbackUsed {
        dir: dir.to_path_buf(),
        frames: count,
    })
}

fn stream_to_encoder(
    mut frames: impl Iterator<Item = Frame>,
    fps: u32,
    out: &Path,
    spec: &EncoderSpec,
    program: &Path,
) -> Result<EncodeOutcome, EncodeError> {
    let first = frames.next().ok_or(EncodeError::NoFrames)?;
    let size = (first.width(), first.height());
    let mut child = match spec
        .command(program, size.0, size.1, fps, out)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(child) => child,
        Err(e)
            if matches!(
                e.kind(),
                io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied
            ) =>
        {
            log::warn!(
                "cannot start encoder {}: {e}; writing PNG frames instead",
                program.display()
            );
            return write_png_sequence(std::iter::once(first).chain(frames), &fallback_dir(out));
        }
        Err(e) => return Err(e.into()),
    };

    let mut stderr = child.stderr.take().expect("stderr is piped");
    let diagnostics = thread::spawn(move || {
        let mut text = String::new();
        let _ = stderr.read_to_string(&mut text);
        text
    });

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let mut written = 0u64;
    let mut failure: Option<EncodeError> = None;
    for frame in std::iter::once(first).chain(frames) {
        if (frame.width(), frame.height()) != size {
            failure = Some(EncodeError::FrameSize {
                index: frame.index,
                got: (frame.width(), frame.height()),
                expected: size,
            });
            break;
        }
        if let Err(e) = stdin.write_all(frame.pixels()) {
            if e.kind() != io::ErrorKind::BrokenPipe {
                failure = Some(e.into());
            }
            break;
        }
        written += 1;
    }
    drop(stdin);
    let status = child.wait()?;
    let diagnostics = diagnostics.join().unwrap_or_default();

    let result = match failure {
        Some(e) => Err(e),
        None if !status.success() => Err(EncodeError::Encoder {
            status: status.to_string(),
            diagnostics: diagnostics.trim().to_string(),
        }),
        None => match fs::metadata(out) {
            Ok(meta) => Ok(EncodeOutcome::Video {
                path: out.to_path_buf(),
                bytes: meta.len(),
                frames: written,
            }),
            Err(_) => Err(EncodeError::Encoder {
                status: status.to_string(),
                diagnostics: format!("encoder produced no file at {}", out.display()),
            }),
        },
    };
    if result.is_err() {
        let _ = fs::remove_file(out);
    }
    result
}
