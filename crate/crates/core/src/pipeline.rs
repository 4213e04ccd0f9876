//! End-to-end run: input file to fingerboard video, with per-stage timings.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::fingerboard::FingerboardTable;
use crate::omr::{self, DeploymentMode, OmrCommand, OmrError, ProcessEnv};
use crate::render::{render_all, Frame, RenderConfig, RenderError};
use crate::score::{parse_musicxml_detailed, ScoreError, ScoreTimeline};
use crate::session::{self, Session, SessionError};
use crate::video::{encode, EncodeError, EncodeOutcome, EncoderSpec};

/// Exit status for bad input or failed recognition.
pub const EXIT_INPUT: i32 = 2;
/// Exit status for output, encoding or filesystem failures.
pub const EXIT_OUTPUT: i32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Score(#[from] ScoreError),
    #[error("{0}")]
    Omr(#[from] OmrError),
    #[error("unsupported input {0}: expected .xml, .musicxml, .png or .jpg")]
    UnsupportedInput(PathBuf),
    #[error("cannot read {path}: {source}")]
    ReadInput {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Session(#[from] SessionError),
    #[error("{0}")]
    Render(#[from] RenderError),
    #[error("{0}")]
    Encode(#[from] EncodeError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Score(_)
            | PipelineError::Omr(_)
            | PipelineError::UnsupportedInput(_)
            | PipelineError::ReadInput { .. } => EXIT_INPUT,
            PipelineError::Render(RenderError::Config(_)) => EXIT_INPUT,
            _ => EXIT_OUTPUT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    MusicXml,
    Image,
}

impl InputKind {
    pub fn of(path: &Path) -> Result<InputKind, PipelineError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("xml" | "musicxml") => Ok(InputKind::MusicXml),
            Some("png" | "jpg" | "jpeg") => Ok(InputKind::Image),
            Some("mxl") => Err(ScoreError::CompressedContainer.into()),
            _ => Err(PipelineError::UnsupportedInput(path.to_path_buf())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeChoice {
    #[default]
    Auto,
    Local,
    Cloud,
}

impl ModeChoice {
    pub fn resolve(self, session_base: &Path) -> DeploymentMode {
        match self {
            ModeChoice::Auto => omr::detect_mode(&ProcessEnv, session_base),
            ModeChoice::Local => DeploymentMode::Local,
            ModeChoice::Cloud => DeploymentMode::Cloud,
        }
    }
}

/// Seconds spent in each stage. Rendering and encoding run concurrently;
/// `render` is the time spent drawing frames and `encode` the remainder of
/// that combined stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageTimings {
    pub save_upload: f64,
    pub omr: Option<f64>,
    pub parse: f64,
    pub render: f64,
    pub encode: f64,
    pub total: f64,
}

impl fmt::Display for StageTimings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = |v: f64| format!("{v:.3}");
        let rows = [
            ("Save uploaded file", secs(self.save_upload)),
            ("OMR", self.omr.map_or_else(|| "N/A".into(), secs)),
            ("Parse MusicXML", secs(self.parse)),
            ("Render frames", secs(self.render)),
            ("Encode video", secs(self.encode)),
            ("Total", secs(self.total)),
        ];
        writeln!(f, "{:<20}{:>10}", "Stage", "Time (s)")?;
        for (name, value) in rows {
            writeln!(f, "{name:<20}{value:>10}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Output video path; defaults to `output.mp4` inside the session.
    pub out: Option<PathBuf>,
    pub render: RenderConfig,
    pub encoder: EncoderSpec,
    pub session_base: PathBuf,
    pub mode: ModeChoice,
    pub omr: OmrCommand,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            out: None,
            render: RenderConfig::default(),
            encoder: EncoderSpec::from_env(),
            session_base: session::default_base(),
            mode: ModeChoice::Auto,
            omr: OmrCommand::from_env(),
        }
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub session: Session,
    pub outcome: EncodeOutcome,
    pub timings: StageTimings,
    pub notes: usize,
    /// Notes with no fingerboard placement, left out of the video.
    pub out_of_range: usize,
}

impl PipelineOutput {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            output: String,
            fallback: bool,
            frames: u64,
            session: &'a str,
            notes: usize,
            out_of_range: usize,
            timings: StageTimings,
        }
        serde_json::to_string(&Summary {
            output: self.outcome.path().display().to_string(),
            fallback: self.outcome.is_fallback(),
            frames: self.outcome.frames(),
            session: self.session.id(),
            notes: self.notes,
            out_of_range: self.out_of_range,
            timings: self.timings,
        })
        .expect("summary serializes")
    }
}

/// Parses a MusicXML file, logging any parser warnings.
pub fn load_score(path: &Path) -> Result<ScoreTimeline, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::ReadInput {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = parse_musicxml_detailed(&bytes)?;
    for w in &parsed.warnings {
        log::warn!("{}: {}", path.display(), w.0);
    }
    Ok(parsed.timeline)
}

/// Renders a timeline and streams it to the encoder. Returns the outcome and
/// the time spent drawing frames.
pub fn render_and_encode(
    timeline: &ScoreTimeline,
    table: &FingerboardTable,
    cfg: &RenderConfig,
    encoder: &EncoderSpec,
    out: &Path,
) -> Result<(EncodeOutcome, Duration), PipelineError> {
    let frames = render_all(timeline, table, cfg)?;
    let mut drawing = Duration::ZERO;
    let timed = TimedFrames {
        inner: frames,
        spent: &mut drawing,
    };
    let outcome = encode(timed, cfg.fps, out, encoder)?;
    Ok((outcome, drawing))
}

struct TimedFrames<'a, I> {
    inner: I,
    spent: &'a mut Duration,
}

impl<I: Iterator<Item = Frame>> Iterator for TimedFrames<'_, I> {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        let started = Instant::now();
        let frame = self.inner.next();
        *self.spent += started.elapsed();
        frame
    }
}

/// Runs the full pipeline for one input file inside a fresh session.
pub fn run_pipeline(input: &Path, opts: &PipelineOptions) -> Result<PipelineOutput, PipelineError> {
    let started = Instant::now();
    let kind = InputKind::of(input)?;
    if !input.is_file() {
        return Err(PipelineError::ReadInput {
            path: input.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    let mode = opts.mode.resolve(&opts.session_base);
    if kind == InputKind::Image && mode == DeploymentMode::Cloud {
        return Err(OmrError::Mode.into());
    }
    opts.render.validate()?;

    let session = session::create_session(&opts.session_base)?;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let file_name = input
        .file_name()
        .map(PathBuf::from)
        .unwrap_or_else(|| "upload".into());
    let upload_dir = session.path("upload");
    fs::create_dir(&upload_dir)?;
    let saved = upload_dir.join(file_name);
    fs::copy(input, &saved)?;
    timings.save_upload = t.elapsed().as_secs_f64();

    let score_path = match kind {
        InputKind::MusicXml => saved,
        InputKind::Image => {
            let t = Instant::now();
            let omr_dir = session.path("omr");
            fs::create_dir(&omr_dir)?;
            let path = omr::run_omr(&saved, &omr_dir, &opts.omr, mode)?;
            timings.omr = Some(t.elapsed().as_secs_f64());
            path
        }
    };

    let t = Instant::now();
    let timeline = load_score(&score_path)?;
    timings.parse = t.elapsed().as_secs_f64();

    let table = FingerboardTable::new();
    let out_of_range = timeline
        .events()
        .iter()
        .filter(|e| table.lookup(e.midi).is_out_of_range())
        .inspect(|e| {
            log::warn!(
                "{} is outside the fingerboard table and is skipped",
                e.note_name
            )
        })
        .count();

    let out = opts
        .out
        .clone()
        .unwrap_or_else(|| session.path("output.mp4"));
    let t = Instant::now();
    let (outcome, drawing) =
        render_and_encode(&timeline, &table, &opts.render, &opts.encoder, &out)?;
    let stage = t.elapsed();
    timings.render = drawing.as_secs_f64();
    timings.encode = stage.saturating_sub(drawing).as_secs_f64();
    timings.total = started.elapsed().as_secs_f64();

    Ok(PipelineOutput {
        session,
        outcome,
        timings,
        notes: timeline.events().len(),
        out_of_range,
    })
}
