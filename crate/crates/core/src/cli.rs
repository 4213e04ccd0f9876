//! Command-line front end.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use crate::eval::{self, NamedReport, DEFAULT_ONSET_TOLERANCE};
use crate::fingerboard::{format_dump_line, normalize_name, FingerboardTable, Lookup};
use crate::omr::{OmrCommand, OmrError, CLOUD_MESSAGE, OMR_ENV, USER_MESSAGE};
use crate::pipeline::{self, ModeChoice, PipelineError, PipelineOptions, EXIT_INPUT, EXIT_OUTPUT};
use crate::render::{render_frame, Lookahead, RenderConfig};
use crate::score::{events_from_json, ScoreTimeline};
use crate::session::{self, SESSION_BASE_ENV};
use crate::video::{EncoderSpec, ENCODER_ENV};

/// Environment variable selecting the deployment mode (`auto`, `local`, `cloud`).
pub const MODE_ENV: &str = "VIOLIN_FINGERBOARD_MODE";

#[derive(Debug, Parser)]
#[command(
    name = "violin-fingerboard",
    version,
    about = "Turn a violin score into a fingerboard video"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Auto,
    Local,
    Cloud,
}

impl From<ModeArg> for ModeChoice {
    fn from(m: ModeArg) -> ModeChoice {
        match m {
            ModeArg::Auto => ModeChoice::Auto,
            ModeArg::Local => ModeChoice::Local,
            ModeArg::Cloud => ModeChoice::Cloud,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct RenderArgs {
    /// Frames per second.
    #[arg(long, default_value_t = 30)]
    pub fps: u32,
    #[arg(long, default_value_t = 1280)]
    pub width: u32,
    #[arg(long, default_value_t = 720)]
    pub height: u32,
    /// Upcoming-note window: seconds (`1.5`) or beats (`2b`).
    #[arg(long, default_value = "2b", value_parser = parse_lookahead)]
    pub lookahead: Lookahead,
}

impl RenderArgs {
    fn config(&self) -> RenderConfig {
        RenderConfig {
            width: self.width,
            height: self.height,
            fps: self.fps,
            lookahead: self.lookahead,
            ..RenderConfig::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a MusicXML file or score image to an MP4.
    Render {
        input: PathBuf,
        /// Output path; defaults to output.mp4 inside the session directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
        /// ffmpeg executable.
        #[arg(long, env = ENCODER_ENV)]
        encoder: Option<PathBuf>,
        /// OMR executable used for image input.
        #[arg(long, env = OMR_ENV)]
        omr: Option<PathBuf>,
        #[arg(long, env = SESSION_BASE_ENV)]
        session_base: Option<PathBuf>,
        #[arg(long, env = MODE_ENV, value_enum, default_value = "auto")]
        mode: ModeArg,
        /// Remove the session directory once the video is written.
        #[arg(long)]
        cleanup: bool,
    },
    /// Write one frame as PNG.
    Frame {
        input: PathBuf,
        /// Time in seconds.
        #[arg(long)]
        time: f64,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Print the timed note list of a MusicXML file as JSON.
    Parse { input: PathBuf },
    /// Show where a note is played, e.g. `Bb3` or `C#5`.
    Lookup { note: String },
    /// Print the whole fingerboard table.
    Table,
    /// Compare a predicted note list against ground truth.
    Eval {
        /// MusicXML or JSON note list.
        predicted: PathBuf,
        /// MusicXML or JSON note list.
        truth: PathBuf,
        /// Onset tolerance in seconds.
        #[arg(long, default_value_t = DEFAULT_ONSET_TOLERANCE)]
        tolerance: f64,
        #[arg(long)]
        json: bool,
    },
    /// Remove a session, or every session older than a given age.
    Cleanup {
        /// Session ID to remove.
        #[arg(long, conflicts_with = "older_than")]
        session: Option<String>,
        /// Remove sessions older than this many seconds.
        #[arg(long)]
        older_than: Option<u64>,
        #[arg(long, env = SESSION_BASE_ENV)]
        session_base: Option<PathBuf>,
    },
}

fn parse_lookahead(s: &str) -> Result<Lookahead, String> {
    let s = s.trim();
    let (num, beats) = match s.strip_suffix("beats").or_else(|| s.strip_suffix('b')) {
        Some(n) => (n.trim(), true),
        None => (s.strip_suffix('s').unwrap_or(s).trim(), false),
    };
    let v: f64 = num
        .parse()
        .map_err(|_| format!("invalid lookahead {s:?}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!(
            "lookahead must be a non-negative number, got {s:?}"
        ));
    }
    Ok(if beats {
        Lookahead::Beats(v)
    } else {
        Lookahead::Seconds(v)
    })
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn output(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_OUTPUT,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Failure {
        let message = match &e {
            PipelineError::Omr(OmrError::Failed { detail }) => {
                log::info!("recognizer failure: {detail}");
                USER_MESSAGE.to_string()
            }
            PipelineError::Omr(OmrError::Mode) => CLOUD_MESSAGE.to_string(),
            other => other.to_string(),
        };
        Failure {
            code: e.exit_code(),
            message,
        }
    }
}

fn write_stdout(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| Failure::output(format!("cannot write to stdout: {e}")))
}

fn load_notes(path: &Path) -> Result<ScoreTimeline, Failure> {
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let bytes = fs::read(path)
            .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        let events = events_from_json(&bytes)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        Ok(ScoreTimeline::from_events(events))
    } else {
        pipeline::load_score(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }
}

fn run_command(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Render {
            input,
            out,
            render,
            encoder,
            omr,
            session_base,
            mode,
            cleanup,
        } => {
            let opts = PipelineOptions {
                out,
                render: render.config(),
                encoder: encoder.map_or_else(EncoderSpec::from_env, EncoderSpec::ffmpeg),
                session_base: session_base.unwrap_or_else(session::default_base),
                mode: mode.into(),
                omr: omr.map_or_else(OmrCommand::from_env, OmrCommand::oemer),
            };
            let result = pipeline::run_pipeline(&input, &opts)?;
            if result.outcome.is_fallback() {
                log::warn!(
                    "no video encoder found; frames written to {}",
                    result.outcome.path().display()
                );
            }
            eprint!("{}", result.timings);
            if cleanup && opts.out.is_some() {
                session::cleanup(&result.session).map_err(|e| Failure::output(e.to_string()))?;
            } else if cleanup {
                log::warn!("--cleanup ignored: the output lives inside the session; pass --out");
            }
            write_stdout(&format!("{}\n", result.to_json()))
        }
        Command::Frame {
            input,
            time,
            out,
            render,
        } => {
            let timeline = load_notes(&input)?;
            let cfg = render.config();
            let table = FingerboardTable::new();
            let frame = render_frame(&timeline, &table, time, &cfg)
                .map_err(|e| Failure::input(e.to_string()))?;
            frame
                .save_png(&out)
                .map_err(|e| Failure::output(e.to_string()))
        }
        Command::Parse { input } => {
            let timeline = load_notes(&input)?;
            write_stdout(&format!("{}\n", timeline.to_json()))
        }
        Command::Lookup { note } => {
            let name = normalize_name(&note).map_err(|e| Failure::input(e.to_string()))?;
            let table = FingerboardTable::new();
            match table
                .lookup_name(&name)
                .map_err(|e| Failure::input(e.to_string()))?
            {
                Lookup::Found(p) => write_stdout(&format!("{}\n", format_dump_line(p.midi(), &p))),
                Lookup::OutOfRange => write_stdout(&format!("{name}\tout of range\n")),
            }
        }
        Command::Table => write_stdout(&FingerboardTable::new().dump()),
        Command::Eval {
            predicted,
            truth,
            tolerance,
            json,
        } => {
            let started = Instant::now();
            let pred = load_notes(&predicted)?;
            let gold = load_notes(&truth)?;
            let report = eval::evaluate(
                pred.events(),
                gold.events(),
                &FingerboardTable::new(),
                tolerance,
            )
            .map_err(|e| Failure::input(e.to_string()))?;
            if json {
                return write_stdout(&format!("{}\n", report.to_json()));
            }
            let name = predicted
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let row = NamedReport {
                name,
                report,
                seconds: Some(started.elapsed().as_secs_f64()),
            };
            write_stdout(&eval::report_table(&[row]))
        }
        Command::Cleanup {
            session: id,
            older_than,
            session_base,
        } => {
            let base = session_base.unwrap_or_else(session::default_base);
            if let Some(id) = id {
                let found =
                    session::open_session(&base, &id).map_err(|e| Failure::input(e.to_string()))?;
                let Some(s) = found else {
                    return write_stdout(&format!("session {id}: nothing to do\n"));
                };
                let bytes = session::cleanup(&s).map_err(|e| Failure::output(e.to_string()))?;
                write_stdout(&format!("session {id}: removed {bytes} bytes\n"))
            } else {
                let age = Duration::from_secs(older_than.unwrap_or(24 * 3600));
                let r = session::sweep(&base, age).map_err(|e| Failure::output(e.to_string()))?;
                write_stdout(&format!(
                    "removed {} sessions, {} bytes\n",
                    r.sessions, r.bytes
                ))
            }
        }
    }
}

/// Parses arguments, runs one subcommand and maps failures to exit codes:
/// 2 for bad input, 3 for output errors.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
