//! Per-run scratch directories.
//!
//! Every pipeline run gets its own directory named with a 128-bit random hex
//! ID, so concurrent runs never touch each other's files. Directories live
//! until [`cleanup`] (or [`sweep`]) removes them.

use std::fs::{self, DirBuilder};
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use thiserror::Error;

/// Overrides the directory sessions are created under.
pub const SESSION_BASE_ENV: &str = "VIOLIN_FINGERBOARD_SESSION_BASE";
const DIR_PREFIX: &str = "session-";
const ID_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot create session under {base}: {source}")]
    Create { base: PathBuf, source: io::Error },
    #[error("{0:?} is not a session id")]
    BadId(String),
    #[error("could not remove {} entries: {}", .survivors.len(), list_paths(.survivors))]
    Partial { survivors: Vec<PathBuf> },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn list_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    id: String,
    root: PathBuf,
    created_at: SystemTime,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn created_at(&self) -> SystemTime {
        self.created_at
    }

    /// A path inside the session directory.
    pub fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.root.join(name)
    }
}

/// `$VIOLIN_FINGERBOARD_SESSION_BASE`, or `violin-fingerboard` under the
/// system temp directory.
pub fn default_base() -> PathBuf {
    match std::env::var_os(SESSION_BASE_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => std::env::temp_dir().join("violin-fingerboard"),
    }
}

pub fn is_valid_id(id: &str) -> bool {
    id.len() == ID_LEN
        && id
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

fn dir_name(id: &str) -> String {
    format!("{DIR_PREFIX}{id}")
}

fn new_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

pub fn create_session(base: &Path) -> Result<Session, SessionError> {
    let err = |source| SessionError::Create {
        base: base.to_path_buf(),
        source,
    };
    fs::create_dir_all(base).map_err(err)?;
    loop {
        let id = new_id();
        let root = base.join(dir_name(&id));
        let mut builder = DirBuilder::new();
        #[cfg(unix)]
        {
            use std::os::unix::fs::DirBuilderExt;
            builder.mode(0o700);
        }
        match builder.create(&root) {
            Ok(()) => {
                return Ok(Session {
                    id,
                    root,
                    created_at: SystemTime::now(),
                })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(err(e)),
        }
    }
}

/// Re-opens an existing session by ID. `Ok(None)` when it does not exist.
pub fn open_session(base: &Path, id: &str) -> Result<Option<Session>, SessionError> {
    if !is_valid_id(id) {
        return Err(SessionError::BadId(id.to_string()));
    }
    let root = base.join(dir_name(id));
    match fs::symlink_metadata(&root) {
        Ok(meta) if meta.is_dir() => Ok(Some(Session {
            id: id.to_string(),
            created_at: meta
                .created()
                .or_else(|_| meta.modified())
                .unwrap_or(SystemTime::UNIX_EPOCH),
            root,
        })),
        Ok(_) => Ok(None),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Total size of regular files under `path`, without following symlinks.
fn tree_bytes(path: &Path) -> u64 {
    let Ok(meta) = fs::symlink_metadata(path) else {
        return 0;
    };
    if !meta.is_dir() {
        return meta.len();
    }
    fs::read_dir(path)
        .map(|entries| entries.flatten().map(|e| tree_bytes(&e.path())).sum())
        .unwrap_or(0)
}

fn survivors(path: &Path, out: &mut Vec<PathBuf>) {
    if let Ok(entries) = fs::read_dir(path) {
        for e in entries.flatten() {
            let p = e.path();
            if e.file_type().map(|t| t.is_dir()).unwrap_or(false) {
                survivors(&p, out);
            }
            out.push(p);
        }
    }
}

/// Removes the session directory and everything in it, returning the bytes
/// reclaimed. Removing an already-removed session returns 0.
pub fn cleanup(session: &Session) -> Result<u64, SessionError> {
    let root = session.root();
    if fs::symlink_metadata(root).is_err() {
        return Ok(0);
    }
    let bytes = tree_bytes(root);
    match fs::remove_dir_all(root) {
        Ok(()) => Ok(bytes),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(bytes),
        Err(_) => {
            let mut left = Vec::new();
            survivors(root, &mut left);
            left.push(root.to_path_buf());
            Err(SessionError::Partial { survivors: left })
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub sessions: usize,
    pub bytes: u64,
}

/// Removes every session under `base` last modified more than `older_than` ago.
pub fn sweep(base: &Path, older_than: Duration) -> Result<SweepReport, SessionError> {
    let mut report = SweepReport::default();
    let entries = match fs::read_dir(base) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(report),
        Err(e) => return Err(e.into()),
    };
    let now = SystemTime::now();
    let mut failed = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name();
        let Some(id) = name.to_str().and_then(|n| n.strip_prefix(DIR_PREFIX)) else {
            continue;
        };
        let Some(session) = open_session(base, id).ok().flatten() else {
            continue;
        };
        let modified = entry.metadata().and_then(|m| m.modified()).unwrap_or(now);
        if now.duration_since(modified).unwrap_or_default() < older_than {
            continue;
        }
        match cleanup(&session) {
            Ok(bytes) => {
                report.sessions += 1;
                report.bytes += bytes;
            }
            Err(SessionError::Partial { survivors }) => failed.extend(survivors),
            Err(e) => return Err(e),
        }
    }
    if failed.is_empty() {
        Ok(report)
    } else {
        Err(SessionError::Partial { survivors: failed })
    }
}
