use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub const LOCK_FILE: &str = ".factsurv.lock";

/// Files produced by a command, keyed by path relative to the output directory.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct OutputSet {
    files: BTreeMap<PathBuf, Vec<u8>>,
}

impl OutputSet {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.insert(path.into(), bytes);
    }

    pub fn add_json<T: Serialize + ?Sized>(&mut self, path: impl Into<PathBuf>, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        bytes.push(b'\n');
        self.add(path, bytes);
        Ok(())
    }

    pub fn extend(&mut self, other: OutputSet) {
        self.files.extend(other.files);
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    /// Writes every file through a temporary sibling and a rename.
    pub fn write_to(&self, root: &Path) -> Result<(), CliError> {
        for (rel, bytes) in &self.files {
            let path = root.join(rel);
            let parent = path.parent().unwrap_or(root);
            fs::create_dir_all(parent)?;
            let mut tmp = tempfile::Builder::new()
                .prefix(".tmp-")
                .tempfile_in(parent)?;
            tmp.write_all(bytes)?;
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
            }
            tmp.as_file().sync_data()?;
            tmp.persist(&path)
                .map_err(|e| CliError::Data(format!("cannot write {}: {}", path.display(), e.error)))?;
        }
        Ok(())
    }
}

/// Exclusive ownership of an output directory for the life of the guard.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Data(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("invalid {}: {e}", path.display())))
}

/// `*.json` files directly under `dir`, sorted by name; empty when `dir` is absent.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Safe file stem for a label.
pub fn stem(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
