//! All-or-nothing output: each file is written to a temporary sibling and
//! renamed into place only after every file of the command is ready.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use tempfile::NamedTempFile;

pub fn write_all(files: &[(PathBuf, String)]) -> anyhow::Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, contents) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, path));
    }
    let mut placed: Vec<&PathBuf> = Vec::new();
    for (tmp, path) in staged {
        if let Err(e) = tmp.persist(path) {
            for p in placed {
                let _ = std::fs::remove_file(p);
            }
            return Err(e.error).with_context(|| format!("cannot create {}", path.display()));
        }
        placed.push(path);
    }
    Ok(())
}

/// Writes `contents` to `out`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, contents: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => write_all(&[(path.to_path_buf(), contents.to_owned())]),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
