//! File emission. Every writer goes through here so paths are reported
//! consistently.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Creates `dir/name` (and `dir`), returning the writer and the path.
pub fn create(dir: &Path, name: &str) -> anyhow::Result<(BufWriter<File>, PathBuf)> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((BufWriter::new(file), path))
}

/// Serializes `value` as pretty JSON into `dir/name`.
pub fn json<T: serde::Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    let (w, path) = create(dir, name)?;
    tchain_core::io::write_json(value, w)?;
    Ok(path)
}
