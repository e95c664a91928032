use crate::config::InputFormat;
use anyhow::{bail, Context, Result};
use mgmask::clipio::{parse_rvc, parse_y4m};
use mgmask::motionfield::read_mvf;
use mgmask::{Clip, MotionField};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Expands files and directories into a sorted, de-duplicated file list.
/// Directory entries are kept when their extension matches one of `accept`.
pub fn collect(inputs: &[PathBuf], accept: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for entry in fs::read_dir(input).with_context(|| format!("reading {}", input.display()))? {
                let path = entry?.path();
                let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
                if path.is_file() && accept.iter().any(|a| a.eq_ignore_ascii_case(ext)) {
                    files.push(path);
                }
            }
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            bail!("input {} does not exist", input.display());
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".to_string())
}

pub fn format_of(path: &Path, forced: Option<InputFormat>) -> Result<InputFormat> {
    if let Some(f) = forced {
        return Ok(f);
    }
    path.extension()
        .and_then(|e| e.to_str())
        .and_then(InputFormat::from_extension)
        .with_context(|| format!("cannot infer format of {}; pass --format", path.display()))
}

pub fn load_clip(path: &Path, format: InputFormat) -> Result<Clip> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match format {
        InputFormat::Rvc => parse_rvc(&bytes)?,
        InputFormat::Y4m => parse_y4m(&bytes)?,
        InputFormat::Mvf => bail!("{} is a motion field, not a clip", path.display()),
    })
}

pub fn load_mvf(path: &Path) -> Result<MotionField> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_mvf(&bytes)?)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    let dest = dir.join(name);
    tmp.persist(&dest)
        .with_context(|| format!("renaming into {}", dest.display()))?;
    Ok(dest)
}
