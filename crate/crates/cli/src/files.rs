//! Path conventions shared by the subcommands.
//!
//! Datasets live in flat directories where every file is named
//! `<id>.<role>.<ext>`: `0007.points.csv`, `0007.gt.raw`,
//! `0007.truth.toml`, `0007.gmm.toml`, `0007.pred.raw`. Batch commands
//! pair files across directories by sorted order, so matching ids line up
//! as long as both sides use the same zero-padded naming.

use std::fs;
use std::path::{Path, PathBuf};

use sgmm_core::io::MapFormat;
use sgmm_core::{Result, SgmmError};

/// `<id>.<role>.<ext>` → `<id>`; files without dots keep their full name.
pub fn image_id(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("map");
    name.split('.').next().unwrap_or(name).to_string()
}

/// `.pgm` selects the viewable format, everything else the lossless dump.
pub fn map_format(path: &Path) -> MapFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => MapFormat::Pgm,
        _ => MapFormat::F64Raw,
    }
}

/// Sorted listing of the regular files in `dir` whose names end with
/// `suffix`.
pub fn list_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let ctx = || format!("listing {}", dir.display());
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| SgmmError::io(ctx(), e))? {
        let entry = entry.map_err(|e| SgmmError::io(ctx(), e))?;
        let path = entry.path();
        let is_match = path.is_file()
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(suffix));
        if is_match {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(SgmmError::DegenerateInput(format!(
            "no *{suffix} files in {}",
            dir.display()
        )));
    }
    Ok(out)
}

/// The inputs a batch command walks: a lone file or a directory scan.
pub fn inputs(path: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        list_suffix(path, suffix)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

pub fn require_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref()
        .ok_or_else(|| SgmmError::DegenerateInput("--out is required for this command".into()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| SgmmError::io(format!("creating directory {}", dir.display()), e))
}
