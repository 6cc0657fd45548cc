use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::ClipManifest;
use crate::error::{invalid, Error, Result};

fn check_unique<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(invalid!("duplicate clip_id {id:?}"));
        }
    }
    Ok(())
}

/// Writes one JSON object per line, fields in declaration order.
pub fn write_manifest(clips: &[ClipManifest], path: &Path) -> Result<()> {
    check_unique(clips.iter().map(|c| c.clip_id.as_str()))?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for clip in clips {
        let line = serde_json::to_string(clip).expect("manifest serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ClipManifest>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut clips = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let clip: ClipManifest =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if !seen.insert(clip.clip_id.clone()) {
            return Err(Error::parse(
                path,
                i + 1,
                format!("duplicate clip_id {:?}", clip.clip_id),
            ));
        }
        clips.push(clip);
    }
    Ok(clips)
}
