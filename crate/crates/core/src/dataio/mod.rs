//! On-disk artifacts: session audio, clip manifests, embedding tables and
//! the CSV tables exchanged between pipeline stages.

mod manifest;
mod tables;
pub mod wav;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use manifest::{read_manifest, write_manifest};
pub use tables::{
    read_annotations, read_embeddings, read_features, read_labels, read_results,
    write_annotations, write_embeddings, write_features, write_labels, write_results,
};

/// One speaker's mono track.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub speaker_id: String,
    pub samples: Vec<f32>,
}

/// All speaker tracks of one recorded session on a shared sample clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionAudio {
    pub session_id: String,
    pub sample_rate: u32,
    pub tracks: Vec<Track>,
}

impl SessionAudio {
    pub fn n_samples(&self) -> usize {
        self.tracks.iter().map(|t| t.samples.len()).min().unwrap_or(0)
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate as f64
    }
}

/// Reads a directory of `<speaker_id>.wav` files into a session.
///
/// The session id is the directory name. Tracks are ordered by speaker id.
/// Track lengths may differ by at most 50 ms (one default analysis frame);
/// longer tracks are truncated to the shortest one.
pub fn read_session_audio(dir: &Path) -> Result<SessionAudio> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(invalid!("{}: no .wav tracks found", dir.display()));
    }
    let session_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("session")
        .to_string();

    let mut sample_rate = None;
    let mut tracks = Vec::with_capacity(paths.len());
    for path in &paths {
        let w = wav::read_wav(path)?;
        match sample_rate {
            None => sample_rate = Some(w.sample_rate),
            Some(r) if r != w.sample_rate => {
                return Err(invalid!(
                    "{}: mismatched sample rates ({} Hz vs {} Hz)",
                    dir.display(),
                    r,
                    w.sample_rate
                ))
            }
            _ => {}
        }
        let speaker_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        tracks.push(Track {
            speaker_id,
            samples: w.samples,
        });
    }
    let sample_rate = sample_rate.expect("at least one track");
    let min_len = tracks.iter().map(|t| t.samples.len()).min().unwrap_or(0);
    let max_len = tracks.iter().map(|t| t.samples.len()).max().unwrap_or(0);
    let tolerance = (sample_rate as usize / 20).max(1);
    if max_len - min_len > tolerance {
        return Err(invalid!(
            "{}: track lengths differ by {} samples (more than one frame)",
            dir.display(),
            max_len - min_len
        ));
    }
    for t in &mut tracks {
        t.samples.truncate(min_len);
    }
    Ok(SessionAudio {
        session_id,
        sample_rate,
        tracks,
    })
}

/// Writes each track as `<speaker_id>.wav` (float-32) under `dir`.
pub fn write_session_audio(session: &SessionAudio, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in &session.tracks {
        let path = dir.join(format!("{}.wav", t.speaker_id));
        wav::write_wav(&path, session.sample_rate, wav::SampleFormat::Float32, &t.samples)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipKind {
    TargetedGap,
    TargetedOverlap,
    NonTargeted,
}

impl ClipKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClipKind::TargetedGap => "targeted_gap",
            ClipKind::TargetedOverlap => "targeted_overlap",
            ClipKind::NonTargeted => "non_targeted",
        }
    }

    pub fn is_targeted(self) -> bool {
        !matches!(self, ClipKind::NonTargeted)
    }
}

impl fmt::Display for ClipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClipKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "targeted_gap" => Ok(ClipKind::TargetedGap),
            "targeted_overlap" => Ok(ClipKind::TargetedOverlap),
            "non_targeted" => Ok(ClipKind::NonTargeted),
            other => Err(invalid!("unknown clip kind {other:?}")),
        }
    }
}

/// A 7-second clip cut from a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub clip_id: String,
    pub session_id: String,
    pub mark_time: f64,
    pub span: (f64, f64),
    pub kind: ClipKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Face,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Face, Modality::Text];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Face => "face",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Modality::Audio),
            "face" => Ok(Modality::Face),
            "text" => Ok(Modality::Text),
            other => Err(invalid!("unknown modality {other:?}")),
        }
    }
}

/// One row of an embedding table.
///
/// Several rows may share a `(clip_id, modality)` key: audio rows are
/// per-frame embeddings and face rows are per-time-step action-unit
/// intensities of one participant, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub clip_id: String,
    pub modality: Modality,
    pub participant: Option<String>,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn dims(&self) -> usize {
        self.vector.len()
    }
}

/// Formats `x` with `digits` significant decimal digits, trimming trailing
/// zeros. Used for every real-valued cell written by this crate.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Canonical 9-significant-digit form for feature values.
pub fn format_feature(x: f64) -> String {
    format_sig(x, 9)
}
