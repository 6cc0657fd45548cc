//! Annotator reliability filtering, rating aggregation, binarization and the
//! 2×2 contingency test between the two rating scales.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};

/// The two rated scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Fluidity,
    Enjoyment,
}

impl Scale {
    pub const ALL: [Scale; 2] = [Scale::Fluidity, Scale::Enjoyment];

    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Fluidity => "fluidity",
            Scale::Enjoyment => "enjoyment",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fluidity" => Ok(Scale::Fluidity),
            "enjoyment" => Ok(Scale::Enjoyment),
            other => Err(invalid!("unknown target {other:?} (expected fluidity or enjoyment)")),
        }
    }
}

/// One line of `annotations.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub clip_id: String,
    pub annotator_id: String,
    pub fluidity: u8,
    pub enjoyment: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rating {
    pub fluidity: u8,
    pub enjoyment: u8,
}

impl Rating {
    pub fn get(self, scale: Scale) -> u8 {
        match scale {
            Scale::Fluidity => self.fluidity,
            Scale::Enjoyment => self.enjoyment,
        }
    }
}

/// Likert ratings keyed by `(clip_id, annotator_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    pub ratings: BTreeMap<(String, String), Rating>,
    /// Clips rated by every annotator and used to score reliability.
    pub reliability_clips: Vec<String>,
}

impl AnnotationSet {
    pub fn from_rows(rows: &[AnnotationRow], reliability_clips: Vec<String>) -> Result<Self> {
        let mut ratings = BTreeMap::new();
        for r in rows {
            for v in [r.fluidity, r.enjoyment] {
                if !(1..=5).contains(&v) {
                    return Err(invalid!(
                        "rating {v} for clip {} by {} outside 1..5",
                        r.clip_id,
                        r.annotator_id
                    ));
                }
            }
            let key = (r.clip_id.clone(), r.annotator_id.clone());
            let rating = Rating {
                fluidity: r.fluidity,
                enjoyment: r.enjoyment,
            };
            if ratings.insert(key, rating).is_some() {
                return Err(invalid!(
                    "annotator {} rated clip {} twice",
                    r.annotator_id,
                    r.clip_id
                ));
            }
        }
        Ok(Self {
            ratings,
            reliability_clips,
        })
    }

    pub fn annotators(&self) -> BTreeSet<&str> {
        self.ratings.keys().map(|(_, a)| a.as_str()).collect()
    }

    fn rating(&self, clip: &str, annotator: &str) -> Option<Rating> {
        self.ratings.get(&(clip.to_string(), annotator.to_string())).copied()
    }
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Reliability of one annotator: Pearson r between their fluidity ratings on
/// the reliability clips and the mean fluidity of all other annotators on
/// the same clips.
///
/// Returns `Ok(None)` when r is undefined (zero variance on either side).
pub fn annotator_reliability(set: &AnnotationSet, annotator: &str) -> Result<Option<f64>> {
    let mut own = Vec::new();
    let mut others = Vec::new();
    for clip in &set.reliability_clips {
        let Some(mine) = set.rating(clip, annotator) else { continue };
        let rest: Vec<f64> = set
            .ratings
            .range((clip.clone(), String::new())..)
            .take_while(|((c, _), _)| c == clip)
            .filter(|((_, a), _)| a != annotator)
            .map(|(_, r)| r.fluidity as f64)
            .collect();
        if rest.is_empty() {
            continue;
        }
        own.push(mine.fluidity as f64);
        others.push(rest.iter().sum::<f64>() / rest.len() as f64);
    }
    if own.len() < 2 {
        return Err(invalid!(
            "annotator {annotator} shares {} reliability clips with others (need 2)",
            own.len()
        ));
    }
    Ok(pearson(&own, &others))
}

/// Reliability scores of every annotator, computed against the full pool.
pub fn reliability_scores(set: &AnnotationSet) -> BTreeMap<String, Option<f64>> {
    set.annotators()
        .into_iter()
        .map(|a| (a.to_string(), annotator_reliability(set, a).ok().flatten()))
        .collect()
}

/// Keeps annotators whose reliability is defined and strictly above `r_min`.
///
/// Scores are computed once against the original pool and thresholded once.
pub fn filter_annotators(set: &AnnotationSet, r_min: f64) -> AnnotationSet {
    let scores = reliability_scores(set);
    let keep: BTreeSet<&str> = scores
        .iter()
        .filter(|(_, r)| r.is_some_and(|r| r > r_min))
        .map(|(a, _)| a.as_str())
        .collect();
    AnnotationSet {
        ratings: set
            .ratings
            .iter()
            .filter(|((_, a), _)| keep.contains(a.as_str()))
            .map(|(k, v)| (k.clone(), *v))
            .collect(),
        reliability_clips: set.reliability_clips.clone(),
    }
}

/// Aggregated ratings of one clip; label 1 marks the low-rated class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClip {
    pub clip_id: String,
    pub mean_fluidity: f64,
    pub mean_enjoyment: f64,
    pub n_annotators: usize,
    pub label_fluidity: u8,
    pub label_enjoyment: u8,
}

impl LabeledClip {
    pub fn label(&self, scale: Scale) -> u8 {
        match scale {
            Scale::Fluidity => self.label_fluidity,
            Scale::Enjoyment => self.label_enjoyment,
        }
    }
}

/// Low-rated iff the mean is strictly below `threshold`.
pub fn binarize(mean: f64, threshold: f64) -> u8 {
    u8::from(mean < threshold)
}

/// Per-clip means over the remaining annotators; clips with fewer than
/// `min_annotators` raters are dropped. Output is ordered by clip id.
pub fn aggregate_and_binarize(set: &AnnotationSet, threshold: f64, min_annotators: usize) -> Vec<LabeledClip> {
    let mut per_clip: BTreeMap<&str, Vec<Rating>> = BTreeMap::new();
    for ((clip, _), r) in &set.ratings {
        per_clip.entry(clip.as_str()).or_default().push(*r);
    }
    per_clip
        .into_iter()
        .filter(|(_, rs)| rs.len() >= min_annotators && !rs.is_empty())
        .map(|(clip, rs)| {
            let n = rs.len() as f64;
            let mean_fluidity = rs.iter().map(|r| r.fluidity as f64).sum::<f64>() / n;
            let mean_enjoyment = rs.iter().map(|r| r.enjoyment as f64).sum::<f64>() / n;
            LabeledClip {
                clip_id: clip.to_string(),
                mean_fluidity,
                mean_enjoyment,
                n_annotators: rs.len(),
                label_fluidity: binarize(mean_fluidity, threshold),
                label_enjoyment: binarize(mean_enjoyment, threshold),
            }
        })
        .collect()
}

/// Cross-tabulates labels: rows enjoyment high/low, columns fluidity high/low.
pub fn label_table(clips: &[LabeledClip]) -> [[u64; 2]; 2] {
    let mut t = [[0u64; 2]; 2];
    for c in clips {
        t[c.label_enjoyment as usize][c.label_fluidity as usize] += 1;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub chi2: f64,
    pub p_value: f64,
}

/// Pearson chi-square on a 2×2 table with Yates continuity correction
/// (`|O - E|` shrunk by 0.5, never below zero), one degree of freedom.
pub fn contingency_chi2(table: [[u64; 2]; 2]) -> Result<ChiSquare> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let total = (rows[0] + rows[1]) as f64;
    if rows.contains(&0) || cols.contains(&0) {
        return Err(invalid!("contingency table has an empty row or column: {table:?}"));
    }
    let mut chi2 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = rows[i] as f64 * cols[j] as f64 / total;
            let dev = ((observed as f64 - expected).abs() - 0.5).max(0.0);
            chi2 += dev * dev / expected;
        }
    }
    let dist = ChiSquared::new(1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ChiSquare {
        chi2,
        p_value: dist.sf(chi2),
    })
}
