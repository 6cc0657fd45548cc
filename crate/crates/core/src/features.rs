//! Per-clip feature vectors: modality pooling, fusion, standardization and
//! PCA with explained-variance retention.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::{ClipKind, ClipManifest, EmbeddingRecord, Modality};
use crate::error::{invalid, Error, Result};

const SCALE_FLOOR: f64 = 1e-12;

/// Widths of the fused feature blocks. The face block holds a mean and a
/// standard deviation per action unit. Three presence flags
/// (`has_audio`, `has_face`, `has_text`) follow the blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionLayout {
    pub audio: usize,
    pub face: usize,
    pub text: usize,
}

impl FusionLayout {
    /// 128-d audio frames, 17 action units, 384-d sentence embeddings.
    pub const REFERENCE: FusionLayout = FusionLayout {
        audio: 128,
        face: 34,
        text: 384,
    };

    pub fn from_dims(audio: usize, face_units: usize, text: usize) -> Self {
        Self {
            audio,
            face: 2 * face_units,
            text,
        }
    }

    pub fn face_units(&self) -> usize {
        self.face / 2
    }

    pub fn blocks_len(&self) -> usize {
        self.audio + self.face + self.text
    }

    /// Blocks plus presence flags.
    pub fn total(&self) -> usize {
        self.blocks_len() + 3
    }

    pub fn block(&self, m: Modality) -> Range<usize> {
        match m {
            Modality::Audio => 0..self.audio,
            Modality::Face => self.audio..self.audio + self.face,
            Modality::Text => self.audio + self.face..self.blocks_len(),
        }
    }

    pub fn flag(&self, m: Modality) -> usize {
        self.blocks_len()
            + match m {
                Modality::Audio => 0,
                Modality::Face => 1,
                Modality::Text => 2,
            }
    }

    /// Column indices of the given modalities' blocks, followed by their
    /// presence flags, in canonical modality order.
    pub fn columns(&self, modalities: &[Modality]) -> Vec<usize> {
        let chosen: Vec<Modality> = Modality::ALL
            .into_iter()
            .filter(|m| modalities.contains(m))
            .collect();
        let mut cols: Vec<usize> = chosen.iter().flat_map(|&m| self.block(m)).collect();
        cols.extend(chosen.iter().map(|&m| self.flag(m)));
        cols
    }
}

/// Fused, pooled features of every clip in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub clip_ids: Vec<String>,
    pub session_ids: Vec<String>,
    pub kinds: Vec<ClipKind>,
    pub layout: FusionLayout,
    /// `n_clips × layout.total()`
    pub values: Array2<f64>,
}

impl FeatureTable {
    pub fn new(
        clip_ids: Vec<String>,
        session_ids: Vec<String>,
        kinds: Vec<ClipKind>,
        layout: FusionLayout,
        values: Array2<f64>,
    ) -> Result<Self> {
        let n = clip_ids.len();
        if session_ids.len() != n || kinds.len() != n || values.nrows() != n {
            return Err(invalid!("feature table columns have inconsistent lengths"));
        }
        if values.ncols() != layout.total() {
            return Err(invalid!(
                "feature table has {} columns, layout needs {}",
                values.ncols(),
                layout.total()
            ));
        }
        let mut seen = HashSet::new();
        for id in &clip_ids {
            if !seen.insert(id.as_str()) {
                return Err(invalid!("duplicate clip_id {id:?} in feature table"));
            }
        }
        if let Some(i) = values.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(invalid!("non-finite feature for clip {}", clip_ids[i]));
        }
        Ok(Self {
            clip_ids,
            session_ids,
            kinds,
            layout,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clip_ids.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.clip_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.values.select(Axis(0), idx)
    }
}

/// Raw per-clip inputs before pooling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawClip {
    /// Audio frame embeddings.
    pub audio_frames: Vec<Vec<f64>>,
    /// `face[participant][time][unit]` action-unit intensities.
    pub face: Vec<Vec<Vec<f64>>>,
    pub text: Option<Vec<f64>>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pools one clip into the fused layout.
///
/// Audio is the mean frame; face is per-unit mean and standard deviation
/// over time, averaged over participants; text passes through. Missing
/// modalities leave a zero block and a cleared presence flag.
pub fn pool_clip(raw: &RawClip, layout: FusionLayout) -> Result<Vec<f64>> {
    let mut out = vec![0.0; layout.total()];
    let mut present = 0;

    if !raw.audio_frames.is_empty() {
        for f in &raw.audio_frames {
            if f.len() != layout.audio {
                return Err(invalid!("audio frame has {} dims, expected {}", f.len(), layout.audio));
            }
        }
        let n = raw.audio_frames.len() as f64;
        for (j, slot) in out[layout.block(Modality::Audio)].iter_mut().enumerate() {
            *slot = raw.audio_frames.iter().map(|f| f[j]).sum::<f64>() / n;
        }
        out[layout.flag(Modality::Audio)] = 1.0;
        present += 1;
    }

    let participants: Vec<&Vec<Vec<f64>>> = raw.face.iter().filter(|p| !p.is_empty()).collect();
    if !participants.is_empty() {
        let units = layout.face_units();
        let start = layout.block(Modality::Face).start;
        for series in &participants {
            if let Some(bad) = series.iter().find(|s| s.len() != units) {
                return Err(invalid!("face sample has {} units, expected {units}", bad.len()));
            }
            for u in 0..units {
                let (m, s) = mean_std(series.iter().map(|s| s[u]));
                out[start + u] += m / participants.len() as f64;
                out[start + units + u] += s / participants.len() as f64;
            }
        }
        out[layout.flag(Modality::Face)] = 1.0;
        present += 1;
    }

    if let Some(text) = &raw.text {
        if text.len() != layout.text {
            return Err(invalid!("text embedding has {} dims, expected {}", text.len(), layout.text));
        }
        out[layout.block(Modality::Text)].copy_from_slice(text);
        out[layout.flag(Modality::Text)] = 1.0;
        present += 1;
    }

    if present == 0 {
        return Err(invalid!("clip has no modality present"));
    }
    Ok(out)
}

/// Groups embedding rows per clip and pools every manifest clip.
///
/// Audio rows whose width is a multiple of the audio dimension are split
/// into consecutive frames. Face rows are grouped by participant qualifier.
/// Clips with no embedding rows at all are rejected.
pub fn build_feature_table(
    manifest: &[ClipManifest],
    records: &[EmbeddingRecord],
    layout: FusionLayout,
) -> Result<FeatureTable> {
    let known: HashSet<&str> = manifest.iter().map(|c| c.clip_id.as_str()).collect();
    let mut raw: HashMap<&str, (RawClip, BTreeMap<String, usize>)> = HashMap::new();
    for r in records {
        if !known.contains(r.clip_id.as_str()) {
            return Err(invalid!("embedding row for clip {:?} not in manifest", r.clip_id));
        }
        let (clip, participants) = raw.entry(r.clip_id.as_str()).or_default();
        match r.modality {
            Modality::Audio => {
                if layout.audio == 0 || r.dims() % layout.audio != 0 {
                    return Err(invalid!(
                        "clip {}: audio row of {} values is not a whole number of {}-d frames",
                        r.clip_id,
                        r.dims(),
                        layout.audio
                    ));
                }
                clip.audio_frames
                    .extend(r.vector.chunks(layout.audio).map(<[f64]>::to_vec));
            }
            Modality::Face => {
                let key = r.participant.clone().unwrap_or_default();
                let next = participants.len();
                let p = *participants.entry(key).or_insert(next);
                if p == clip.face.len() {
                    clip.face.push(Vec::new());
                }
                clip.face[p].push(r.vector.clone());
            }
            Modality::Text => {
                if clip.text.is_some() {
                    return Err(invalid!("clip {}: more than one text row", r.clip_id));
                }
                clip.text = Some(r.vector.clone());
            }
        }
    }

    let mut values = Array2::zeros((manifest.len(), layout.total()));
    for (i, c) in manifest.iter().enumerate() {
        let (clip, _) = raw
            .get(c.clip_id.as_str())
            .ok_or_else(|| invalid!("clip {} has no embeddings", c.clip_id))?;
        let pooled = pool_clip(clip, layout).map_err(|e| invalid!("clip {}: {e}", c.clip_id))?;
        values.row_mut(i).assign(&Array1::from(pooled));
    }
    FeatureTable::new(
        manifest.iter().map(|c| c.clip_id.clone()).collect(),
        manifest.iter().map(|c| c.session_id.clone()).collect(),
        manifest.iter().map(|c| c.kind).collect(),
        layout,
        values,
    )
}

/// Column-wise z-scoring with population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Constant columns (std at or below 1e-12) get scale 1 and map to 0.
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(invalid!("standardizer needs at least 2 training rows, got {}", x.nrows()));
        }
        let means = x.mean_axis(Axis(0)).expect("nonempty");
        let scales = x
            .axis_iter(Axis(1))
            .zip(means.iter())
            .map(|(col, &m)| {
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
                let sd = var.sqrt();
                if sd > SCALE_FLOOR {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            means: means.to_vec(),
            scales,
        })
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.means.len() {
            return Err(invalid!("expected {} columns, got {}", self.means.len(), x.ncols()));
        }
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.means[j], self.scales[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }
}

/// How much variance PCA keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    /// No projection.
    Off,
    /// Keep the smallest number of components reaching this cumulative
    /// explained-variance ratio, in [0.2, 1.0].
    Fraction(f64),
}

impl Retention {
    pub fn validate(self) -> Result<()> {
        match self {
            Retention::Off => Ok(()),
            Retention::Fraction(f) if (0.2..=1.0).contains(&f) => Ok(()),
            Retention::Fraction(f) => Err(Error::InvalidConfig(format!(
                "retained variance {f} outside [0.2, 1.0]"
            ))),
        }
    }
}

/// Principal axes of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `n_features × k`, orthonormal columns.
    pub basis: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Explained-variance ratio of every component (sums to 1).
    pub explained_ratio: Vec<f64>,
}

impl Pca {
    /// Eigendecomposition of the (n−1)-denominator covariance. Each kept
    /// axis is signed so its largest-magnitude loading is positive.
    pub fn fit(x: &Array2<f64>, fraction: f64) -> Result<Self> {
        Self::fit_with_min(x, fraction, 1)
    }

    /// Like [`Pca::fit`] but keeps at least `min_components` axes (capped
    /// at the feature count).
    pub fn fit_with_min(x: &Array2<f64>, fraction: f64, min_components: usize) -> Result<Self> {
        Retention::Fraction(fraction).validate()?;
        let (n, d) = x.dim();
        if n < 2 {
            return Err(invalid!("PCA needs at least 2 rows, got {n}"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("PCA input contains non-finite values"));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let centered = x - &mean;
        let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
        let cov = DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let total: f64 = eigenvalues.iter().sum();
        if total <= 0.0 {
            return Err(Error::Numerical("PCA input has zero variance".into()));
        }
        let explained_ratio: Vec<f64> = eigenvalues.iter().map(|l| l / total).collect();

        let mut k = 0;
        let mut cum = 0.0;
        while k < d {
            cum += explained_ratio[k];
            k += 1;
            if cum >= fraction - 1e-10 {
                break;
            }
        }
        let k = k.max(min_components.min(d));

        let basis = order[..k]
            .iter()
            .map(|&c| {
                let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
                let pivot = v
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
                if v[pivot] < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();
        Ok(Self {
            mean: mean.to_vec(),
            basis,
            eigenvalues,
            explained_ratio,
        })
    }

    pub fn n_components(&self) -> usize {
        self.basis.len()
    }

    fn basis_matrix(&self) -> Array2<f64> {
        let d = self.mean.len();
        Array2::from_shape_fn((d, self.basis.len()), |(i, j)| self.basis[j][i])
    }

    pub fn project(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(invalid!("expected {} columns, got {}", self.mean.len(), x.ncols()));
        }
        let mean = Array1::from(self.mean.clone());
        Ok((x - &mean).dot(&self.basis_matrix()))
    }

    pub fn reconstruct(&self, z: &Array2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.mean.clone());
        z.dot(&self.basis_matrix().t()) + &mean
    }
}

/// Standardization followed by optional PCA, fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub standardizer: Standardizer,
    pub pca: Option<Pca>,
    pub retention: Retention,
}

impl Preprocessor {
    pub fn fit(x: &Array2<f64>, retention: Retention) -> Result<Self> {
        Self::fit_with_min(x, retention, 1)
    }

    pub fn fit_with_min(x: &Array2<f64>, retention: Retention, min_components: usize) -> Result<Self> {
        retention.validate()?;
        let standardizer = Standardizer::fit(x)?;
        let pca = match retention {
            Retention::Off => None,
            Retention::Fraction(f) => Some(Pca::fit_with_min(&standardizer.transform(x)?, f, min_components)?),
        };
        Ok(Self {
            standardizer,
            pca,
            retention,
        })
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.standardizer.transform(x)?;
        match &self.pca {
            Some(p) => p.project(&z),
            None => Ok(z),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.pca
            .as_ref()
            .map_or(self.standardizer.means.len(), Pca::n_components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_layout() -> FusionLayout {
        FusionLayout::from_dims(3, 2, 2)
    }

    #[test]
    fn reference_layout_dims() {
        let l = FusionLayout::REFERENCE;
        assert_eq!(l.blocks_len(), 546);
        assert_eq!(l.total(), 549);
        assert_eq!(l.block(Modality::Audio).len(), 128);
        assert_eq!(l.block(Modality::Face).len() + l.block(Modality::Text).len(), 418);
    }

    #[test]
    fn audio_mean_of_identical_frames() {
        let v = vec![0.5, -1.0, 2.0];
        let raw = RawClip {
            audio_frames: vec![v.clone(); 7],
            ..Default::default()
        };
        let out = pool_clip(&raw, small_layout()).unwrap();
        assert_eq!(&out[0..3], &v[..]);
        assert_eq!(out[small_layout().flag(Modality::Audio)], 1.0);
        assert_eq!(out[small_layout().flag(Modality::Text)], 0.0);
    }

    #[test]
    fn face_pooling_constant_traces() {
        let a = vec![1.0, 2.0];
        let b = vec![3.0, 6.0];
        let raw = RawClip {
            face: vec![vec![a.clone(); 5], vec![b.clone(); 3]],
            ..Default::default()
        };
        let l = small_layout();
        let out = pool_clip(&raw, l).unwrap();
        assert_eq!(&out[l.block(Modality::Face)], &[2.0, 4.0, 0.0, 0.0]);

        let swapped = RawClip {
            face: vec![vec![b; 3], vec![a; 5]],
            ..Default::default()
        };
        assert_eq!(pool_clip(&swapped, l).unwrap(), out);
    }

    #[test]
    fn duplicated_audio_sequence_is_stable() {
        let frames = vec![vec![1.0, 2.0, 3.0], vec![3.0, 0.0, -1.0]];
        let once = pool_clip(&RawClip { audio_frames: frames.clone(), ..Default::default() }, small_layout()).unwrap();
        let twice = pool_clip(
            &RawClip {
                audio_frames: frames.iter().chain(&frames).cloned().collect(),
                ..Default::default()
            },
            small_layout(),
        )
        .unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn all_missing_is_error() {
        assert!(pool_clip(&RawClip::default(), small_layout()).is_err());
    }

    #[test]
    fn standardize_two_rows() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(&x).unwrap();
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.scales, vec![1.0, 1.0]);
        assert_eq!(s.transform(&x).unwrap(), array![[-1.0, 0.0], [1.0, 0.0]]);
        let c = array![[5.0], [5.0], [5.0]];
        let s = Standardizer::fit(&c).unwrap();
        assert!(s.transform(&c).unwrap().iter().all(|&v| v == 0.0));
        assert!(Standardizer::fit(&array![[1.0]]).is_err());
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((100, 5), |(_, j)| rng.random::<f64>() * (j + 1) as f64 + j as f64);
        let z = Standardizer::fit(&x).unwrap().transform(&x).unwrap();
        for col in z.axis_iter(Axis(1)) {
            let m = col.sum() / 100.0;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 100.0).sqrt();
            assert!(m.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_on_diagonal_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((200, 2), |_| 0.0);
        let x = {
            let mut x = x;
            for mut row in x.rows_mut() {
                let t: f64 = rng.random_range(-1.0..1.0);
                row[0] = t + 1e-3 * rng.random_range(-1.0..1.0);
                row[1] = t + 1e-3 * rng.random_range(-1.0..1.0);
            }
            x
        };
        let pca = Pca::fit(&x, 0.9).unwrap();
        assert_eq!(pca.n_components(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pca.basis[0][0] - h).abs() < 1e-3 && (pca.basis[0][1] - h).abs() < 1e-3);
    }

    #[test]
    fn full_retention_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // rank-3 data in 6 dims
        let latent = Array2::from_shape_fn((40, 3), |_| rng.random_range(-1.0..1.0));
        let mix = Array2::from_shape_fn((3, 6), |_| rng.random_range(-1.0..1.0));
        let x = latent.dot(&mix);
        let pca = Pca::fit(&x, 1.0).unwrap();
        assert_eq!(pca.n_components(), 3);
        let err = (&pca.reconstruct(&pca.project(&x).unwrap()) - &x)
            .iter()
            .map(|v| v * v)
            .sum::<f64>();
        assert!(err < 1e-8, "{err}");
        assert!((pca.explained_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(pca.explained_ratio.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn retention_off_is_identity_on_standardized() {
        let x = array![[1.0, 2.0], [3.0, 7.0], [0.0, 1.0]];
        let p = Preprocessor::fit(&x, Retention::Off).unwrap();
        let z = p.apply(&x).unwrap();
        assert_eq!(z, p.standardizer.transform(&x).unwrap());
        assert_eq!(p.output_dim(), 2);
    }

    #[test]
    fn retention_bounds() {
        assert!(Retention::Fraction(0.1).validate().is_err());
        assert!(Retention::Fraction(1.01).validate().is_err());
        assert!(Retention::Fraction(0.2).validate().is_ok());
        let x = array![[1.0, f64::NAN], [3.0, 7.0]];
        assert!(Pca::fit(&x, 0.5).is_err());
    }

    #[test]
    fn table_from_embeddings_with_missing_text() {
        let layout = small_layout();
        let manifest: Vec<ClipManifest> = ["c1", "c2"]
            .iter()
            .map(|id| ClipManifest {
                clip_id: id.to_string(),
                session_id: "s".into(),
                mark_time: 13.0,
                span: (10.0, 17.0),
                kind: ClipKind::TargetedGap,
            })
            .collect();
        let rec = |clip: &str, m: Modality, p: Option<&str>, v: Vec<f64>| EmbeddingRecord {
            clip_id: clip.into(),
            modality: m,
            participant: p.map(String::from),
            vector: v,
        };
        let records = vec![
            rec("c1", Modality::Audio, None, vec![1.0, 1.0, 1.0, 3.0, 3.0, 3.0]),
            rec("c1", Modality::Face, Some("p1"), vec![1.0, 0.0]),
            rec("c1", Modality::Face, Some("p2"), vec![3.0, 0.0]),
            rec("c1", Modality::Face, Some("p1"), vec![1.0, 2.0]),
            rec("c1", Modality::Text, None, vec![0.5, 0.5]),
            rec("c2", Modality::Audio, None, vec![2.0, 2.0, 2.0]),
        ];
        let t = build_feature_table(&manifest, &records, layout).unwrap();
        let r0 = t.values.row(0).to_vec();
        assert_eq!(&r0[0..3], &[2.0, 2.0, 2.0]);
        // p1: unit0 mean 1 sd 0, unit1 mean 1 sd 1; p2: mean 3, 0
        assert_eq!(&r0[3..7], &[2.0, 0.5, 0.0, 0.5]);
        assert_eq!(&r0[9..12], &[1.0, 1.0, 1.0]);
        let r1 = t.values.row(1).to_vec();
        assert_eq!(&r1[7..9], &[0.0, 0.0]);
        assert_eq!(&r1[9..12], &[1.0, 0.0, 0.0]);
    }
}
