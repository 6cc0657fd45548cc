//! Turn-taking segmentation: per-speaker RMS activity, gap and overlap
//! detection, and cutting of targeted and non-targeted 7 s clips.

use crate::dataio::{ClipKind, ClipManifest, SessionAudio};
use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationConfig {
    /// Activity threshold on frame RMS (amplitude units).
    pub rms_threshold: f64,
    /// Shortest all-speaker silence that counts as a gap, seconds.
    pub min_gap: f64,
    /// Clip extent before the mark, seconds.
    pub pre: f64,
    /// Clip extent after the mark, seconds.
    pub post: f64,
    /// Session head and tail excluded from non-targeted tiling, seconds.
    pub edge_exclusion: f64,
    pub frame_len: f64,
    pub hop: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            rms_threshold: 0.05,
            min_gap: 0.75,
            pre: 3.0,
            post: 4.0,
            edge_exclusion: 10.0,
            frame_len: 0.05,
            hop: 0.01,
        }
    }
}

impl SegmentationConfig {
    pub fn clip_len(&self) -> f64 {
        self.pre + self.post
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.rms_threshold > 0.0 && self.rms_threshold < 1.0) {
            return bad("rms_threshold must lie in (0, 1)");
        }
        if !(self.min_gap > 0.0) {
            return bad("min_gap must be positive");
        }
        if self.pre < 0.0 || self.post < 0.0 || (self.clip_len() - 7.0).abs() > EPS {
            return bad("pre + post must equal 7 s");
        }
        if !(self.hop > 0.0 && self.frame_len >= self.hop) {
            return bad("need frame_len >= hop > 0");
        }
        if self.edge_exclusion < 0.0 {
            return bad("edge_exclusion must be non-negative");
        }
        Ok(())
    }
}

/// Frame RMS of `track`; frame `i` covers samples `[i*hop, i*hop + frame_len)`.
pub fn compute_rms(track: &[f32], frame_len: usize, hop: usize) -> Result<Vec<f64>> {
    if frame_len == 0 || hop == 0 {
        return Err(Error::InvalidConfig("frame_len and hop must be at least one sample".into()));
    }
    if track.len() < frame_len {
        return Err(crate::error::invalid!(
            "track of {} samples is shorter than one frame ({frame_len})",
            track.len()
        ));
    }
    let mut prefix = Vec::with_capacity(track.len() + 1);
    prefix.push(0.0f64);
    let mut acc = 0.0f64;
    for &s in track {
        acc += (s as f64) * (s as f64);
        prefix.push(acc);
    }
    let n_frames = (track.len() - frame_len) / hop + 1;
    Ok((0..n_frames)
        .map(|i| {
            let start = i * hop;
            let energy = (prefix[start + frame_len] - prefix[start]).max(0.0);
            (energy / frame_len as f64).sqrt()
        })
        .collect())
}

/// Per-speaker activity on a shared frame grid. Times are kept in samples
/// so run lengths compare exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityTimeline {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_samples: usize,
    /// `active[speaker][frame]`
    pub active: Vec<Vec<bool>>,
}

impl ActivityTimeline {
    pub fn n_frames(&self) -> usize {
        self.active.first().map_or(0, Vec::len)
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        (frame * self.hop) as f64 / self.sample_rate as f64
    }

    /// Time at which activity began, given that `frame` is the first
    /// active frame of a run. A frame turns active once a few ms of
    /// activity enter its trailing edge, so the onset lies in its last hop.
    pub fn activity_onset(&self, frame: usize) -> f64 {
        (frame * self.hop + self.frame_len - self.hop) as f64 / self.sample_rate as f64
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate as f64
    }

    fn n_active(&self, frame: usize) -> usize {
        self.active.iter().filter(|a| a[frame]).count()
    }

    /// Duration in seconds spanned by frames `[start, end)`.
    fn run_duration(&self, start: usize, end: usize) -> f64 {
        ((end - start - 1) * self.hop + self.frame_len) as f64 / self.sample_rate as f64
    }
}

/// Thresholds every track's RMS (`rms >= threshold` is active).
pub fn activity_timeline(session: &SessionAudio, cfg: &SegmentationConfig) -> Result<ActivityTimeline> {
    cfg.validate()?;
    if session.tracks.is_empty() {
        return Err(crate::error::invalid!("session {} has no tracks", session.session_id));
    }
    let rate = session.sample_rate as f64;
    let frame_len = (cfg.frame_len * rate).round() as usize;
    let hop = (cfg.hop * rate).round() as usize;
    let n_samples = session.n_samples();
    let active = session
        .tracks
        .iter()
        .map(|t| {
            compute_rms(&t.samples[..n_samples], frame_len, hop)
                .map(|rms| rms.into_iter().map(|r| r >= cfg.rms_threshold).collect())
        })
        .collect::<Result<Vec<Vec<bool>>>>()?;
    Ok(ActivityTimeline {
        sample_rate: session.sample_rate,
        frame_len,
        hop,
        n_samples,
        active,
    })
}

/// Maximal runs `[start, end)` of frames satisfying `pred`.
fn runs(n: usize, pred: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for i in 0..n {
        match (pred(i), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, n));
    }
    out
}

/// Drops marks whose clip window leaves the session, then enforces a full
/// clip length between consecutive marks so clips never overlap.
fn admit_marks(onsets: impl IntoIterator<Item = f64>, duration: f64, cfg: &SegmentationConfig) -> Vec<f64> {
    let mut marks: Vec<f64> = Vec::new();
    for t in onsets {
        if t - cfg.pre < -EPS || t + cfg.post > duration + EPS {
            continue;
        }
        if let Some(&last) = marks.last() {
            if t < last + cfg.clip_len() - EPS {
                continue;
            }
        }
        marks.push(t);
    }
    marks
}

fn is_gap_frame(tl: &ActivityTimeline, frame: usize) -> bool {
    tl.n_active(frame) == 0
}

fn is_overlap_frame(tl: &ActivityTimeline, frame: usize) -> bool {
    tl.n_active(frame) >= 2
}

/// Onsets of all-speaker silences lasting at least `min_gap`.
pub fn detect_gaps(tl: &ActivityTimeline, cfg: &SegmentationConfig) -> Vec<f64> {
    let onsets = runs(tl.n_frames(), |i| is_gap_frame(tl, i))
        .into_iter()
        .filter(|&(s, e)| tl.run_duration(s, e) >= cfg.min_gap - EPS)
        .map(|(s, _)| tl.frame_time(s));
    admit_marks(onsets, tl.duration(), cfg)
}

/// Onsets of runs where two or more speakers are active at once.
pub fn detect_overlaps(tl: &ActivityTimeline, cfg: &SegmentationConfig) -> Vec<f64> {
    let onsets = runs(tl.n_frames(), |i| is_overlap_frame(tl, i))
        .into_iter()
        .map(|(s, _)| tl.activity_onset(s));
    admit_marks(onsets, tl.duration(), cfg)
}

fn frame_at(tl: &ActivityTimeline, t: f64) -> Option<usize> {
    let f = (t * tl.sample_rate as f64 / tl.hop as f64).round();
    (f >= 0.0 && (f as usize) < tl.n_frames()).then_some(f as usize)
}

/// Re-checks a gap mark against the raw timeline: silence starts exactly at
/// the mark (not earlier) and lasts at least `min_gap`.
pub fn verify_gap_mark(tl: &ActivityTimeline, mark: f64, cfg: &SegmentationConfig) -> bool {
    let Some(s) = frame_at(tl, mark) else { return false };
    if s > 0 && is_gap_frame(tl, s - 1) {
        return false;
    }
    let mut e = s;
    while e < tl.n_frames() && is_gap_frame(tl, e) {
        e += 1;
    }
    e > s && tl.run_duration(s, e) >= cfg.min_gap - EPS
}

/// Re-checks an overlap mark: two or more speakers become active at the mark.
pub fn verify_overlap_mark(tl: &ActivityTimeline, mark: f64) -> bool {
    let lead = (tl.frame_len - tl.hop) as f64 / tl.sample_rate as f64;
    let Some(s) = frame_at(tl, mark - lead) else { return false };
    is_overlap_frame(tl, s) && (s == 0 || !is_overlap_frame(tl, s - 1))
}

pub fn clip_id(session_id: &str, kind: ClipKind, t: f64) -> String {
    format!("{session_id}_{kind}_{}", (t * 1000.0).round() as i64)
}

/// One manifest per mark, spanning `[mark - pre, mark + post)`.
pub fn extract_clips(
    marks: &[f64],
    kind: ClipKind,
    cfg: &SegmentationConfig,
    session_id: &str,
) -> Vec<ClipManifest> {
    marks
        .iter()
        .map(|&m| ClipManifest {
            clip_id: clip_id(session_id, kind, m),
            session_id: session_id.to_string(),
            mark_time: m,
            span: (m - cfg.pre, m + cfg.post),
            kind,
        })
        .collect()
}

/// Tiles what is left of `[edge, duration - edge]` after removing targeted
/// spans with back-to-back 7 s windows, each remaining segment tiled from
/// its start. Leftovers shorter than a clip are discarded.
pub fn extract_non_targeted(
    session_id: &str,
    duration: f64,
    targeted: &[ClipManifest],
    cfg: &SegmentationConfig,
) -> Vec<ClipManifest> {
    let lo = cfg.edge_exclusion;
    let hi = duration - cfg.edge_exclusion;
    if hi - lo < cfg.clip_len() - EPS {
        return Vec::new();
    }
    let mut spans: Vec<(f64, f64)> = targeted.iter().map(|c| c.span).collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut free = Vec::new();
    let mut cursor = lo;
    for (s, e) in spans {
        if s > cursor {
            free.push((cursor, s.min(hi)));
        }
        cursor = cursor.max(e);
        if cursor >= hi {
            break;
        }
    }
    if cursor < hi {
        free.push((cursor, hi));
    }

    let len = cfg.clip_len();
    let mut clips = Vec::new();
    for (s, e) in free {
        let n = ((e - s + EPS) / len).floor() as usize;
        for k in 0..n {
            let start = s + k as f64 * len;
            clips.push(ClipManifest {
                clip_id: clip_id(session_id, ClipKind::NonTargeted, start),
                session_id: session_id.to_string(),
                mark_time: start + cfg.pre,
                span: (start, start + len),
                kind: ClipKind::NonTargeted,
            });
        }
    }
    clips
}

/// Full segmentation of one session: gap and overlap clips (kept mutually
/// non-overlapping, earlier mark wins, gap first on ties) followed by the
/// non-targeted tiling of the remainder.
pub fn segment_session(session: &SessionAudio, cfg: &SegmentationConfig) -> Result<Vec<ClipManifest>> {
    let tl = activity_timeline(session, cfg)?;
    let mut candidates: Vec<(f64, ClipKind)> = detect_gaps(&tl, cfg)
        .into_iter()
        .map(|m| (m, ClipKind::TargetedGap))
        .chain(detect_overlaps(&tl, cfg).into_iter().map(|m| (m, ClipKind::TargetedOverlap)))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut targeted: Vec<ClipManifest> = Vec::new();
    for (m, kind) in candidates {
        if targeted
            .last()
            .is_some_and(|last| m < last.mark_time + cfg.clip_len() - EPS)
        {
            continue;
        }
        targeted.extend(extract_clips(&[m], kind, cfg, &session.session_id));
    }
    let non_targeted = extract_non_targeted(&session.session_id, tl.duration(), &targeted, cfg);
    targeted.extend(non_targeted);
    Ok(targeted)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RATE: u32 = 100;

    /// Timeline at 100 frames/s where frame i covers [i, i+1) hundredths.
    fn timeline(duration: f64, speakers: &[&[(f64, f64)]]) -> ActivityTimeline {
        let n = (duration * RATE as f64).round() as usize;
        let active = speakers
            .iter()
            .map(|ivs| {
                (0..n)
                    .map(|i| {
                        let t = i as f64 / RATE as f64;
                        ivs.iter().any(|&(s, e)| t >= s - 1e-9 && t < e - 1e-9)
                    })
                    .collect()
            })
            .collect();
        ActivityTimeline {
            sample_rate: RATE,
            frame_len: 1,
            hop: 1,
            n_samples: n,
            active,
        }
    }

    fn cfg() -> SegmentationConfig {
        SegmentationConfig::default()
    }

    #[test]
    fn rms_of_constant_and_zero() {
        let rms = compute_rms(&[0.05; 1000], 50, 10).unwrap();
        assert_eq!(rms.len(), 96);
        assert!(rms.iter().all(|r| (r - 0.05).abs() < 1e-7));
        assert!(compute_rms(&[0.0; 100], 50, 10).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn rms_of_sine_matches_direct_sum() {
        let amp = 0.3f64;
        let period = 40usize;
        let track: Vec<f32> = (0..4000)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * i as f64 / period as f64).sin()) as f32)
            .collect();
        let rms = compute_rms(&track, 400, 100).unwrap();
        for (i, r) in rms.iter().enumerate() {
            let direct = (track[i * 100..i * 100 + 400]
                .iter()
                .map(|&x| (x as f64).powi(2))
                .sum::<f64>()
                / 400.0)
                .sqrt();
            assert!((r - direct).abs() < 1e-12);
            assert!((r - amp / 2f64.sqrt()).abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn rms_short_track_is_error() {
        assert!(compute_rms(&[0.1; 10], 50, 10).is_err());
    }

    #[test]
    fn gap_at_silence_onset() {
        let speech: &[(f64, f64)] = &[(0.0, 2.0), (3.5, 60.0)];
        let tl = timeline(60.0, &[speech, speech, speech]);
        // frames only at 2.0..3.5 are silent; onset 2.0 is too early for a 3 s pre-roll
        assert_eq!(detect_gaps(&tl, &cfg()), Vec::<f64>::new());
        let speech: &[(f64, f64)] = &[(0.0, 20.0), (21.5, 60.0)];
        let tl = timeline(60.0, &[speech, speech, speech]);
        assert_eq!(detect_gaps(&tl, &cfg()), vec![20.0]);
    }

    #[test]
    fn gap_with_short_pre_roll_allowed_when_window_fits() {
        // the constructed case with silence on [2.0, 3.5) under a window rule
        // relaxed to pre = 2.0
        let speech: &[(f64, f64)] = &[(0.0, 2.0), (3.5, 60.0)];
        let tl = timeline(60.0, &[speech, speech, speech]);
        let c = SegmentationConfig { pre: 2.0, post: 5.0, ..cfg() };
        assert_eq!(detect_gaps(&tl, &c), vec![2.0]);
    }

    #[test]
    fn short_silence_is_not_a_gap() {
        let speech: &[(f64, f64)] = &[(0.0, 20.0), (20.5, 60.0)];
        let tl = timeline(60.0, &[speech, speech]);
        assert!(detect_gaps(&tl, &cfg()).is_empty());
    }

    #[test]
    fn gap_exactly_min_length_counts() {
        let speech: &[(f64, f64)] = &[(0.0, 20.0), (20.75, 60.0)];
        let tl = timeline(60.0, &[speech]);
        assert_eq!(detect_gaps(&tl, &cfg()), vec![20.0]);
    }

    #[test]
    fn gap_near_session_start_dropped() {
        let speech: &[(f64, f64)] = &[(0.0, 1.0), (5.0, 60.0)];
        let tl = timeline(60.0, &[speech, speech]);
        assert!(detect_gaps(&tl, &cfg()).is_empty());
    }

    #[test]
    fn overlap_onset() {
        let a: &[(f64, f64)] = &[(5.0, 12.0)];
        let b: &[(f64, f64)] = &[(10.0, 12.0)];
        let c: &[(f64, f64)] = &[];
        let tl = timeline(60.0, &[a, b, c]);
        assert_eq!(detect_overlaps(&tl, &cfg()), vec![10.0]);
    }

    #[test]
    fn single_speaker_never_overlaps() {
        let a: &[(f64, f64)] = &[(0.0, 60.0)];
        let b: &[(f64, f64)] = &[];
        let tl = timeline(60.0, &[a, b]);
        assert!(detect_overlaps(&tl, &cfg()).is_empty());
    }

    #[test]
    fn skip_forward_suppresses_nearby_overlap() {
        let a: &[(f64, f64)] = &[(10.0, 11.0), (11.5, 12.5)];
        let tl = timeline(60.0, &[a, a]);
        assert_eq!(detect_overlaps(&tl, &cfg()), vec![10.0]);
        // an overlap a full clip later is admitted again
        let a: &[(f64, f64)] = &[(10.0, 11.0), (17.0, 18.0)];
        let tl = timeline(60.0, &[a, a]);
        assert_eq!(detect_overlaps(&tl, &cfg()), vec![10.0, 17.0]);
    }

    #[test]
    fn clip_spans_and_ids() {
        let clips = extract_clips(&[30.0], ClipKind::TargetedGap, &cfg(), "s1");
        assert_eq!(clips[0].span, (27.0, 34.0));
        assert_eq!(clips[0].clip_id, "s1_targeted_gap_30000");
        let clips = extract_clips(&[10.0, 30.0], ClipKind::TargetedOverlap, &cfg(), "s1");
        assert_eq!(clips.len(), 2);
        assert_ne!(clips[0].clip_id, clips[1].clip_id);
        assert!(extract_clips(&[], ClipKind::TargetedGap, &cfg(), "s1").is_empty());
    }

    fn starts(clips: &[ClipManifest]) -> Vec<f64> {
        clips.iter().map(|c| c.span.0).collect()
    }

    #[test]
    fn non_targeted_tiling_without_targets() {
        let clips = extract_non_targeted("s", 60.0, &[], &cfg());
        assert_eq!(starts(&clips), vec![10.0, 17.0, 24.0, 31.0, 38.0]);
        assert!(clips.iter().all(|c| c.kind == ClipKind::NonTargeted));
    }

    #[test]
    fn non_targeted_tiling_around_target() {
        let targeted = extract_clips(&[23.0], ClipKind::TargetedGap, &cfg(), "s");
        assert_eq!(targeted[0].span, (20.0, 27.0));
        let clips = extract_non_targeted("s", 60.0, &targeted, &cfg());
        assert_eq!(starts(&clips), vec![10.0, 27.0, 34.0, 41.0]);
    }

    #[test]
    fn non_targeted_no_room() {
        let targeted = extract_clips(&[13.0], ClipKind::TargetedGap, &cfg(), "s");
        assert!(extract_non_targeted("s", 26.0, &targeted, &cfg()).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(SegmentationConfig { pre: 2.0, ..cfg() }.validate().is_err());
        assert!(SegmentationConfig { rms_threshold: 1.5, ..cfg() }.validate().is_err());
        assert!(SegmentationConfig { hop: 0.1, frame_len: 0.05, ..cfg() }.validate().is_err());
    }
}
