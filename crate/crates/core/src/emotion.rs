//! Action units, range models and emotion classification.
//!
//! An [`AuExtractionTable`] says how each action unit is read off a
//! [`FacialFrame`]: straight from one feature, or from the mean of a left and
//! right pair, optionally reflected about the calibrated range. Fitting
//! records, per emotion, the observed `min`, `max` and `mean` of each AU in
//! that emotion's compound. Classification scores every emotion by how far
//! the AU vector falls outside its ranges, normalized by range width.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::faceosc::{FacialFrame, Feature, FeatureRange};

/// Half-width used to widen a range whose samples were all identical.
pub const DEGENERATE_EPSILON: f64 = 1e-3;

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;

/// AUs the happy compound must always contain.
pub const HAPPY_CORE_AUS: [AuId; 3] = [AuId(6), AuId(12), AuId(25)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Emotion {
    Happy,
    Neutral,
    Sad,
}

impl Emotion {
    pub const ALL: [Emotion; 3] = [Emotion::Happy, Emotion::Neutral, Emotion::Sad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Happy => "happy",
            Emotion::Neutral => "neutral",
            Emotion::Sad => "sad",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown emotion label {0:?}")]
pub struct BadLabel(pub String);

impl FromStr for Emotion {
    type Err = BadLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| BadLabel(s.into()))
    }
}

/// FACS action unit number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct AuId(pub u8);

impl fmt::Display for AuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AU{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AuSource {
    Feature(Feature),
    MeanOf(Feature, Feature),
}

impl AuSource {
    fn read(self, frame: &FacialFrame) -> f64 {
        match self {
            AuSource::Feature(f) => frame.get(f),
            AuSource::MeanOf(a, b) => (frame.get(a) + frame.get(b)) / 2.0,
        }
    }

    /// Calibrated range of the source; pairs average their two ranges.
    pub fn calibrated_range(self) -> FeatureRange {
        match self {
            AuSource::Feature(f) => f.calibrated_range(),
            AuSource::MeanOf(a, b) => {
                let (ra, rb) = (a.calibrated_range(), b.calibrated_range());
                FeatureRange {
                    min: (ra.min + rb.min) / 2.0,
                    max: (ra.max + rb.max) / 2.0,
                }
            }
        }
    }

    pub fn features(self) -> impl Iterator<Item = Feature> {
        let (a, b) = match self {
            AuSource::Feature(f) => (f, None),
            AuSource::MeanOf(a, b) => (a, Some(b)),
        };
        core::iter::once(a).chain(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Polarity {
    #[default]
    Direct,
    Inverted,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuEntry {
    pub au: AuId,
    pub source: AuSource,
    #[cfg_attr(feature = "serde", serde(default))]
    pub polarity: Polarity,
}

impl AuEntry {
    pub fn score(&self, frame: &FacialFrame) -> f64 {
        let x = self.source.read(frame);
        match self.polarity {
            Polarity::Direct => x,
            Polarity::Inverted => self.source.calibrated_range().invert(x),
        }
    }

    /// Inverse of [`score`](Self::score) on the source's raw value.
    pub fn source_value(&self, score: f64) -> f64 {
        match self.polarity {
            Polarity::Direct => score,
            Polarity::Inverted => self.source.calibrated_range().invert(score),
        }
    }
}

/// The set of AUs scored for one emotion.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Compound {
    pub emotion: Emotion,
    pub aus: Vec<AuId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("{0} appears more than once")]
    DuplicateAu(AuId),
    #[error("compound for {emotion} names {au}, which has no extraction entry")]
    UnknownCompoundAu { emotion: Emotion, au: AuId },
    #[error("no compound for {0}")]
    MissingCompound(Emotion),
    #[error("more than one compound for {0}")]
    DuplicateCompound(Emotion),
    #[error("compound for {0} is empty")]
    EmptyCompound(Emotion),
    #[error("happy compound must contain {0}")]
    HappyMissingAu(AuId),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuExtractionTable {
    pub id: String,
    pub entries: Vec<AuEntry>,
    pub compounds: Vec<Compound>,
}

impl Default for AuExtractionTable {
    /// AU6 cheek raiser from eye openness, AU12 lip corner puller from mouth
    /// width, AU25 lips part from mouth height; the sad compound uses brow
    /// raise/lower and an inverted mouth width for AU15.
    fn default() -> Self {
        use Feature::*;
        let e = |au, source, polarity| AuEntry {
            au: AuId(au),
            source,
            polarity,
        };
        let brows = AuSource::MeanOf(EyebrowLeft, EyebrowRight);
        AuExtractionTable {
            id: "default-v1".into(),
            entries: alloc::vec![
                e(1, brows, Polarity::Direct),
                e(4, brows, Polarity::Inverted),
                e(6, AuSource::MeanOf(EyeLeft, EyeRight), Polarity::Direct),
                e(12, AuSource::Feature(MouthWidth), Polarity::Direct),
                e(15, AuSource::Feature(MouthWidth), Polarity::Inverted),
                e(25, AuSource::Feature(MouthHeight), Polarity::Direct),
            ],
            compounds: alloc::vec![
                Compound {
                    emotion: Emotion::Happy,
                    aus: alloc::vec![AuId(6), AuId(12), AuId(25)],
                },
                Compound {
                    emotion: Emotion::Neutral,
                    aus: alloc::vec![AuId(6), AuId(12), AuId(25)],
                },
                Compound {
                    emotion: Emotion::Sad,
                    aus: alloc::vec![AuId(1), AuId(4), AuId(15)],
                },
            ],
        }
    }
}

impl AuExtractionTable {
    pub fn entry(&self, au: AuId) -> Option<&AuEntry> {
        self.entries.iter().find(|e| e.au == au)
    }

    pub fn compound(&self, emotion: Emotion) -> Option<&[AuId]> {
        self.compounds
            .iter()
            .find(|c| c.emotion == emotion)
            .map(|c| c.aus.as_slice())
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.au) {
                return Err(TableError::DuplicateAu(e.au));
            }
        }
        for emotion in Emotion::ALL {
            let mut it = self.compounds.iter().filter(|c| c.emotion == emotion);
            let c = it.next().ok_or(TableError::MissingCompound(emotion))?;
            if it.next().is_some() {
                return Err(TableError::DuplicateCompound(emotion));
            }
            if c.aus.is_empty() {
                return Err(TableError::EmptyCompound(emotion));
            }
            let mut in_compound = BTreeSet::new();
            for &au in &c.aus {
                if !seen.contains(&au) {
                    return Err(TableError::UnknownCompoundAu { emotion, au });
                }
                if !in_compound.insert(au) {
                    return Err(TableError::DuplicateAu(au));
                }
            }
        }
        let happy = self.compound(Emotion::Happy).unwrap_or_default();
        if let Some(&au) = HAPPY_CORE_AUS.iter().find(|au| !happy.contains(au)) {
            return Err(TableError::HappyMissingAu(au));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuVector {
    pub timestamp_ms: u64,
    pub scores: BTreeMap<AuId, f64>,
}

impl AuVector {
    pub fn get(&self, au: AuId) -> Option<f64> {
        self.scores.get(&au).copied()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("frame has no face")]
    FaceNotFound,
    #[error("feature {0} is not finite")]
    NonFinite(Feature),
}

/// Reads one score per table entry off a frame.
pub fn extract_aus(frame: &FacialFrame, table: &AuExtractionTable) -> Result<AuVector, ExtractError> {
    if !frame.face_found {
        return Err(ExtractError::FaceNotFound);
    }
    if let Some(f) = Feature::ALL.into_iter().find(|&f| !frame.get(f).is_finite()) {
        return Err(ExtractError::NonFinite(f));
    }
    let scores = table.entries.iter().map(|e| (e.au, e.score(frame))).collect();
    Ok(AuVector {
        timestamp_ms: frame.timestamp_ms,
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuRange {
    pub au: AuId,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl AuRange {
    fn width(&self) -> f64 {
        self.max - self.min
    }

    /// Distance outside `[min, max]` in units of range width; 0 inside.
    pub fn outside(&self, x: f64) -> f64 {
        if x < self.min {
            (self.min - x) / self.width()
        } else if x > self.max {
            (x - self.max) / self.width()
        } else {
            0.0
        }
    }

    pub fn mean_distance(&self, x: f64) -> f64 {
        libm::fabs(x - self.mean) / self.width()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmotionRanges {
    pub label: Emotion,
    pub sample_count: usize,
    pub au_ranges: Vec<AuRange>,
    /// Per-feature training means; lets generators place features the
    /// emotion's own AUs do not constrain.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub feature_means: Option<BTreeMap<Feature, f64>>,
}

impl EmotionRanges {
    pub fn range(&self, au: AuId) -> Option<&AuRange> {
        self.au_ranges.iter().find(|r| r.au == au)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmotionModel {
    pub format_version: u32,
    pub table: AuExtractionTable,
    /// Declaration order is the final classification tie-break.
    pub emotions: Vec<EmotionRanges>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("model has no ranges for {0}")]
    MissingLabel(Emotion),
    #[error("model lists {0} more than once")]
    DuplicateLabel(Emotion),
    #[error("{label} has no AU ranges")]
    EmptyRanges { label: Emotion },
    #[error("{label} {au}: range is not an extraction-table AU")]
    UnknownAu { label: Emotion, au: AuId },
    #[error("{label} {au}: listed twice")]
    DuplicateRange { label: Emotion, au: AuId },
    #[error("{label} {au}: need finite min <= mean <= max with max > min")]
    BadRange { label: Emotion, au: AuId },
    #[error("happy ranges must include {0}")]
    HappyMissingAu(AuId),
}

impl EmotionModel {
    pub fn ranges(&self, label: Emotion) -> Option<&EmotionRanges> {
        self.emotions.iter().find(|e| e.label == label)
    }

    pub fn ranges_mut(&mut self, label: Emotion) -> Option<&mut EmotionRanges> {
        self.emotions.iter_mut().find(|e| e.label == label)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(self.format_version));
        }
        self.table.validate()?;
        for label in Emotion::ALL {
            match self.emotions.iter().filter(|e| e.label == label).count() {
                0 => return Err(ModelError::MissingLabel(label)),
                1 => {}
                _ => return Err(ModelError::DuplicateLabel(label)),
            }
        }
        for e in &self.emotions {
            let label = e.label;
            if e.au_ranges.is_empty() {
                return Err(ModelError::EmptyRanges { label });
            }
            let mut seen = BTreeSet::new();
            for r in &e.au_ranges {
                let au = r.au;
                if self.table.entry(au).is_none() {
                    return Err(ModelError::UnknownAu { label, au });
                }
                if !seen.insert(au) {
                    return Err(ModelError::DuplicateRange { label, au });
                }
                let finite = r.min.is_finite() && r.max.is_finite() && r.mean.is_finite();
                if !finite || !(r.min <= r.mean && r.mean <= r.max && r.max > r.min) {
                    return Err(ModelError::BadRange { label, au });
                }
            }
        }
        let happy = self.ranges(Emotion::Happy).map(|e| &e.au_ranges);
        for au in HAPPY_CORE_AUS {
            if !happy.is_some_and(|r| r.iter().any(|r| r.au == au)) {
                return Err(ModelError::HappyMissingAu(au));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 2 samples per label; {label:?} has {count}")]
    InsufficientSamples { label: Option<Emotion>, count: usize },
    #[error("no samples labeled {0}")]
    MissingLabel(Emotion),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("sample {index}: {source}")]
    Extract {
        index: usize,
        #[source]
        source: ExtractError,
    },
}

/// Fits per-emotion AU ranges from labeled frames.
///
/// Each label's ranges cover the AUs of its compound in the table. A range
/// whose samples are all equal is widened to `value ± DEGENERATE_EPSILON`.
pub fn fit_model(
    samples: &[(FacialFrame, Emotion)],
    table: &AuExtractionTable,
) -> Result<EmotionModel, FitError> {
    table.validate()?;
    if samples.is_empty() {
        return Err(FitError::InsufficientSamples {
            label: None,
            count: 0,
        });
    }
    let mut by_label: [Vec<AuVector>; 3] = Default::default();
    let mut feature_sums = [[0.0f64; 8]; 3];
    for (index, (frame, label)) in samples.iter().enumerate() {
        let v = extract_aus(frame, table).map_err(|source| FitError::Extract { index, source })?;
        by_label[label.index()].push(v);
        for (sum, x) in feature_sums[label.index()].iter_mut().zip(frame.features()) {
            *sum += x;
        }
    }
    for label in Emotion::ALL {
        match by_label[label.index()].len() {
            0 => return Err(FitError::MissingLabel(label)),
            1 => {
                return Err(FitError::InsufficientSamples {
                    label: Some(label),
                    count: 1,
                })
            }
            _ => {}
        }
    }

    let emotions = Emotion::ALL
        .into_iter()
        .map(|label| {
            let vectors = &by_label[label.index()];
            let n = vectors.len();
            let compound = table.compound(label).unwrap_or_default();
            let au_ranges = compound
                .iter()
                .map(|&au| {
                    let scores = vectors.iter().filter_map(|v| v.get(au));
                    fit_range(au, scores, n)
                })
                .collect();
            let feature_means = Feature::ALL
                .into_iter()
                .map(|f| (f, feature_sums[label.index()][f.index()] / n as f64))
                .collect();
            EmotionRanges {
                label,
                sample_count: n,
                au_ranges,
                feature_means: Some(feature_means),
            }
        })
        .collect();

    Ok(EmotionModel {
        format_version: MODEL_FORMAT_VERSION,
        table: table.clone(),
        emotions,
    })
}

fn fit_range(au: AuId, scores: impl Iterator<Item = f64>, n: usize) -> AuRange {
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for x in scores {
        min = min.min(x);
        max = max.max(x);
        sum += x;
    }
    if max <= min {
        return AuRange {
            au,
            min: min - DEGENERATE_EPSILON,
            max: min + DEGENERATE_EPSILON,
            mean: min,
        };
    }
    AuRange {
        au,
        min,
        max,
        mean: (sum / n as f64).clamp(min, max),
    }
}

/// One value per emotion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerEmotion {
    pub happy: f64,
    pub neutral: f64,
    pub sad: f64,
}

impl PerEmotion {
    pub fn get(&self, e: Emotion) -> f64 {
        match e {
            Emotion::Happy => self.happy,
            Emotion::Neutral => self.neutral,
            Emotion::Sad => self.sad,
        }
    }

    fn set(&mut self, e: Emotion, v: f64) {
        match e {
            Emotion::Happy => self.happy = v,
            Emotion::Neutral => self.neutral = v,
            Emotion::Sad => self.sad = v,
        }
    }

    pub fn min(&self) -> f64 {
        self.happy.min(self.neutral).min(self.sad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmotionState {
    pub timestamp_ms: u64,
    pub label: Emotion,
    /// Out-of-range score per emotion; lower is a better fit.
    pub scores: PerEmotion,
    /// Normalized mean distance per emotion, the first tie-break.
    pub mean_distances: PerEmotion,
}

impl EmotionState {
    /// `1 - min score`, clamped to `[0, 1]`.
    pub fn intensity(&self) -> f64 {
        (1.0 - self.scores.min()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error("AU vector has no score for {0}")]
    MissingAu(AuId),
}

/// Scores `au` against every emotion and picks the best fit.
///
/// Lowest out-of-range score wins, then lowest mean distance, then the
/// emotion declared first in the model.
pub fn classify(au: &AuVector, model: &EmotionModel) -> Result<EmotionState, ClassifyError> {
    let mut scores = PerEmotion::default();
    let mut mean_distances = PerEmotion::default();
    let mut best: Option<(Emotion, f64, f64)> = None;
    for e in &model.emotions {
        // summing in AU order keeps results independent of range order
        let mut ranges: Vec<&AuRange> = e.au_ranges.iter().collect();
        ranges.sort_by_key(|r| r.au);
        let (mut out, mut dist) = (0.0, 0.0);
        for r in &ranges {
            let x = au.get(r.au).ok_or(ClassifyError::MissingAu(r.au))?;
            out += r.outside(x);
            dist += r.mean_distance(x);
        }
        let n = ranges.len().max(1) as f64;
        let (s, d) = (out / n, dist / n);
        scores.set(e.label, s);
        mean_distances.set(e.label, d);
        let better = match best {
            None => true,
            Some((_, bs, bd)) => s < bs || (s == bs && d < bd),
        };
        if better {
            best = Some((e.label, s, d));
        }
    }
    Ok(EmotionState {
        timestamp_ms: au.timestamp_ms,
        label: best.map_or(Emotion::Neutral, |b| b.0),
        scores,
        mean_distances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("smoothing window must be odd and at least 1, got {0}")]
pub struct BadWindow(pub usize);

/// Majority vote over the last `window` labels.
///
/// Ties keep the previous output when it is among the tied labels, otherwise
/// the most recent tied label wins.
#[derive(Debug, Clone)]
pub struct Smoother {
    window: usize,
    history: VecDeque<Emotion>,
    last: Option<Emotion>,
}

impl Smoother {
    pub fn new(window: usize) -> Result<Self, BadWindow> {
        check_window(window)?;
        Ok(Smoother {
            window,
            history: VecDeque::with_capacity(window),
            last: None,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Changes the window, keeping the newest labels.
    pub fn set_window(&mut self, window: usize) -> Result<(), BadWindow> {
        check_window(window)?;
        self.window = window;
        while self.history.len() > window {
            self.history.pop_front();
        }
        Ok(())
    }

    pub fn push(&mut self, state: EmotionState) -> EmotionState {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(state.label);

        let mut counts = [0usize; 3];
        for l in &self.history {
            counts[l.index()] += 1;
        }
        let top = counts.iter().copied().max().unwrap_or(0);
        let tied = |l: Emotion| counts[l.index()] == top;
        let label = match self.last {
            Some(prev) if tied(prev) => prev,
            _ => *self
                .history
                .iter()
                .rev()
                .find(|&&l| tied(l))
                .unwrap_or(&state.label),
        };
        self.last = Some(label);
        EmotionState { label, ..state }
    }
}

fn check_window(window: usize) -> Result<(), BadWindow> {
    if window == 0 || window.is_multiple_of(2) {
        Err(BadWindow(window))
    } else {
        Ok(())
    }
}

/// Runs a whole label stream through a fresh [`Smoother`].
pub fn smooth(states: &[EmotionState], window: usize) -> Result<Vec<EmotionState>, BadWindow> {
    let mut s = Smoother::new(window)?;
    Ok(states.iter().map(|&st| s.push(st)).collect())
}
