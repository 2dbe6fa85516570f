//! Seeded synthetic gesture streams for one emotion.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use mugeetion_core::{AuId, Emotion, EmotionModel, FacialFrame, Feature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SYNTH_FPS: u64 = 30;

/// Share of a range's half-width the generated AU wanders around its mean.
const JITTER_SHARE: f64 = 0.3;

/// Keeps targets strictly inside the fitted range, as a share of its width.
const EDGE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("model has no ranges for {0}")]
    UnknownLabel(Emotion),
    #[error("model AU {0} has no extraction entry")]
    UnknownAu(AuId),
}

struct Wave {
    au: AuId,
    freq_hz: f64,
    phase: f64,
}

/// Frames at 30 fps for `duration_ms` whose AUs sit inside `label`'s fitted
/// ranges, so each scores zero for that label.
///
/// Each AU follows a sinusoid of seeded frequency (0.5 to 2 Hz) and phase.
/// When two AUs read the same feature the lower AU id drives it. Features no
/// AU of the label reads take the label's training means, falling back to
/// the calibrated midpoint.
pub fn synth_gestures(
    label: Emotion,
    duration_ms: u64,
    seed: u64,
    model: &EmotionModel,
) -> Result<Vec<FacialFrame>, SynthError> {
    synth_from(label, 0, duration_ms, seed, model)
}

/// As [`synth_gestures`], with timestamps offset by `start_ms`.
pub fn synth_from(
    label: Emotion,
    start_ms: u64,
    duration_ms: u64,
    seed: u64,
    model: &EmotionModel,
) -> Result<Vec<FacialFrame>, SynthError> {
    let ranges = model.ranges(label).ok_or(SynthError::UnknownLabel(label))?;
    let mut base = Feature::ALL.map(|f| f.calibrated_range().midpoint());
    if let Some(means) = &ranges.feature_means {
        for (f, m) in means {
            base[f.index()] = *m;
        }
    }

    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (label.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut sorted = ranges.au_ranges.clone();
    sorted.sort_by_key(|r| r.au);
    let waves: Vec<Wave> = sorted
        .iter()
        .map(|r| Wave {
            au: r.au,
            freq_hz: rng.gen_range(0.5..=2.0),
            phase: rng.gen_range(0.0..TAU),
        })
        .collect();
    for r in &sorted {
        if model.table.entry(r.au).is_none() {
            return Err(SynthError::UnknownAu(r.au));
        }
    }

    let mut out = Vec::new();
    for i in 0.. {
        let rel = i * 1000 / SYNTH_FPS;
        if rel >= duration_ms {
            break;
        }
        let mut values = base;
        let mut claimed = BTreeSet::new();
        for (r, w) in sorted.iter().zip(&waves) {
            let entry = model.table.entry(w.au).expect("checked above");
            if entry.source.features().any(|f| claimed.contains(&f)) {
                continue;
            }
            let half = (r.max - r.min) / 2.0;
            let margin = EDGE_MARGIN * (r.max - r.min);
            let t = rel as f64 / 1000.0;
            let target = (r.mean + JITTER_SHARE * half * (TAU * w.freq_hz * t + w.phase).sin())
                .clamp(r.min + margin, r.max - margin);
            let raw = entry.source_value(target);
            for f in entry.source.features() {
                values[f.index()] = raw;
                claimed.insert(f);
            }
        }
        out.push(FacialFrame::from_features(start_ms + rel, true, values));
    }
    Ok(out)
}
