//! Brute-force range scoring and range fitting.

use std::collections::HashMap;

use mugeetion_core::emotion::{AuSource, Polarity};
use mugeetion_core::{AuExtractionTable, Emotion, EmotionModel, FacialFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefScore {
    pub label: Emotion,
    pub out_of_range: f64,
    pub mean_distance: f64,
}

/// Scores every emotion and returns `(winner, all scores in model order)`.
///
/// Terms are summed in ascending AU id. The winner is the lexicographic
/// minimum of (out-of-range, mean distance, declaration position).
pub fn classify(au: &HashMap<u8, f64>, model: &EmotionModel) -> (Emotion, Vec<RefScore>) {
    let mut scores = Vec::new();
    for e in &model.emotions {
        let mut ids: Vec<u8> = e.au_ranges.iter().map(|r| r.au.0).collect();
        ids.sort_unstable();
        let mut out_sum = 0.0;
        let mut dist_sum = 0.0;
        for id in &ids {
            let r = e.au_ranges.iter().find(|r| r.au.0 == *id).unwrap();
            let x = au[id];
            let w = r.max - r.min;
            let below = if x < r.min { (r.min - x) / w } else { 0.0 };
            let above = if x > r.max { (x - r.max) / w } else { 0.0 };
            out_sum += below + above;
            dist_sum += (x - r.mean).abs() / w;
        }
        let n = ids.len() as f64;
        scores.push(RefScore {
            label: e.label,
            out_of_range: out_sum / n,
            mean_distance: dist_sum / n,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&scores[a], &scores[b]);
        sa.out_of_range
            .partial_cmp(&sb.out_of_range)
            .unwrap()
            .then(sa.mean_distance.partial_cmp(&sb.mean_distance).unwrap())
            .then(a.cmp(&b))
    });
    (scores[order[0]].label, scores)
}

/// AU score of one table entry, written out longhand.
pub fn au_score(table: &AuExtractionTable, au: u8, f: &FacialFrame) -> f64 {
    let entry = table.entries.iter().find(|e| e.au.0 == au).unwrap();
    let (raw, lo, hi) = match entry.source {
        AuSource::Feature(a) => {
            let r = a.calibrated_range();
            (f.get(a), r.min, r.max)
        }
        AuSource::MeanOf(a, b) => {
            let (ra, rb) = (a.calibrated_range(), b.calibrated_range());
            (
                (f.get(a) + f.get(b)) / 2.0,
                (ra.min + rb.min) / 2.0,
                (ra.max + rb.max) / 2.0,
            )
        }
    };
    match entry.polarity {
        Polarity::Direct => raw,
        Polarity::Inverted => hi + lo - raw,
    }
}

/// (min, max) of `au` over all samples with `label`.
pub fn scan_range(
    samples: &[(FacialFrame, Emotion)],
    table: &AuExtractionTable,
    label: Emotion,
    au: u8,
) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (f, l) in samples {
        if *l == label {
            let x = au_score(table, au, f);
            if x < lo {
                lo = x;
            }
            if x > hi {
                hi = x;
            }
        }
    }
    (lo, hi)
}
