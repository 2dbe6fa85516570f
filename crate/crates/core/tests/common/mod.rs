#![allow(dead_code)]

use mugeetion_core::{Emotion, FacialFrame, Feature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feature-space class centers. Happy sits on the reported AU averages
/// (eyes 2.6605, mouth width 18.2263, mouth height 2.3777).
pub fn center(label: Emotion) -> [f64; 8] {
    match label {
        Emotion::Happy => [18.2263, 2.3777, 7.0, 6.9, 2.6605, 2.6605, 21.5, 7.5],
        Emotion::Neutral => [12.5, 1.2, 7.4, 7.3, 3.0, 2.9, 20.0, 6.5],
        Emotion::Sad => [8.0, 1.0, 7.9, 7.8, 2.6, 2.55, 19.5, 6.0],
    }
}

/// Half-width of the uniform jitter around each center, per feature.
pub fn spread() -> [f64; 8] {
    [0.4, 0.1, 0.05, 0.05, 0.05, 0.05, 0.3, 0.2]
}

pub fn dataset(seed: u64, per_label: usize) -> Vec<(FacialFrame, Emotion)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in Emotion::ALL {
        for i in 0..per_label {
            let c = center(label);
            let s = spread();
            let mut v = [0.0; 8];
            for k in 0..8 {
                v[k] = c[k] + rng.gen_range(-s[k]..=s[k]);
            }
            out.push((FacialFrame::from_features(i as u64, true, v), label));
        }
    }
    out
}

pub fn random_frame(rng: &mut impl Rng) -> FacialFrame {
    let v = Feature::ALL.map(|f| {
        let r = f.calibrated_range();
        rng.gen_range(r.min - 0.2 * r.span()..=r.max + 0.2 * r.span())
    });
    FacialFrame::from_features(0, true, v)
}
