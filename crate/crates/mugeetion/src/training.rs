//! Labeled training data in CSV form, plus a seeded demo dataset.

use std::io::{self, Read, Write};
use std::path::Path;

use mugeetion_core::{fit_model, AuExtractionTable, Emotion, EmotionModel, FacialFrame, Feature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CSV_HEADER: [&str; 9] = [
    "label",
    "mouth_width",
    "mouth_height",
    "eyebrow_left",
    "eyebrow_right",
    "eye_left",
    "eye_right",
    "jaw",
    "nostrils",
];

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("line 1: expected header {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: unknown label {label:?}")]
    BadLabel { line: u64, label: String },
    #[error("line {line}: column {column} is not a number: {value:?}")]
    NonNumericField {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: expected 9 fields, found {found}")]
    FieldCount { line: u64, found: usize },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses labeled frames. Frame timestamps are the zero-based row index.
pub fn read_training_csv<R: Read>(input: R) -> Result<Vec<(FacialFrame, Emotion)>, TrainingError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let expected = CSV_HEADER.join(",");
    let header = match records.next() {
        None => {
            return Err(TrainingError::BadHeader {
                expected,
                found: String::new(),
            })
        }
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
    };
    if header.iter().ne(CSV_HEADER) {
        return Err(TrainingError::BadHeader {
            expected,
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for (row, rec) in records.enumerate() {
        let fallback_line = row as u64 + 2;
        let rec = rec.map_err(|e| csv_error(e, fallback_line))?;
        let line = rec.position().map_or(fallback_line, |p| p.line());
        if rec.len() != CSV_HEADER.len() {
            return Err(TrainingError::FieldCount {
                line,
                found: rec.len(),
            });
        }
        let label: Emotion = rec[0].parse().map_err(|_| TrainingError::BadLabel {
            line,
            label: rec[0].into(),
        })?;
        let mut v = [0.0; 8];
        for (k, slot) in v.iter_mut().enumerate() {
            let raw = &rec[k + 1];
            *slot = raw.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                TrainingError::NonNumericField {
                    line,
                    column: CSV_HEADER[k + 1].into(),
                    value: raw.into(),
                }
            })?;
        }
        out.push((FacialFrame::from_features(row as u64, true, v), label));
    }
    Ok(out)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> TrainingError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TrainingError::Io(io),
        other => TrainingError::Csv {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn load_training_csv(path: &Path) -> Result<Vec<(FacialFrame, Emotion)>, TrainingError> {
    read_training_csv(std::fs::File::open(path)?)
}

pub fn write_training_csv<W: Write>(out: W, samples: &[(FacialFrame, Emotion)]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (f, label) in samples {
        let mut row = vec![label.to_string()];
        row.extend(f.features().iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Feature-space centers of the demo classes. Happy sits on the reported
/// happy AU averages: eye openness 2.6605, mouth width 18.2263 and mouth
/// height 2.3777.
pub fn demo_center(label: Emotion) -> [f64; 8] {
    match label {
        Emotion::Happy => [18.2263, 2.3777, 7.0, 6.9, 2.6605, 2.6605, 21.5, 7.5],
        Emotion::Neutral => [12.5, 1.2, 7.4, 7.3, 3.0, 2.9, 20.0, 6.5],
        Emotion::Sad => [8.0, 1.0, 7.9, 7.8, 2.6, 2.55, 19.5, 6.0],
    }
}

/// Half-width of the uniform jitter around each demo center, per feature.
pub const DEMO_SPREAD: [f64; 8] = [0.4, 0.1, 0.05, 0.05, 0.05, 0.05, 0.3, 0.2];

pub const DEMO_SEED: u64 = 0x6d75_6765;

/// Seeded, well-separated labeled frames, `per_label` of each emotion.
pub fn demo_dataset(seed: u64, per_label: usize) -> Vec<(FacialFrame, Emotion)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_label * 3);
    for label in Emotion::ALL {
        let c = demo_center(label);
        for _ in 0..per_label {
            let mut v = [0.0; 8];
            for k in 0..8 {
                v[k] = c[k] + rng.gen_range(-DEMO_SPREAD[k]..=DEMO_SPREAD[k]);
            }
            out.push((FacialFrame::from_features(out.len() as u64, true, v), label));
        }
    }
    out
}

/// Model fitted from [`demo_dataset`] with the default extraction table.
pub fn demo_model() -> EmotionModel {
    fit_model(&demo_dataset(DEMO_SEED, 30), &AuExtractionTable::default())
        .expect("demo dataset covers every label")
}

/// Uniform random frame over the calibrated ranges widened by 20% each side.
pub fn random_frame(rng: &mut impl Rng, timestamp_ms: u64) -> FacialFrame {
    let v = Feature::ALL.map(|f| {
        let r = f.calibrated_range();
        rng.gen_range(r.min - 0.2 * r.span()..=r.max + 0.2 * r.span())
    });
    FacialFrame::from_features(timestamp_ms, true, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str =
        "label,mouth_width,mouth_height,eyebrow_left,eyebrow_right,eye_left,eye_right,jaw,nostrils\n";

    #[test]
    fn parses_rows_and_trims_labels() {
        let text = format!("{HEAD}Happy ,18,2.3,7,7,2.6,2.6,21,7\nsad,8,1,7.9,7.8,2.6,2.5,19,6\n");
        let rows = read_training_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].1, Emotion::Happy);
        assert_eq!(rows[1].0.mouth_width, 8.0);
        assert_eq!(rows[1].0.timestamp_ms, 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "label,mouth_width\n";
        assert!(matches!(
            read_training_csv(bad.as_bytes()),
            Err(TrainingError::BadHeader { .. })
        ));

        let text = format!("{HEAD}happy,1,1,1,1,1,1,1,1\nangry,1,1,1,1,1,1,1,1\n");
        match read_training_csv(text.as_bytes()) {
            Err(TrainingError::BadLabel { line, label }) => assert_eq!((line, label.as_str()), (3, "angry")),
            other => panic!("{other:?}"),
        }

        let text = format!("{HEAD}happy,1,1,1,1,1,1,1,1\nsad,1,1,1,x,1,1,1,1\n");
        match read_training_csv(text.as_bytes()) {
            Err(TrainingError::NonNumericField { line, column, value }) => {
                assert_eq!((line, column.as_str(), value.as_str()), (3, "eyebrow_right", "x"))
            }
            other => panic!("{other:?}"),
        }

        let text = format!("{HEAD}happy,1,1\n");
        assert!(matches!(
            read_training_csv(text.as_bytes()),
            Err(TrainingError::FieldCount { line: 2, found: 3 })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let data = demo_dataset(4, 5);
        let mut buf = Vec::new();
        write_training_csv(&mut buf, &data).unwrap();
        assert_eq!(read_training_csv(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn demo_model_is_valid() {
        let m = demo_model();
        m.validate().unwrap();
        assert_eq!(m, demo_model());
    }
}
