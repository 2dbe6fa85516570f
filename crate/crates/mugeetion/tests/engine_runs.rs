mod common;

use std::time::{Duration, Instant};

use mugeetion::config::{EngineConfig, InputSpec, SynthSegment};
use mugeetion::engine::{ControlCommand, ControlError, Engine, NotRunning, Pipeline};
use mugeetion::session::{write_session, SessionHeader, Speed};
use mugeetion::synth::synth_gestures;
use mugeetion::training::demo_model;
use mugeetion_core::{Emotion, MappingProfile, MidiKind};

fn synth(segments: &[(Emotion, f64)], speed: Speed) -> EngineConfig {
    EngineConfig::new(InputSpec::Synth {
        segments: segments
            .iter()
            .map(|&(emotion, seconds)| SynthSegment { emotion, seconds })
            .collect(),
        seed: 7,
        speed,
    })
}

#[test]
fn long_happy_stream_at_max_speed() {
    let cfg = synth(&[(Emotion::Happy, 10_000.0 / 30.0)], Speed::Max);
    let (outputs, midi, tracks) = common::capture();
    let summary = Engine::start_with(&cfg, outputs).unwrap().wait().unwrap();
    assert_eq!(summary.ticks, 10_000);
    assert_eq!(summary.dropped_frames, 0);
    assert!(summary.track_commands >= 1);
    assert_eq!(tracks.lock().unwrap().len(), 1);

    let midi = midi.lock().unwrap();
    let mut last_cc = std::collections::HashMap::new();
    let mut sounding = None;
    for (_, e) in midi.iter() {
        match e.kind {
            MidiKind::ControlChange => {
                let key = (e.channel.get(), e.data1.get());
                assert_ne!(
                    last_cc.insert(key, e.data2.get()),
                    Some(e.data2.get()),
                    "repeated cc {e}"
                );
            }
            MidiKind::NoteOn => {
                assert!(sounding.replace(e.data1.get()).is_none(), "overlapping note {e}");
            }
            MidiKind::NoteOff => assert_eq!(sounding.take(), Some(e.data1.get())),
        }
    }
    assert!(sounding.is_none(), "note left sounding at shutdown");
}

#[test]
fn emotion_segments_drive_the_playlist() {
    let cfg = synth(
        &[
            (Emotion::Neutral, 2.0),
            (Emotion::Happy, 2.0),
            (Emotion::Sad, 2.0),
            (Emotion::Happy, 2.0),
            (Emotion::Neutral, 2.0),
            (Emotion::Sad, 2.0),
        ],
        Speed::Max,
    );
    let (outputs, _, tracks) = common::capture();
    Engine::start_with(&cfg, outputs).unwrap().wait().unwrap();
    let titles: Vec<String> = tracks
        .lock()
        .unwrap()
        .iter()
        .map(|(_, c)| c.track.title.clone())
        .collect();
    assert_eq!(
        titles,
        [
            "Piano Sonata No 16 in C major",
            "Symphony No 25 in G Minor K 183 1st Movement",
            "Eine Kleine Nachtmusik K 525 Allegro",
            "Piano Sonata No 11 in A major K 331",
            "Requiem in D minor",
        ]
    );
}

#[test]
fn snapshot_and_control_stop_with_the_engine() {
    let cfg = synth(&[(Emotion::Happy, 60.0)], Speed::Factor(1.0));
    let (outputs, _, _) = common::capture();
    let engine = Engine::start_with(&cfg, outputs).unwrap();
    let h = engine.handle();
    let deadline = Instant::now() + Duration::from_secs(3);
    while h.snapshot().unwrap().ticks < 5 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(10));
    }
    let snap = h.snapshot().unwrap();
    assert!(snap.running && !snap.stale);
    assert_eq!(snap.smoothing_window, 5);

    let ack = h
        .control(ControlCommand::SetSmoothingWindow { window: 3 })
        .unwrap();
    assert!(ack.applied_at_tick >= 5);
    assert_eq!(h.snapshot().unwrap().config_hash, ack.config_hash);
    assert_eq!(h.snapshot().unwrap().smoothing_window, 3);

    let mut bad = MappingProfile::default();
    bad.rules[1].out_max = 130;
    assert!(matches!(
        h.control(ControlCommand::SwapProfile { profile: bad }),
        Err(ControlError::ValidationFailed(_))
    ));
    assert_eq!(h.snapshot().unwrap().config_hash, ack.config_hash);

    let summary = engine.stop().unwrap();
    assert!(summary.ticks < 60 * 30);
    assert_eq!(h.snapshot().unwrap_err(), NotRunning);
    assert_eq!(
        h.control(ControlCommand::SetSmoothingWindow { window: 1 }),
        Err(ControlError::NotRunning)
    );
    assert!(!h.last_snapshot().running);
}

/// A mid-run profile swap loses no frames and changes output only from the
/// acknowledged tick on.
#[test]
fn profile_swap_mid_replay() {
    let dir = common::temp_dir("swap");
    let model = demo_model();
    let mut frames = synth_gestures(Emotion::Happy, 4000, 1, &model).unwrap();
    let t0 = frames.last().unwrap().timestamp_ms + 33;
    frames.extend(
        synth_gestures(Emotion::Sad, 4000, 2, &model)
            .unwrap()
            .into_iter()
            .map(|mut f| {
                f.timestamp_ms += t0;
                f
            }),
    );
    let path = dir.join("s.jsonl");
    write_session(&path, &SessionHeader::now("test"), &frames).unwrap();

    let mut swapped = MappingProfile {
        name: "shifted".into(),
        ..MappingProfile::default()
    };
    swapped.rules[2].out_min = 30;
    swapped.rules[2].out_max = 40;

    let cfg = EngineConfig::new(InputSpec::Session {
        path,
        speed: Speed::Factor(4.0),
    });
    let (outputs, midi, _) = common::capture();
    let engine = Engine::start_with(&cfg, outputs).unwrap();
    std::thread::sleep(Duration::from_millis(800));
    let ack = engine
        .handle()
        .control(ControlCommand::SwapProfile {
            profile: swapped.clone(),
        })
        .unwrap();
    let summary = engine.wait().unwrap();
    assert_eq!(summary.ticks, frames.len() as u64);
    assert!(ack.applied_at_tick > 0 && ack.applied_at_tick < frames.len() as u64);

    let mut offline = Pipeline::new(model, MappingProfile::default(), 5).unwrap();
    let mut expected = Vec::new();
    for f in &frames {
        if offline.ticks() == ack.applied_at_tick {
            let offline_ack = offline
                .apply(ControlCommand::SwapProfile {
                    profile: swapped.clone(),
                })
                .unwrap();
            assert_eq!(offline_ack, ack);
        }
        let out = offline.tick(f);
        expected.extend(out.midi.iter().map(|e| (out.tick, *e)));
    }
    let tail = offline.release();
    expected.extend(tail.iter().map(|e| (offline.ticks(), *e)));
    assert_eq!(*midi.lock().unwrap(), expected);

    let mut baseline = Pipeline::new(demo_model(), MappingProfile::default(), 5).unwrap();
    let unswapped: Vec<_> = frames
        .iter()
        .flat_map(|f| {
            let out = baseline.tick(f);
            out.midi.into_iter().map(move |e| (out.tick, e))
        })
        .collect();
    let split = |v: &[(u64, mugeetion_core::MidiEvent)]| {
        let (a, b): (Vec<(u64, mugeetion_core::MidiEvent)>, Vec<_>) =
            v.iter().copied().partition(|(t, _)| *t < ack.applied_at_tick);
        (a, b)
    };
    let (before, after) = split(&expected);
    let (base_before, base_after) = split(&unswapped);
    assert_eq!(before, base_before);
    assert_ne!(after, base_after);
}

#[test]
fn missing_model_file_fails_at_startup() {
    let mut cfg = synth(&[(Emotion::Happy, 1.0)], Speed::Max);
    cfg.model = Some("/definitely/not/here.json".into());
    let err = Engine::start(&cfg).err().expect("startup error");
    assert!(err.to_string().contains("/definitely/not/here.json"), "{err}");
}
