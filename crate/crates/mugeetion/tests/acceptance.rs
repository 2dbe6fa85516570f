//! End-to-end acceptance checks, one PASS/FAIL line each.

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mugeetion::config::{EngineConfig, InputSpec, SynthSegment};
use mugeetion::engine::{ControlCommand, Engine, Outputs, Pipeline};
use mugeetion::session::{write_session, SessionHeader, Speed};
use mugeetion::sinks::{MidiCapture, MidiSink, TrackCapture, TrackSink};
use mugeetion::synth::synth_from;
use mugeetion::training::{demo_center, demo_dataset, demo_model, random_frame, DEMO_SEED};
use mugeetion_core::mapping::select_tracks;
use mugeetion_core::midi::{decode_vlq, Channel, U7};
use mugeetion_core::osc::{parse_message, parse_packet, serialize_message};
use mugeetion_core::{
    classify, encode_midi, encode_vlq, extract_aus, normalize_to_midi, write_smf, AuId, Emotion,
    EmotionState, FacialFrame, Feature, Mapper, MappingProfile, MidiEvent, MidiKind, OscArg, OscMessage,
};
use mugeetion_oracles::osc_ref::{encode_bundle, encode_message, Arg};
use mugeetion_oracles::smf_reader::{self, Item};
use mugeetion_oracles::{classify_ref, midi_ref, normalize_ref};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mugeetion-acceptance-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn capture() -> (Outputs, MidiCapture, TrackCapture) {
    let midi = MidiCapture::default();
    let tracks = TrackCapture::default();
    let outputs = Outputs {
        midi: MidiSink::Memory(midi.clone()),
        track: TrackSink::Memory(tracks.clone()),
        smf: None,
    };
    (outputs, midi, tracks)
}

/// Calibrated endpoints map to exactly 0 and 127, and the half-up example
/// lands on 64.
fn a1_normalization_endpoints() -> Check {
    let mut checks = 0;
    for f in Feature::ALL {
        let r = f.calibrated_range();
        let lo = normalize_to_midi(r.min, r.min, r.max).map_err(|e| e.to_string())?;
        let hi = normalize_to_midi(r.max, r.min, r.max).map_err(|e| e.to_string())?;
        ensure!(lo == 0, "{f} min -> {lo}");
        ensure!(hi == 127, "{f} max -> {hi}");
        let (smin, smax) = (format!("{}", r.min), format!("{}", r.max));
        ensure!(
            normalize_ref::normalize(&smin, &smin, &smax) == 0,
            "oracle {f} min"
        );
        ensure!(
            normalize_ref::normalize(&smax, &smin, &smax) == 127,
            "oracle {f} max"
        );
        checks += 2;
    }
    ensure!(checks == 16, "{checks} endpoint checks");
    ensure!(
        normalize_to_midi(1.94515, 0.8893, 3.0010) == Ok(64),
        "mouth height example"
    );
    ensure!(
        normalize_ref::normalize("1.94515", "0.8893", "3.0010") == 64,
        "oracle example"
    );
    Ok(())
}

/// The reported happy AU averages classify as happy with zero score.
fn a2_happy_means() -> Check {
    let model = demo_model();
    let mut frame = FacialFrame::from_features(0, true, demo_center(Emotion::Happy));
    frame.eye_left = 2.6605;
    frame.eye_right = 2.6605;
    frame.mouth_width = 18.2263;
    frame.mouth_height = 2.3777;
    let v = extract_aus(&frame, &model.table).map_err(|e| e.to_string())?;
    ensure!(v.get(AuId(6)) == Some(2.6605), "AU6 {:?}", v.get(AuId(6)));
    ensure!(v.get(AuId(12)) == Some(18.2263), "AU12 {:?}", v.get(AuId(12)));
    ensure!(v.get(AuId(25)) == Some(2.3777), "AU25 {:?}", v.get(AuId(25)));
    let st = classify(&v, &model).map_err(|e| e.to_string())?;
    ensure!(st.label == Emotion::Happy, "label {}", st.label);
    ensure!(st.scores.happy == 0.0, "S_happy {}", st.scores.happy);
    Ok(())
}

/// Classification agrees with the brute-force reference on 60 training and
/// 500 random vectors.
fn a3_classifier_vs_reference() -> Check {
    let samples = demo_dataset(DEMO_SEED, 20);
    let model = mugeetion_core::fit_model(&samples, &mugeetion_core::AuExtractionTable::default())
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut frames: Vec<FacialFrame> = samples.iter().map(|s| s.0).collect();
    frames.extend((0..500).map(|i| random_frame(&mut rng, i)));
    ensure!(frames.len() == 560, "{} vectors", frames.len());
    for (i, f) in frames.iter().enumerate() {
        let v = extract_aus(f, &model.table).map_err(|e| e.to_string())?;
        let st = classify(&v, &model).map_err(|e| e.to_string())?;
        let map: HashMap<u8, f64> = v.scores.iter().map(|(k, x)| (k.0, *x)).collect();
        let (label, scores) = classify_ref::classify(&map, &model);
        ensure!(st.label == label, "vector {i}: {} vs {label}", st.label);
        for s in scores {
            ensure!(
                st.scores.get(s.label) == s.out_of_range,
                "vector {i} {} score",
                s.label
            );
        }
    }
    Ok(())
}

fn random_arg(rng: &mut ChaCha8Rng) -> OscArg {
    match rng.gen_range(0..4) {
        0 => OscArg::Int(rng.gen()),
        1 => loop {
            let f = f32::from_bits(rng.gen());
            if f.is_finite() {
                break OscArg::Float(f);
            }
        },
        2 => OscArg::Str(
            (0..rng.gen_range(0..13))
                .map(|_| rng.gen_range(' '..='~'))
                .collect(),
        ),
        _ => OscArg::Blob((0..rng.gen_range(0..13)).map(|_| rng.gen()).collect()),
    }
}

fn ref_args(m: &OscMessage) -> Vec<Arg<'_>> {
    m.args
        .iter()
        .map(|a| match a {
            OscArg::Int(v) => Arg::I(*v),
            OscArg::Float(v) => Arg::F(*v),
            OscArg::Str(s) => Arg::S(s),
            OscArg::Blob(b) => Arg::B(b),
        })
        .collect()
}

/// OSC fixtures plus 1000 random round trips against the reference encoder,
/// inside 5 seconds.
fn a4_osc_round_trip() -> Check {
    let start = Instant::now();
    let a5 = [0x2F, 0x61, 0, 0, 0x2C, 0x69, 0, 0, 0, 0, 0, 5];
    let msg = OscMessage::new("/a", vec![OscArg::Int(5)]);
    ensure!(
        serialize_message(&msg).ok().as_deref() == Some(&a5[..]),
        "/a 5 encoding"
    );
    ensure!(parse_message(&a5).ok() == Some(msg), "/a 5 decoding");
    let jaw = serialize_message(&OscMessage::new("/gesture/jaw", vec![OscArg::Float(20.0)])).unwrap();
    ensure!(
        jaw.len() == 24 && jaw[20..] == [0x41, 0xA0, 0, 0],
        "/gesture/jaw 20.0 encoding"
    );
    ensure!(encode_bundle(1, &[]).len() == 16, "empty bundle");
    let mut elements = vec![encode_message("/found", &[Arg::I(1)])];
    elements.extend(
        Feature::ALL
            .iter()
            .map(|f| encode_message(f.address(), &[Arg::F(1.0)])),
    );
    let flat = parse_packet(&encode_bundle(1, &elements))
        .map_err(|e| e.to_string())?
        .flatten();
    ensure!(flat.len() == 9 && flat[0].address == "/found", "9-message bundle");

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        let address = format!(
            "/{}",
            (0..rng.gen_range(0..20))
                .map(|_| rng.gen_range(' '..='~'))
                .collect::<String>()
        );
        let args = (0..rng.gen_range(0..8)).map(|_| random_arg(&mut rng)).collect();
        let m = OscMessage { address, args };
        let bytes = serialize_message(&m).map_err(|e| format!("case {i}: {e}"))?;
        ensure!(bytes.len() % 4 == 0, "case {i}: unaligned");
        ensure!(
            bytes == encode_message(&m.address, &ref_args(&m)),
            "case {i}: differs from reference"
        );
        ensure!(
            parse_message(&bytes).ok().as_ref() == Some(&m),
            "case {i}: round trip"
        );
    }
    ensure!(
        start.elapsed() < Duration::from_secs(5),
        "took {:?}",
        start.elapsed()
    );
    Ok(())
}

/// Synthetic neutral, happy, sad, happy streams yield exactly three track
/// commands in playlist order.
fn a5_track_commands() -> Check {
    let cfg = EngineConfig::new(InputSpec::Synth {
        segments: [Emotion::Neutral, Emotion::Happy, Emotion::Sad, Emotion::Happy]
            .into_iter()
            .map(|emotion| SynthSegment {
                emotion,
                seconds: 3.0,
            })
            .collect(),
        seed: 5,
        speed: Speed::Max,
    });
    let (outputs, _, tracks) = capture();
    Engine::start_with(&cfg, outputs)
        .map_err(|e| e.to_string())?
        .wait()
        .map_err(|e| e.to_string())?;
    let titles: Vec<String> = tracks
        .lock()
        .unwrap()
        .iter()
        .map(|(_, c)| c.track.title.clone())
        .collect();
    let want = [
        "Piano Sonata No 16 in C major",
        "Symphony No 25 in G Minor K 183 1st Movement",
        "Eine Kleine Nachtmusik K 525 Allegro",
    ];
    ensure!(titles == want, "{titles:?}");

    let state = |label| EmotionState {
        timestamp_ms: 0,
        label,
        scores: Default::default(),
        mean_distances: Default::default(),
    };
    let stable = [Emotion::Happy; 3].map(state);
    let cmds = select_tracks(&stable, &MappingProfile::default()).map_err(|e| e.to_string())?;
    ensure!(cmds.len() == 1, "stable happy gave {} commands", cmds.len());
    Ok(())
}

/// MIDI byte fixtures, VLQ fixtures and an SMF reader round trip with every
/// note-on paired.
fn a6_midi_and_smf() -> Check {
    let c0 = Channel::new(0).unwrap();
    let u = |v| U7::new(v).unwrap();
    ensure!(
        encode_midi(&MidiEvent::note_on(c0, u(60), u(100), 0)) == [0x90, 0x3C, 0x64],
        "note on"
    );
    ensure!(
        encode_midi(&MidiEvent::note_off(c0, u(60), 0)) == [0x80, 0x3C, 0x00],
        "note off"
    );
    ensure!(
        encode_midi(&MidiEvent::control_change(
            Channel::new(15).unwrap(),
            u(7),
            u(127),
            0
        )) == [0xBF, 0x07, 0x7F],
        "cc"
    );
    for (n, bytes) in [
        (0u32, vec![0x00]),
        (0x7F, vec![0x7F]),
        (0x80, vec![0x81, 0x00]),
        (0x3FFF, vec![0xFF, 0x7F]),
        (0x0FFF_FFFF, vec![0xFF, 0xFF, 0xFF, 0x7F]),
    ] {
        let v = encode_vlq(n).map_err(|e| e.to_string())?;
        ensure!(
            v.as_bytes() == bytes.as_slice() && midi_ref::vlq(n) == bytes,
            "vlq {n:#x}"
        );
        ensure!(decode_vlq(&bytes) == Ok((n, bytes.len())), "vlq decode {n:#x}");
    }
    ensure!(encode_vlq(0x1000_0000).is_err(), "vlq above range accepted");
    let empty = write_smf(&[]).map_err(|e| e.to_string())?;
    ensure!(
        empty
            == [
                b"MThd".as_slice(),
                &[0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0],
                b"MTrk",
                &[0, 0, 0, 4, 0, 0xFF, 0x2F, 0]
            ]
            .concat(),
        "empty SMF bytes"
    );

    let model = demo_model();
    let profile = MappingProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mapper = Mapper::new();
    let mut events = Vec::new();
    for i in 0..2000u64 {
        let f = random_frame(&mut rng, i * 33);
        if rng.gen_bool(0.05) {
            events.extend(mapper.release(f.timestamp_ms));
            continue;
        }
        let v = extract_aus(&f, &model.table).map_err(|e| e.to_string())?;
        let st = classify(&v, &model).map_err(|e| e.to_string())?;
        events.extend(mapper.map_frame(&f, &v, &st, &profile));
    }
    events.extend(mapper.release(2000 * 33));
    let smf = smf_reader::read(&write_smf(&events).map_err(|e| e.to_string())?)?;
    ensure!(
        smf.header.format == 0 && smf.header.division == 480,
        "header {:?}",
        smf.header
    );
    let read: Vec<Vec<u8>> = smf.tracks[0]
        .iter()
        .filter_map(|i| match i {
            Item::Channel { bytes, .. } => Some(bytes.clone()),
            Item::Meta { .. } => None,
        })
        .collect();
    let written: Vec<Vec<u8>> = events.iter().map(|e| encode_midi(e).to_vec()).collect();
    ensure!(read == written, "SMF channel events differ from the input");
    let mut open: Option<u8> = None;
    for e in &events {
        match e.kind {
            MidiKind::NoteOn => {
                ensure!(
                    open.is_none(),
                    "note-on while a note sounds at {}",
                    e.timestamp_ms
                );
                open = Some(e.data1.get());
            }
            MidiKind::NoteOff => ensure!(open.take() == Some(e.data1.get()), "unmatched note-off"),
            MidiKind::ControlChange => {}
        }
    }
    ensure!(open.is_none(), "unpaired note-on at end");
    Ok(())
}

fn mixed_session(dir: &Path, frames_wanted: usize) -> PathBuf {
    let model = demo_model();
    let mut frames = Vec::new();
    let mut start = 0;
    let order = [Emotion::Happy, Emotion::Sad, Emotion::Neutral, Emotion::Happy];
    let mut k = 0;
    while frames.len() < frames_wanted {
        let seg = synth_from(order[k % order.len()], start, 20_000, k as u64, &model).unwrap();
        start += 20_000;
        k += 1;
        frames.extend(seg);
    }
    frames.truncate(frames_wanted);
    for (i, f) in frames.iter_mut().enumerate() {
        if i % 997 == 500 {
            f.face_found = false;
        }
    }
    let path = dir.join("session.jsonl");
    write_session(&path, &SessionHeader::now("acceptance"), &frames).unwrap();
    path
}

/// Replaying a 10,000-frame session at max speed through the binary twice
/// gives byte-identical MIDI files, each run under 5 seconds.
fn a7_deterministic_replay() -> Check {
    let dir = scratch("a7");
    let session = mixed_session(&dir, 10_000);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let (smf, raw) = (dir.join(format!("{name}.mid")), dir.join(format!("{name}.bin")));
        let start = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_mugeetion"))
            .arg("replay")
            .arg(&session)
            .args(["--speed", "max", "--smf"])
            .arg(&smf)
            .arg("--midi-out")
            .arg(&raw)
            .env("MUGEETION_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        let took = start.elapsed();
        ensure!(
            out.status.success(),
            "exit {:?}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        );
        ensure!(took < Duration::from_secs(5), "replay {name} took {took:?}");
        outputs.push((std::fs::read(&smf).unwrap(), std::fs::read(&raw).unwrap()));
    }
    ensure!(outputs[0] == outputs[1], "replays differ");
    ensure!(outputs[0].1.len() > 300, "only {} MIDI bytes", outputs[0].1.len());
    smf_reader::read(&outputs[0].0)?;
    Ok(())
}

/// A profile swap during replay drops no frames and changes output only
/// from the acknowledged tick on.
fn a8_live_profile_swap() -> Check {
    let dir = scratch("a8");
    let session = mixed_session(&dir, 600);
    let (_, frames) = mugeetion::session::load_session(&session).map_err(|e| e.to_string())?;
    let cfg = EngineConfig::new(InputSpec::Session {
        path: session,
        speed: Speed::Factor(10.0),
    });
    let mut swapped = MappingProfile {
        name: "swapped".into(),
        ..MappingProfile::default()
    };
    swapped.rules[2].out_min = 36;
    swapped.rules[2].out_max = 96;
    swapped.rules[3].out_max = 100;

    let (outputs, midi, _) = capture();
    let engine = Engine::start_with(&cfg, outputs).map_err(|e| e.to_string())?;
    std::thread::sleep(Duration::from_millis(900));
    let ack = engine
        .handle()
        .control(ControlCommand::SwapProfile {
            profile: swapped.clone(),
        })
        .map_err(|e| e.to_string())?;
    let summary = engine.wait().map_err(|e| e.to_string())?;
    ensure!(
        summary.ticks == frames.len() as u64,
        "{} of {} frames",
        summary.ticks,
        frames.len()
    );
    ensure!(
        ack.applied_at_tick > 0 && ack.applied_at_tick < frames.len() as u64,
        "swap landed at tick {}",
        ack.applied_at_tick
    );

    let run = |swap: bool| {
        let mut p = Pipeline::new(demo_model(), MappingProfile::default(), 5).unwrap();
        let mut out = Vec::new();
        for f in &frames {
            if swap && p.ticks() == ack.applied_at_tick {
                p.apply(ControlCommand::SwapProfile {
                    profile: swapped.clone(),
                })
                .unwrap();
            }
            let t = p.tick(f);
            out.extend(t.midi.iter().map(|e| (t.tick, *e)));
        }
        let tail = p.release();
        out.extend(tail.iter().map(|e| (p.ticks(), *e)));
        out
    };
    let (expected, baseline) = (run(true), run(false));
    let live = midi.lock().unwrap().clone();
    ensure!(
        live == expected,
        "live output differs from offline swap at tick {}",
        ack.applied_at_tick
    );
    let before = |v: &[(u64, MidiEvent)]| v.iter().filter(|(t, _)| *t < ack.applied_at_tick).count();
    ensure!(
        live[..before(&live)] == baseline[..before(&baseline)],
        "output changed before the swap"
    );
    ensure!(live != baseline, "swap had no effect");
    Ok(())
}

type Entry = (&'static str, &'static str, fn() -> Check);

fn main() -> ExitCode {
    let checks: [Entry; 8] = [
        (
            "A1",
            "normalization endpoints and half-up example",
            a1_normalization_endpoints,
        ),
        ("A2", "happy AU averages classify as happy", a2_happy_means),
        (
            "A3",
            "classifier matches brute-force reference",
            a3_classifier_vs_reference,
        ),
        ("A4", "OSC fixtures and 1000 round trips", a4_osc_round_trip),
        (
            "A5",
            "emotion changes produce the expected tracks",
            a5_track_commands,
        ),
        (
            "A6",
            "MIDI, VLQ and SMF fixtures with paired notes",
            a6_midi_and_smf,
        ),
        (
            "A7",
            "max-speed replay is byte-identical and fast",
            a7_deterministic_replay,
        ),
        ("A8", "live profile swap is gap-free", a8_live_profile_swap),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in checks {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(()) => println!("PASS {id} {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id} {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
