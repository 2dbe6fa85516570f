mod common;

use std::path::Path;
use std::process::{Command, Output};

use mugeetion::training::{demo_dataset, write_training_csv};
use mugeetion_oracles::smf_reader::{self, Item};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mugeetion"))
        .args(args)
        .current_dir(cwd)
        .env("MUGEETION_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_then_replay_to_smf() {
    let dir = common::temp_dir("cli-replay");
    let o = bin(
        &[
            "simulate",
            "--emotion",
            "sad",
            "--seconds",
            "3",
            "--seed",
            "4",
            "--out",
            "s.jsonl",
        ],
        &dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = std::fs::read_to_string(dir.join("s.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1 + 90);

    for out in ["a.mid", "b.mid"] {
        let o = bin(
            &[
                "replay",
                "s.jsonl",
                "--speed",
                "max",
                "--smf",
                out,
                "--tracks-out",
                "tracks.jsonl",
            ],
            &dir,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.join("a.mid")).unwrap();
    assert_eq!(a, std::fs::read(dir.join("b.mid")).unwrap());
    let smf = smf_reader::read(&a).unwrap();
    assert_eq!(
        (smf.header.format, smf.header.ntracks, smf.header.division),
        (0, 1, 480)
    );
    let mut on = 0i32;
    for item in &smf.tracks[0] {
        if let Item::Channel { bytes, .. } = item {
            match bytes[0] & 0xF0 {
                0x90 => on += 1,
                0x80 => on -= 1,
                _ => {}
            }
            assert!((0..=1).contains(&on));
        }
    }
    assert_eq!(on, 0);
    let tracks = std::fs::read_to_string(dir.join("tracks.jsonl")).unwrap();
    assert!(tracks.contains("Symphony No 25 in G Minor K 183 1st Movement"));
}

#[test]
fn simulate_to_stdout() {
    let dir = common::temp_dir("cli-stdout");
    let o = bin(&["simulate", "--emotion", "happy", "--seconds", "1"], &dir);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("{\"format_version\":1,"));
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn fit_writes_identical_models() {
    let dir = common::temp_dir("cli-fit");
    write_training_csv(
        std::fs::File::create(dir.join("t.csv")).unwrap(),
        &demo_dataset(2, 10),
    )
    .unwrap();
    for out in ["m1.json", "m2.json"] {
        let o = bin(&["fit", "--csv", "t.csv", "--out", out], &dir);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        std::fs::read(dir.join("m1.json")).unwrap(),
        std::fs::read(dir.join("m2.json")).unwrap()
    );
    let o = bin(
        &[
            "simulate",
            "--emotion",
            "neutral",
            "--seconds",
            "1",
            "--model",
            "m1.json",
            "--out",
            "n.jsonl",
        ],
        &dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_1() {
    let dir = common::temp_dir("cli-errors");
    let o = bin(&["simulate", "--emotion", "angry", "--seconds", "1"], &dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("angry"));

    std::fs::write(dir.join("bad.json"), r#"{"input":{"udp":{"port":-4}}}"#).unwrap();
    let o = bin(&["run", "--config", "bad.json"], &dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("input.udp.port"), "{}", stderr(&o));

    std::fs::write(
        dir.join("nomodel.json"),
        r#"{"input":{"udp":{}},"model":"gone.json"}"#,
    )
    .unwrap();
    let o = bin(&["run", "--config", "nomodel.json"], &dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gone.json"));

    let o = bin(&["replay", "missing.jsonl", "--speed", "max"], &dir);
    assert_eq!(o.status.code(), Some(1));

    let o = bin(&["replay", "x", "--speed", "warp"], &dir);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(dir.join("t.csv"), "label,mouth_width\n").unwrap();
    let o = bin(&["fit", "--csv", "t.csv", "--out", "m.json"], &dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 1"));
}

#[test]
fn run_with_synthetic_config() {
    let dir = common::temp_dir("cli-run");
    std::fs::write(
        dir.join("cfg.json"),
        r#"{
            "input": {"synth": {"segments": [
                {"emotion": "happy", "seconds": 2},
                {"emotion": "sad", "seconds": 2}
            ], "seed": 3}},
            "smoothing_window": 3,
            "midi_sink": {"file": "out.bin"},
            "track_sink": {"log": "tracks.jsonl"},
            "smf": "out.mid"
        }"#,
    )
    .unwrap();
    let o = bin(&["run", "--config", "cfg.json"], &dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let raw = std::fs::read(dir.join("out.bin")).unwrap();
    assert!(!raw.is_empty() && raw.len().is_multiple_of(3));
    let tracks = std::fs::read_to_string(dir.join("tracks.jsonl")).unwrap();
    assert_eq!(tracks.lines().count(), 2);
    assert!(smf_reader::read(&std::fs::read(dir.join("out.mid")).unwrap()).is_ok());
}
