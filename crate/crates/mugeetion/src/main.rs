use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mugeetion::config::{load_config, EngineConfig, InputSpec};
use mugeetion::engine::{Engine, EngineError, Outputs, RunSummary};
use mugeetion::files::{load_model, load_table, save_model};
use mugeetion::session::{SessionHeader, SessionWriter, Speed};
use mugeetion::sinks::{MidiSink, MidiSinkSpec, TrackSink, TrackSinkSpec};
use mugeetion::synth::synth_gestures;
use mugeetion::training::{demo_model, load_training_csv};
use mugeetion::udp::{FaceOscListener, DEFAULT_FACEOSC_PORT};
use mugeetion_core::emotion::DEFAULT_SMOOTHING_WINDOW;
use mugeetion_core::{fit_model, AuExtractionTable, Emotion};

#[derive(Parser)]
#[command(name = "mugeetion", version, about = "Facial gestures to emotion-driven MIDI")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the engine from a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit an emotion model from labeled CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        /// Extraction table JSON; the default table when omitted.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a recorded session through the engine.
    Replay {
        session: PathBuf,
        #[arg(long, default_value = "1")]
        speed: Speed,
        /// Standard MIDI File written when the replay ends.
        #[arg(long)]
        smf: Option<PathBuf>,
        /// Raw MIDI bytes, 3 per event.
        #[arg(long)]
        midi_out: Option<PathBuf>,
        /// Track commands as JSON lines.
        #[arg(long)]
        tracks_out: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SMOOTHING_WINDOW)]
        window: usize,
    },
    /// Write a synthetic session for one emotion.
    Simulate {
        #[arg(long)]
        emotion: String,
        #[arg(long)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Session file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record FaceOSC from UDP into a session file until interrupted.
    Record {
        #[arg(long, default_value_t = DEFAULT_FACEOSC_PORT)]
        port: u16,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many seconds.
        #[arg(long)]
        seconds: Option<f64>,
    },
}

/// Configuration and startup problems exit 1; failures while running exit 2.
enum Failure {
    Setup(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Setup(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MUGEETION_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Setup(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            run_engine(&cfg, Outputs::from_config(&cfg)?)
        }
        Command::Fit { csv, table, out } => {
            let table = match table {
                Some(p) => load_table(&p)?,
                None => AuExtractionTable::default(),
            };
            let samples = load_training_csv(&csv)?;
            let model = fit_model(&samples, &table).with_context(|| format!("fitting {}", csv.display()))?;
            save_model(&out, &model)?;
            for e in &model.emotions {
                log::info!(
                    "{}: {} samples, {} AU ranges",
                    e.label,
                    e.sample_count,
                    e.au_ranges.len()
                );
            }
            Ok(())
        }
        Command::Replay {
            session,
            speed,
            smf,
            midi_out,
            tracks_out,
            model,
            profile,
            window,
        } => {
            let mut cfg = EngineConfig::new(InputSpec::Session { path: session, speed });
            cfg.model = model;
            cfg.profile = profile;
            cfg.smoothing_window = window;
            cfg.smf = smf;
            cfg.midi_sink = midi_out.map_or(MidiSinkSpec::None, MidiSinkSpec::File);
            cfg.track_sink = tracks_out.map_or(TrackSinkSpec::None, TrackSinkSpec::Log);
            cfg.validate(Path::new("."))?;
            let outputs = Outputs {
                midi: MidiSink::open(&cfg.midi_sink).context("opening MIDI output")?,
                track: TrackSink::open(&cfg.track_sink).context("opening track output")?,
                smf: cfg.smf.clone(),
            };
            run_engine(&cfg, outputs)
        }
        Command::Simulate {
            emotion,
            seconds,
            seed,
            model,
            out,
        } => {
            let label: Emotion = emotion.parse()?;
            if !(seconds.is_finite() && seconds > 0.0) {
                return Err(anyhow::anyhow!("--seconds must be a positive number").into());
            }
            let model = match model {
                Some(p) => load_model(&p)?,
                None => demo_model(),
            };
            let frames = synth_gestures(label, (seconds * 1000.0).round() as u64, seed, &model)?;
            let header = SessionHeader::now(&format!("synthetic {label} seed {seed}"));
            let sink: Box<dyn Write> = match &out {
                Some(p) => {
                    Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
                }
                None => Box::new(io::stdout().lock()),
            };
            let mut w = SessionWriter::new(io::BufWriter::new(sink), &header)?;
            for f in &frames {
                w.append(f)?;
            }
            w.finish()?;
            Ok(())
        }
        Command::Record { port, out, seconds } => record(port, &out, seconds),
    }
}

fn interrupt_flag() -> Result<Arc<AtomicBool>, Failure> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    ctrlc::set_handler(move || f.store(true, Ordering::Relaxed)).context("installing signal handler")?;
    Ok(flag)
}

fn run_engine(cfg: &EngineConfig, outputs: Outputs) -> Result<(), Failure> {
    let interrupted = interrupt_flag()?;
    let engine = Engine::start_with(cfg, outputs)?;
    let handle = engine.handle();
    let watcher = {
        let handle = handle.clone();
        std::thread::spawn(move || {
            while handle.is_running() {
                if interrupted.load(Ordering::Relaxed) {
                    log::info!("interrupted, shutting down");
                    handle.stop();
                    return;
                }
                std::thread::sleep(std::time::Duration::from_millis(20));
            }
        })
    };
    let result = engine.wait();
    let _ = watcher.join();
    let summary: RunSummary = result.map_err(|e: EngineError| Failure::Runtime(e.into()))?;
    log::info!(
        "done: {} frames, {} MIDI events, {} track changes, {} dropped, {} parse errors",
        summary.ticks,
        summary.midi_events,
        summary.track_commands,
        summary.dropped_frames,
        summary.parse_errors
    );
    Ok(())
}

fn record(port: u16, out: &Path, seconds: Option<f64>) -> Result<(), Failure> {
    let interrupted = interrupt_flag()?;
    let mut listener =
        FaceOscListener::bind(("0.0.0.0", port)).with_context(|| format!("binding UDP port {port}"))?;
    let header = SessionHeader::now(&format!("faceosc udp:{port}"));
    let mut writer = SessionWriter::create(out, &header)?;
    log::info!("recording FaceOSC on port {port} to {}", out.display());
    let deadline =
        seconds.map(|s| std::time::Instant::now() + std::time::Duration::from_secs_f64(s.max(0.0)));
    let mut frames = Vec::new();
    loop {
        if interrupted.load(Ordering::Relaxed) || deadline.is_some_and(|d| std::time::Instant::now() >= d) {
            break;
        }
        listener
            .poll(&mut frames)
            .map_err(|e| Failure::Runtime(anyhow::Error::new(e).context("receiving")))?;
        for f in frames.drain(..) {
            writer.append(&f).map_err(|e| Failure::Runtime(e.into()))?;
        }
    }
    let n = writer.written();
    writer.finish().map_err(|e| Failure::Runtime(e.into()))?;
    log::info!("recorded {n} frames");
    Ok(())
}
