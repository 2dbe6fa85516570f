//! The running engine: input producer, classification pipeline, outputs and
//! live control.
//!
//! [`Pipeline`] is the single-threaded core and can be driven directly.
//! [`Engine`] runs one producer thread feeding a bounded queue and one
//! consumer thread that owns the pipeline; control commands are applied by
//! the consumer between frames.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use arc_swap::ArcSwap;
use mugeetion_core::emotion::BadWindow;
use mugeetion_core::mapping::Track;
use mugeetion_core::{
    classify, extract_aus, AuVector, EmotionModel, EmotionState, FacialFrame, Mapper, MappingProfile,
    MidiEvent, Smoother, TrackCommand, TrackSelector,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{EngineConfig, InputSpec};
use crate::files::{load_model, load_profile, to_json_bytes, FileError};
use crate::queue::{FrameQueue, Pop};
use crate::session::{load_session, Pacer, SessionError, Speed};
use crate::sinks::{save_smf, MidiSink, TrackSink};
use crate::synth::{synth_from, SynthError};
use crate::training::demo_model;
use crate::udp::{FaceOscListener, ListenerStats};

/// Live changes accepted while the engine runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlCommand {
    SetSmoothingWindow {
        window: usize,
    },
    SwapProfile {
        profile: MappingProfile,
    },
    SwapModel {
        model: EmotionModel,
    },
    /// Replaces the given bounds of one rule in the active profile.
    SetRuleBounds {
        rule: usize,
        #[serde(default)]
        in_min: Option<f64>,
        #[serde(default)]
        in_max: Option<f64>,
        #[serde(default)]
        out_min: Option<u8>,
        #[serde(default)]
        out_max: Option<u8>,
    },
}

/// Acknowledges an applied command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    /// SHA-256 over the active model, profile and smoothing window.
    pub config_hash: String,
    /// Index of the first frame processed under the new configuration.
    pub applied_at_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("engine is not running")]
    NotRunning,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("engine is not running")]
pub struct NotRunning;

/// Everything one frame produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub tick: u64,
    pub frame: FacialFrame,
    pub aus: Option<AuVector>,
    /// Unsmoothed classification.
    pub raw: Option<EmotionState>,
    pub state: Option<EmotionState>,
    pub midi: Vec<MidiEvent>,
    pub track: Option<TrackCommand>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid model: {0}")]
    Model(#[from] mugeetion_core::emotion::ModelError),
    #[error("invalid profile: {0}")]
    Profile(#[from] mugeetion_core::mapping::ProfileError),
    #[error(transparent)]
    Window(#[from] BadWindow),
}

/// Frame-by-frame classification and sonification.
#[derive(Debug, Clone)]
pub struct Pipeline {
    model: Arc<EmotionModel>,
    profile: Arc<MappingProfile>,
    smoother: Smoother,
    mapper: Mapper,
    selector: TrackSelector,
    ticks: u64,
    last_timestamp: u64,
    config_hash: String,
}

impl Pipeline {
    pub fn new(model: EmotionModel, profile: MappingProfile, window: usize) -> Result<Self, PipelineError> {
        model.validate()?;
        profile.validate()?;
        let smoother = Smoother::new(window)?;
        let mut p = Pipeline {
            model: Arc::new(model),
            profile: Arc::new(profile),
            smoother,
            mapper: Mapper::new(),
            selector: TrackSelector::new(),
            ticks: 0,
            last_timestamp: 0,
            config_hash: String::new(),
        };
        p.rehash();
        Ok(p)
    }

    pub fn model(&self) -> &Arc<EmotionModel> {
        &self.model
    }

    pub fn profile(&self) -> &Arc<MappingProfile> {
        &self.profile
    }

    pub fn window(&self) -> usize {
        self.smoother.window()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn now_playing(&self) -> Option<&Track> {
        self.selector.now_playing()
    }

    fn rehash(&mut self) {
        let bytes = to_json_bytes(&(self.smoother.window(), &*self.model, &*self.profile));
        self.config_hash = hex::encode(Sha256::digest(bytes));
    }

    /// Processes one frame. A face-lost frame releases the sounding note and
    /// leaves the emotion state untouched.
    pub fn tick(&mut self, frame: &FacialFrame) -> TickOutput {
        let tick = self.ticks;
        self.ticks += 1;
        self.last_timestamp = frame.timestamp_ms;
        let mut out = TickOutput {
            tick,
            frame: *frame,
            aus: None,
            raw: None,
            state: None,
            midi: Vec::new(),
            track: None,
        };
        if !frame.face_found {
            out.midi = self.mapper.release(frame.timestamp_ms);
            return out;
        }
        let aus = match extract_aus(frame, &self.model.table) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("frame {tick}: {e}");
                out.midi = self.mapper.release(frame.timestamp_ms);
                return out;
            }
        };
        let raw = match classify(&aus, &self.model) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("frame {tick}: {e}");
                return out;
            }
        };
        let state = self.smoother.push(raw);
        out.midi = self.mapper.map_frame(frame, &aus, &state, &self.profile);
        match self.selector.push(&state, &self.profile) {
            Ok(cmd) => out.track = cmd,
            Err(e) => log::warn!("frame {tick}: {e}"),
        }
        out.aus = Some(aus);
        out.raw = Some(raw);
        out.state = Some(state);
        out
    }

    /// Applies a control command, or leaves everything as it was.
    pub fn apply(&mut self, cmd: ControlCommand) -> Result<Ack, ControlError> {
        let failed = |e: &dyn std::fmt::Display| ControlError::ValidationFailed(e.to_string());
        match cmd {
            ControlCommand::SetSmoothingWindow { window } => {
                self.smoother.set_window(window).map_err(|e| failed(&e))?;
            }
            ControlCommand::SwapProfile { profile } => {
                profile.validate().map_err(|e| failed(&e))?;
                self.profile = Arc::new(profile);
            }
            ControlCommand::SwapModel { model } => {
                model.validate().map_err(|e| failed(&e))?;
                self.model = Arc::new(model);
            }
            ControlCommand::SetRuleBounds {
                rule,
                in_min,
                in_max,
                out_min,
                out_max,
            } => {
                let mut profile = (*self.profile).clone();
                let r = profile
                    .rules
                    .get_mut(rule)
                    .ok_or_else(|| failed(&format_args!("no rule {rule}")))?;
                r.in_min = in_min.or(r.in_min);
                r.in_max = in_max.or(r.in_max);
                r.out_min = out_min.unwrap_or(r.out_min);
                r.out_max = out_max.unwrap_or(r.out_max);
                profile.validate().map_err(|e| failed(&e))?;
                self.profile = Arc::new(profile);
            }
        }
        self.rehash();
        Ok(Ack {
            config_hash: self.config_hash.clone(),
            applied_at_tick: self.ticks,
        })
    }

    /// Note-offs for anything still sounding, stamped with the last frame
    /// time.
    pub fn release(&mut self) -> Vec<MidiEvent> {
        self.mapper.release(self.last_timestamp)
    }
}

/// Live view of the engine, replaced after every frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub running: bool,
    /// Frames processed so far.
    pub ticks: u64,
    /// True before the first frame and while the face is lost.
    pub stale: bool,
    pub frame: Option<FacialFrame>,
    pub aus: Option<AuVector>,
    pub raw: Option<EmotionState>,
    pub state: Option<EmotionState>,
    pub intensity: Option<f64>,
    pub now_playing: Option<Track>,
    pub last_midi: Vec<MidiEvent>,
    pub fps: f64,
    pub midi_events: u64,
    pub track_commands: u64,
    pub dropped_frames: u64,
    pub parse_errors: u64,
    pub smoothing_window: usize,
    pub profile: String,
    pub config_hash: String,
    pub uptime_ms: u64,
}

impl Snapshot {
    fn initial(p: &Pipeline) -> Self {
        Snapshot {
            running: true,
            ticks: 0,
            stale: true,
            frame: None,
            aus: None,
            raw: None,
            state: None,
            intensity: None,
            now_playing: None,
            last_midi: Vec::new(),
            fps: 0.0,
            midi_events: 0,
            track_commands: 0,
            dropped_frames: 0,
            parse_errors: 0,
            smoothing_window: p.window(),
            profile: p.profile().name.clone(),
            config_hash: p.config_hash().into(),
            uptime_ms: 0,
        }
    }
}

/// Totals reported when the engine stops.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub ticks: u64,
    pub midi_events: u64,
    pub track_commands: u64,
    pub dropped_frames: u64,
    pub parse_errors: u64,
    pub config_hash: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("session: {0}")]
    Session(#[from] SessionError),
    #[error("synthetic input: {0}")]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{what}: {source}")]
    Io {
        what: String,
        #[source]
        source: std::io::Error,
    },
    #[error("engine thread panicked")]
    Panicked,
}

fn io_err(what: impl Into<String>) -> impl FnOnce(std::io::Error) -> EngineError {
    let what = what.into();
    move |source| EngineError::Io { what, source }
}

struct Request {
    cmd: ControlCommand,
    reply: mpsc::SyncSender<Result<Ack, ControlError>>,
}

struct Shared {
    running: AtomicBool,
    stop: AtomicBool,
    snapshot: ArcSwap<Snapshot>,
    model: ArcSwap<EmotionModel>,
    profile: ArcSwap<MappingProfile>,
    requests: Mutex<Option<mpsc::Sender<Request>>>,
}

/// Cloneable access to a running engine, used by the control API.
#[derive(Clone)]
pub struct EngineHandle {
    shared: Arc<Shared>,
}

const CONTROL_TIMEOUT: Duration = Duration::from_secs(5);

impl EngineHandle {
    pub fn is_running(&self) -> bool {
        self.shared.running.load(Ordering::Acquire)
    }

    pub fn snapshot(&self) -> Result<Arc<Snapshot>, NotRunning> {
        if !self.is_running() {
            return Err(NotRunning);
        }
        Ok(self.shared.snapshot.load_full())
    }

    /// Latest snapshot even after the engine stopped.
    pub fn last_snapshot(&self) -> Arc<Snapshot> {
        self.shared.snapshot.load_full()
    }

    pub fn model(&self) -> Result<Arc<EmotionModel>, NotRunning> {
        self.snapshot()?;
        Ok(self.shared.model.load_full())
    }

    pub fn profile(&self) -> Result<Arc<MappingProfile>, NotRunning> {
        self.snapshot()?;
        Ok(self.shared.profile.load_full())
    }

    /// Queues a command for the consumer and waits for its result.
    pub fn control(&self, cmd: ControlCommand) -> Result<Ack, ControlError> {
        if !self.is_running() {
            return Err(ControlError::NotRunning);
        }
        let (tx, rx) = mpsc::sync_channel(1);
        {
            let guard = self.shared.requests.lock().unwrap();
            let sender = guard.as_ref().ok_or(ControlError::NotRunning)?;
            sender
                .send(Request { cmd, reply: tx })
                .map_err(|_| ControlError::NotRunning)?;
        }
        rx.recv_timeout(CONTROL_TIMEOUT)
            .map_err(|_| ControlError::NotRunning)?
    }

    /// Asks the engine to stop; returns immediately.
    pub fn stop(&self) {
        self.shared.stop.store(true, Ordering::Release);
    }
}

/// Outputs the engine writes to.
pub struct Outputs {
    pub midi: MidiSink,
    pub track: TrackSink,
    pub smf: Option<PathBuf>,
}

impl Outputs {
    pub fn from_config(cfg: &EngineConfig) -> Result<Self, EngineError> {
        Ok(Outputs {
            midi: MidiSink::open(&cfg.midi_sink).map_err(io_err("opening MIDI sink"))?,
            track: TrackSink::open(&cfg.track_sink).map_err(io_err("opening track sink"))?,
            smf: cfg.smf.clone(),
        })
    }
}

enum Producer {
    Udp(Box<FaceOscListener>),
    Frames(Vec<FacialFrame>, Speed),
}

pub struct Engine {
    handle: EngineHandle,
    queue: Arc<FrameQueue>,
    producer: Option<JoinHandle<()>>,
    consumer: Option<JoinHandle<Result<RunSummary, EngineError>>>,
    api: Option<crate::api::ApiServer>,
    udp_addr: Option<std::net::SocketAddr>,
}

impl Engine {
    /// Loads everything the config names and starts running.
    pub fn start(cfg: &EngineConfig) -> Result<Engine, EngineError> {
        let outputs = Outputs::from_config(cfg)?;
        Engine::start_with(cfg, outputs)
    }

    pub fn start_with(cfg: &EngineConfig, outputs: Outputs) -> Result<Engine, EngineError> {
        let model = match &cfg.model {
            Some(p) => load_model(p)?,
            None => demo_model(),
        };
        let profile = match &cfg.profile {
            Some(p) => load_profile(p)?,
            None => MappingProfile::default(),
        };
        let pipeline = Pipeline::new(model, profile, cfg.smoothing_window)?;

        let (producer, udp_addr) = match &cfg.input {
            InputSpec::Udp { bind, port } => {
                let l = FaceOscListener::bind((bind.as_str(), *port))
                    .map_err(io_err(format!("binding UDP {bind}:{port}")))?;
                let addr = l.local_addr().ok();
                (Producer::Udp(Box::new(l)), addr)
            }
            InputSpec::Session { path, speed } => {
                let (_, frames) = load_session(path)?;
                (Producer::Frames(frames, *speed), None)
            }
            InputSpec::Synth {
                segments,
                seed,
                speed,
            } => {
                let mut frames = Vec::new();
                let mut start = 0u64;
                for (i, s) in segments.iter().enumerate() {
                    let dur = (s.seconds * 1000.0).round() as u64;
                    frames.extend(synth_from(
                        s.emotion,
                        start,
                        dur,
                        seed.wrapping_add(i as u64),
                        pipeline.model(),
                    )?);
                    start += dur;
                }
                (Producer::Frames(frames, *speed), None)
            }
        };

        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            running: AtomicBool::new(true),
            stop: AtomicBool::new(false),
            snapshot: ArcSwap::from_pointee(Snapshot::initial(&pipeline)),
            model: ArcSwap::new(pipeline.model().clone()),
            profile: ArcSwap::new(pipeline.profile().clone()),
            requests: Mutex::new(Some(tx)),
        });
        let handle = EngineHandle { shared };
        let queue = Arc::new(FrameQueue::new(cfg.queue_capacity));

        let api = match cfg.control_api {
            Some(addr) => Some(
                crate::api::serve(handle.clone(), addr)
                    .map_err(io_err(format!("binding control API {addr}")))?,
            ),
            None => None,
        };

        let mut listener_stats = None;
        let producer = {
            let queue = queue.clone();
            let shared = handle.shared.clone();
            match producer {
                Producer::Udp(mut l) => {
                    listener_stats = Some(l.stats());
                    thread::Builder::new().name("udp-input".into()).spawn(move || {
                        if let Err(e) = l.run(&shared.stop, |f| queue.push_lossy(f)) {
                            log::error!("UDP input failed: {e}");
                        }
                        queue.close();
                    })
                }
                Producer::Frames(frames, speed) => {
                    thread::Builder::new().name("replay-input".into()).spawn(move || {
                        let mut pacer = Pacer::new(speed);
                        for f in frames {
                            if shared.stop.load(Ordering::Relaxed) {
                                break;
                            }
                            pacer.wait_for(f.timestamp_ms);
                            if !queue.push_blocking(f) {
                                break;
                            }
                        }
                        queue.close();
                    })
                }
            }
            .map_err(io_err("spawning input thread"))?
        };

        let consumer = {
            let ctx = Consumer {
                pipeline,
                outputs,
                queue: queue.clone(),
                shared: handle.shared.clone(),
                requests: rx,
                listener_stats,
                stats_interval: Duration::from_millis(cfg.stats_interval_ms),
            };
            thread::Builder::new()
                .name("pipeline".into())
                .spawn(move || ctx.run())
                .map_err(io_err("spawning pipeline thread"))?
        };

        Ok(Engine {
            handle,
            queue,
            producer: Some(producer),
            consumer: Some(consumer),
            api,
            udp_addr,
        })
    }

    pub fn handle(&self) -> EngineHandle {
        self.handle.clone()
    }

    pub fn api_addr(&self) -> Option<std::net::SocketAddr> {
        self.api.as_ref().map(|a| a.local_addr())
    }

    /// Bound address of the UDP input, when that is the input.
    pub fn udp_addr(&self) -> Option<std::net::SocketAddr> {
        self.udp_addr
    }

    /// Waits for the input to end (or for a stop request) and for the
    /// pipeline to flush.
    pub fn wait(mut self) -> Result<RunSummary, EngineError> {
        self.join()
    }

    /// Stops without processing frames still queued, then flushes.
    pub fn stop(mut self) -> Result<RunSummary, EngineError> {
        self.handle.stop();
        self.queue.abort();
        self.join()
    }

    fn join(&mut self) -> Result<RunSummary, EngineError> {
        let result = match self.consumer.take() {
            Some(c) => c.join().map_err(|_| EngineError::Panicked)?,
            None => Err(EngineError::Panicked),
        };
        self.handle.stop();
        self.queue.abort();
        if let Some(p) = self.producer.take() {
            let _ = p.join();
        }
        if let Some(api) = self.api.take() {
            api.shutdown();
        }
        result
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        if self.consumer.is_some() {
            self.handle.stop();
            self.queue.abort();
            let _ = self.join();
        }
    }
}

struct Consumer {
    pipeline: Pipeline,
    outputs: Outputs,
    queue: Arc<FrameQueue>,
    shared: Arc<Shared>,
    requests: mpsc::Receiver<Request>,
    listener_stats: Option<Arc<ListenerStats>>,
    stats_interval: Duration,
}

impl Consumer {
    fn run(mut self) -> Result<RunSummary, EngineError> {
        let result = self.main_loop();
        // Reject anything still queued, then refuse new requests.
        self.shared.running.store(false, Ordering::Release);
        self.shared.requests.lock().unwrap().take();
        while let Ok(req) = self.requests.try_recv() {
            let _ = req.reply.send(Err(ControlError::NotRunning));
        }
        let mut snap = (*self.shared.snapshot.load_full()).clone();
        snap.running = false;
        self.shared.snapshot.store(Arc::new(snap));
        result
    }

    fn main_loop(&mut self) -> Result<RunSummary, EngineError> {
        let started = Instant::now();
        let mut midi_total = 0u64;
        let mut track_total = 0u64;
        let mut smf_events = Vec::new();
        let mut window_start = (Instant::now(), 0u64);
        let mut fps = 0.0;

        loop {
            while let Ok(req) = self.requests.try_recv() {
                let result = self.pipeline.apply(req.cmd);
                if let Ok(ack) = &result {
                    log::info!(
                        "control applied at tick {}: {}",
                        ack.applied_at_tick,
                        ack.config_hash
                    );
                    self.shared.model.store(self.pipeline.model().clone());
                    self.shared.profile.store(self.pipeline.profile().clone());
                    let mut snap = (*self.shared.snapshot.load_full()).clone();
                    snap.smoothing_window = self.pipeline.window();
                    snap.profile = self.pipeline.profile().name.clone();
                    snap.config_hash = self.pipeline.config_hash().into();
                    self.shared.snapshot.store(Arc::new(snap));
                }
                let _ = req.reply.send(result);
            }

            let frame = match self.queue.pop_timeout(Duration::from_millis(10)) {
                Pop::Frame(f) => Some(f),
                Pop::Closed => break,
                Pop::Empty => None,
            };
            if self.shared.stop.load(Ordering::Acquire) && frame.is_none() {
                break;
            }

            let elapsed = window_start.0.elapsed();
            if elapsed >= self.stats_interval {
                fps = (self.pipeline.ticks() - window_start.1) as f64 / elapsed.as_secs_f64();
                window_start = (Instant::now(), self.pipeline.ticks());
                log::info!(
                    "{} frames, {fps:.1} fps, {} dropped, {} parse errors",
                    self.pipeline.ticks(),
                    self.queue.dropped(),
                    self.parse_errors()
                );
            }

            let Some(frame) = frame else { continue };
            let out = self.pipeline.tick(&frame);
            self.outputs
                .midi
                .write(out.tick, &out.midi)
                .map_err(io_err("writing MIDI"))?;
            if let Some(cmd) = &out.track {
                log::info!("{} -> {}", cmd.label, cmd.track.title);
                self.outputs
                    .track
                    .write(out.tick, cmd)
                    .map_err(io_err("writing track"))?;
                track_total += 1;
            }
            midi_total += out.midi.len() as u64;
            if self.outputs.smf.is_some() {
                smf_events.extend_from_slice(&out.midi);
            }

            let snap = Snapshot {
                running: true,
                ticks: self.pipeline.ticks(),
                stale: !frame.face_found,
                frame: Some(frame),
                intensity: out.state.as_ref().map(EmotionState::intensity),
                aus: out.aus,
                raw: out.raw,
                state: out.state,
                now_playing: self.pipeline.now_playing().cloned(),
                last_midi: out.midi,
                fps,
                midi_events: midi_total,
                track_commands: track_total,
                dropped_frames: self.queue.dropped(),
                parse_errors: self.parse_errors(),
                smoothing_window: self.pipeline.window(),
                profile: self.pipeline.profile().name.clone(),
                config_hash: self.pipeline.config_hash().into(),
                uptime_ms: started.elapsed().as_millis() as u64,
            };
            self.shared.snapshot.store(Arc::new(snap));
        }

        let tail = self.pipeline.release();
        let tick = self.pipeline.ticks();
        self.outputs
            .midi
            .write(tick, &tail)
            .map_err(io_err("writing MIDI"))?;
        midi_total += tail.len() as u64;
        smf_events.extend_from_slice(&tail);
        self.outputs.midi.flush().map_err(io_err("flushing MIDI"))?;
        self.outputs.track.flush().map_err(io_err("flushing track log"))?;
        if let Some(path) = &self.outputs.smf {
            save_smf(path, &smf_events).map_err(io_err(format!("writing {}", path.display())))?;
        }

        Ok(RunSummary {
            ticks: self.pipeline.ticks(),
            midi_events: midi_total,
            track_commands: track_total,
            dropped_frames: self.queue.dropped(),
            parse_errors: self.parse_errors(),
            config_hash: self.pipeline.config_hash().into(),
        })
    }

    fn parse_errors(&self) -> u64 {
        self.listener_stats
            .as_ref()
            .map_or(0, |s| s.parse_errors.load(Ordering::Relaxed))
    }
}
