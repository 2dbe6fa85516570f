//! Engine configuration file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use mugeetion_core::emotion::DEFAULT_SMOOTHING_WINDOW;
use mugeetion_core::Emotion;
use serde::{Deserialize, Serialize};

use crate::files::parse_json;
use crate::session::Speed;
use crate::sinks::{MidiSinkSpec, TrackSinkSpec};
use crate::udp::DEFAULT_FACEOSC_PORT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Udp {
        #[serde(default = "default_bind")]
        bind: String,
        #[serde(default = "default_port")]
        port: u16,
    },
    Session {
        path: PathBuf,
        #[serde(default)]
        speed: Speed,
    },
    Synth {
        segments: Vec<SynthSegment>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "max_speed")]
        speed: Speed,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSegment {
    pub emotion: Emotion,
    pub seconds: f64,
}

fn default_bind() -> String {
    "0.0.0.0".into()
}

fn default_port() -> u16 {
    DEFAULT_FACEOSC_PORT
}

fn max_speed() -> Speed {
    Speed::Max
}

fn default_window() -> usize {
    DEFAULT_SMOOTHING_WINDOW
}

fn default_stats_interval() -> u64 {
    1000
}

fn default_queue() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub input: InputSpec,
    /// Fitted model; the built-in demo model when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Mapping profile; the default profile when absent.
    #[serde(default)]
    pub profile: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    #[serde(default)]
    pub midi_sink: MidiSinkSpec,
    #[serde(default)]
    pub track_sink: TrackSinkSpec,
    /// Standard MIDI File written at shutdown.
    #[serde(default)]
    pub smf: Option<PathBuf>,
    #[serde(default)]
    pub control_api: Option<SocketAddr>,
    #[serde(default = "default_stats_interval")]
    pub stats_interval_ms: u64,
    #[serde(default = "default_queue")]
    pub queue_capacity: usize,
}

impl EngineConfig {
    pub fn new(input: InputSpec) -> Self {
        EngineConfig {
            input,
            model: None,
            profile: None,
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            midi_sink: MidiSinkSpec::None,
            track_sink: TrackSinkSpec::None,
            smf: None,
            control_api: None,
            stats_interval_ms: default_stats_interval(),
            queue_capacity: default_queue(),
        }
    }

    /// Checks values serde cannot, resolving relative paths against `base`.
    pub fn validate(&mut self, base: &Path) -> Result<(), ConfigError> {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.model {
            resolve(p);
            must_exist("model", p)?;
        }
        if let Some(p) = &mut self.profile {
            resolve(p);
            must_exist("profile", p)?;
        }
        match &mut self.input {
            InputSpec::Session { path, .. } => {
                resolve(path);
                must_exist("input.session.path", path)?;
            }
            InputSpec::Synth { segments, .. } => {
                if segments.is_empty() {
                    return Err(invalid("input.synth.segments", "need at least one segment"));
                }
                for (i, s) in segments.iter().enumerate() {
                    if !(s.seconds.is_finite() && s.seconds > 0.0) {
                        return Err(invalid(
                            &format!("input.synth.segments[{i}].seconds"),
                            "must be a positive number",
                        ));
                    }
                }
            }
            InputSpec::Udp { .. } => {}
        }
        if let MidiSinkSpec::File(p) = &mut self.midi_sink {
            resolve(p);
        }
        if let TrackSinkSpec::Log(p) = &mut self.track_sink {
            resolve(p);
        }
        if let Some(p) = &mut self.smf {
            resolve(p);
        }
        if self.smoothing_window.is_multiple_of(2) {
            return Err(invalid("smoothing_window", "must be odd and at least 1"));
        }
        if self.stats_interval_ms == 0 {
            return Err(invalid("stats_interval_ms", "must be positive"));
        }
        if self.queue_capacity == 0 {
            return Err(invalid("queue_capacity", "must be positive"));
        }
        Ok(())
    }
}

fn must_exist(field: &str, p: &Path) -> Result<(), ConfigError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(ConfigError::MissingFile {
            field: field.into(),
            path: p.into(),
        })
    }
}

fn invalid(field: &str, message: &str) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config field {field}: {message}")]
    Parse { field: String, message: String },
    #[error("config field {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("config field {field}: file {path} does not exist")]
    MissingFile { field: String, path: PathBuf },
}

/// Parses config JSON; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<EngineConfig, ConfigError> {
    let mut cfg: EngineConfig =
        parse_json(text).map_err(|(field, message)| ConfigError::Parse { field, message })?;
    cfg.validate(base)?;
    Ok(cfg)
}

/// Reads a config file; relative paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<EngineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.into(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}
