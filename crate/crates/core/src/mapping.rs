//! Data-driven mapping from frames and emotion states to MIDI and tracks.
//!
//! A [`MappingProfile`] is an ordered list of [`MappingRule`]s plus a
//! per-emotion playlist. [`Mapper`] carries the state needed for
//! change-only output: the sounding note and the last value sent on every
//! controller. [`TrackSelector`] turns label changes into play commands.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::emotion::{AuId, AuVector, Emotion, EmotionState};
use crate::faceosc::{FacialFrame, Feature};
use crate::midi::{Channel, MidiEvent, U7};

/// Velocity used for note-ons when no velocity rule is active.
pub const DEFAULT_VELOCITY: u8 = 80;

/// Slack added before flooring so ratios that should be exactly `k + 0.5`
/// but land one ulp low still round up.
const HALF_UP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("input range is empty or inverted")]
pub struct DegenerateRange;

/// Linear map of `x` from `[in_min, in_max]` onto `[out_min, out_max]`,
/// rounded half-up and clamped. NaN maps to `out_min`.
pub fn scale_to_range(
    x: f64,
    in_min: f64,
    in_max: f64,
    out_min: u8,
    out_max: u8,
) -> Result<u8, DegenerateRange> {
    if !in_min.is_finite() || !in_max.is_finite() || in_min >= in_max {
        return Err(DegenerateRange);
    }
    if x.is_nan() {
        return Ok(out_min);
    }
    let ratio = (x - in_min) / (in_max - in_min);
    let y = ratio * f64::from(out_max - out_min);
    let r = libm::floor(y + 0.5 + HALF_UP_SLACK);
    let v = r.clamp(0.0, f64::from(out_max - out_min)) as u8;
    Ok(out_min + v)
}

/// Maps `x` onto MIDI's 0..=127.
pub fn normalize_to_midi(x: f64, in_min: f64, in_max: f64) -> Result<u8, DegenerateRange> {
    scale_to_range(x, in_min, in_max, 0, 127)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RuleSource {
    Feature(Feature),
    Au(AuId),
    EmotionIntensity,
}

/// Semitone offsets per emotion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transpose {
    #[cfg_attr(feature = "serde", serde(default))]
    pub happy: i8,
    #[cfg_attr(feature = "serde", serde(default))]
    pub neutral: i8,
    #[cfg_attr(feature = "serde", serde(default))]
    pub sad: i8,
}

impl Transpose {
    pub fn get(&self, e: Emotion) -> i8 {
        match e {
            Emotion::Happy => self.happy,
            Emotion::Neutral => self.neutral,
            Emotion::Sad => self.sad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RuleTarget {
    /// Pitch of the profile's single melodic stream.
    NoteStream,
    /// Control change on the given controller.
    Cc(u8),
    /// Note-on velocity for note streams in the same frame.
    Velocity,
    /// Per-emotion pitch offset for note streams in the same frame.
    Transpose(Transpose),
    /// Hands the label to the track selector; emits no MIDI.
    TrackPlaylist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Curve {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ActiveWhen {
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "always"))]
    Always,
    #[cfg_attr(feature = "serde", serde(untagged))]
    Labels(Vec<Emotion>),
}

impl ActiveWhen {
    pub fn matches(&self, label: Emotion) -> bool {
        match self {
            ActiveWhen::Always => true,
            ActiveWhen::Labels(l) => l.contains(&label),
        }
    }
}

#[cfg(feature = "serde")]
fn default_out_max() -> u8 {
    127
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MappingRule {
    pub source: RuleSource,
    /// Defaults to the calibrated range for features and `[0, 1]` for
    /// emotion intensity. Required for AU sources.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub in_min: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub in_max: Option<f64>,
    pub target: RuleTarget,
    #[cfg_attr(feature = "serde", serde(default))]
    pub out_min: u8,
    #[cfg_attr(feature = "serde", serde(default = "default_out_max"))]
    pub out_max: u8,
    #[cfg_attr(feature = "serde", serde(default))]
    pub curve: Curve,
    #[cfg_attr(feature = "serde", serde(default))]
    pub active_when: ActiveWhen,
    #[cfg_attr(feature = "serde", serde(default))]
    pub channel: u8,
}

impl MappingRule {
    pub fn new(source: RuleSource, target: RuleTarget) -> Self {
        MappingRule {
            source,
            in_min: None,
            in_max: None,
            target,
            out_min: 0,
            out_max: 127,
            curve: Curve::Linear,
            active_when: ActiveWhen::Always,
            channel: 0,
        }
    }

    pub fn input_range(&self) -> Option<(f64, f64)> {
        let default = match self.source {
            RuleSource::Feature(f) => {
                let r = f.calibrated_range();
                Some((r.min, r.max))
            }
            RuleSource::EmotionIntensity => Some((0.0, 1.0)),
            RuleSource::Au(_) => None,
        };
        match (self.in_min, self.in_max, default) {
            (Some(a), Some(b), _) => Some((a, b)),
            (a, b, Some((da, db))) => Some((a.unwrap_or(da), b.unwrap_or(db))),
            _ => None,
        }
    }

    fn value(&self, frame: &FacialFrame, aus: &AuVector, state: &EmotionState) -> Option<u8> {
        let x = match self.source {
            RuleSource::Feature(f) => frame.get(f),
            RuleSource::Au(au) => aus.get(au)?,
            RuleSource::EmotionIntensity => state.intensity(),
        };
        let (lo, hi) = self.input_range()?;
        scale_to_range(x, lo, hi, self.out_min, self.out_max).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Track {
    pub id: String,
    pub title: String,
}

impl Track {
    pub fn new(id: &str, title: &str) -> Self {
        Track {
            id: id.into(),
            title: title.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Playlist {
    pub happy: Vec<Track>,
    pub neutral: Vec<Track>,
    pub sad: Vec<Track>,
}

impl Playlist {
    pub fn tracks(&self, e: Emotion) -> &[Track] {
        match e {
            Emotion::Happy => &self.happy,
            Emotion::Neutral => &self.neutral,
            Emotion::Sad => &self.sad,
        }
    }

    /// The Mozart selection: two pieces for happy, one for neutral, two
    /// for sad.
    pub fn mozart() -> Self {
        Playlist {
            happy: alloc::vec![
                Track::new("mozart-k545", "Piano Sonata No 16 in C major"),
                Track::new("mozart-k525", "Eine Kleine Nachtmusik K 525 Allegro"),
            ],
            neutral: alloc::vec![Track::new("mozart-k331", "Piano Sonata No 11 in A major K 331")],
            sad: alloc::vec![
                Track::new("mozart-k183", "Symphony No 25 in G Minor K 183 1st Movement"),
                Track::new("mozart-k626", "Requiem in D minor"),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("rule {rule}: input range must be finite with in_min < in_max")]
    BadInputRange { rule: usize },
    #[error("rule {rule}: AU sources need explicit in_min and in_max")]
    MissingBounds { rule: usize },
    #[error("rule {rule}: need 0 <= out_min <= out_max <= 127")]
    BadOutputRange { rule: usize },
    #[error("rule {rule}: channel must be below 16")]
    BadChannel { rule: usize },
    #[error("rule {rule}: controller must be below 128")]
    BadController { rule: usize },
    #[error("more than one note-stream rule is active for {0}")]
    ConflictingNoteStreams(Emotion),
    #[error("playlist for {0} is empty")]
    EmptyPlaylist(Emotion),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MappingProfile {
    pub name: String,
    pub rules: Vec<MappingRule>,
    pub playlist: Playlist,
}

impl MappingProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        for (rule, r) in self.rules.iter().enumerate() {
            if matches!(r.source, RuleSource::Au(_)) && (r.in_min.is_none() || r.in_max.is_none()) {
                return Err(ProfileError::MissingBounds { rule });
            }
            let (lo, hi) = r.input_range().ok_or(ProfileError::MissingBounds { rule })?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ProfileError::BadInputRange { rule });
            }
            if r.out_min > r.out_max || r.out_max > 127 {
                return Err(ProfileError::BadOutputRange { rule });
            }
            if r.channel >= 16 {
                return Err(ProfileError::BadChannel { rule });
            }
            if matches!(r.target, RuleTarget::Cc(c) if c >= 128) {
                return Err(ProfileError::BadController { rule });
            }
        }
        for e in Emotion::ALL {
            let streams = self
                .rules
                .iter()
                .filter(|r| r.target == RuleTarget::NoteStream && r.active_when.matches(e))
                .count();
            if streams > 1 {
                return Err(ProfileError::ConflictingNoteStreams(e));
            }
            if self.playlist.tracks(e).is_empty() {
                return Err(ProfileError::EmptyPlaylist(e));
            }
        }
        Ok(())
    }
}

impl Default for MappingProfile {
    /// Happy raises pitch an octave and scales velocity with intensity;
    /// sad drives controllers 70 (noise) and 71 (distortion). Mouth height
    /// plays the melody and intensity drives channel volume throughout.
    fn default() -> Self {
        use Emotion::*;
        let mut velocity = MappingRule::new(RuleSource::EmotionIntensity, RuleTarget::Velocity);
        velocity.out_min = 64;
        velocity.active_when = ActiveWhen::Labels(alloc::vec![Happy]);

        let transpose = MappingRule::new(
            RuleSource::EmotionIntensity,
            RuleTarget::Transpose(Transpose {
                happy: 12,
                neutral: 0,
                sad: -12,
            }),
        );

        let mut melody = MappingRule::new(RuleSource::Feature(Feature::MouthHeight), RuleTarget::NoteStream);
        melody.out_min = 48;
        melody.out_max = 72;

        let volume = MappingRule::new(RuleSource::EmotionIntensity, RuleTarget::Cc(7));

        let mut noise = MappingRule::new(RuleSource::EmotionIntensity, RuleTarget::Cc(70));
        noise.active_when = ActiveWhen::Labels(alloc::vec![Sad]);

        let mouth = Feature::MouthWidth.calibrated_range();
        let mut distortion = MappingRule::new(RuleSource::Au(AuId(15)), RuleTarget::Cc(71));
        distortion.in_min = Some(mouth.min);
        distortion.in_max = Some(mouth.max);
        distortion.active_when = ActiveWhen::Labels(alloc::vec![Sad]);

        let tracks = MappingRule::new(RuleSource::EmotionIntensity, RuleTarget::TrackPlaylist);

        MappingProfile {
            name: "default".into(),
            rules: alloc::vec![velocity, transpose, melody, volume, noise, distortion, tracks],
            playlist: Playlist::mozart(),
        }
    }
}

/// Change-only output state carried between frames.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mapper {
    sounding: Option<(Channel, U7)>,
    controllers: BTreeMap<(u8, u8), u8>,
}

impl Mapper {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sounding(&self) -> Option<(Channel, U7)> {
        self.sounding
    }

    /// Evaluates `profile` against one classified frame.
    ///
    /// Velocity and transpose rules set up the frame first (last active rule
    /// wins); note-stream and controller rules then emit in rule order. If no
    /// note-stream rule is active the sounding note is released.
    pub fn map_frame(
        &mut self,
        frame: &FacialFrame,
        aus: &AuVector,
        state: &EmotionState,
        profile: &MappingProfile,
    ) -> Vec<MidiEvent> {
        let t = frame.timestamp_ms;
        let label = state.label;
        let active = || profile.rules.iter().filter(|r| r.active_when.matches(label));

        let mut velocity = DEFAULT_VELOCITY;
        let mut transpose = 0i64;
        for r in active() {
            match r.target {
                RuleTarget::Velocity => {
                    if let Some(v) = r.value(frame, aus, state) {
                        velocity = v.max(1);
                    }
                }
                RuleTarget::Transpose(tr) => transpose = i64::from(tr.get(label)),
                _ => {}
            }
        }

        let mut out = Vec::new();
        let mut note_stream_active = false;
        for r in active() {
            let Some(channel) = Channel::new(r.channel) else {
                continue;
            };
            match r.target {
                RuleTarget::NoteStream => {
                    note_stream_active = true;
                    let Some(v) = r.value(frame, aus, state) else {
                        continue;
                    };
                    let pitch = U7::clamped(i64::from(v) + transpose);
                    if self.sounding == Some((channel, pitch)) {
                        continue;
                    }
                    self.release_into(t, &mut out);
                    let vel = U7::clamped(i64::from(velocity));
                    out.push(MidiEvent::note_on(channel, pitch, vel, t));
                    self.sounding = Some((channel, pitch));
                }
                RuleTarget::Cc(ctrl) => {
                    let (Some(v), Some(ctrl7)) = (r.value(frame, aus, state), U7::new(ctrl)) else {
                        continue;
                    };
                    let key = (channel.get(), ctrl);
                    if self.controllers.get(&key) != Some(&v) {
                        self.controllers.insert(key, v);
                        out.push(MidiEvent::control_change(
                            channel,
                            ctrl7,
                            U7::clamped(v.into()),
                            t,
                        ));
                    }
                }
                _ => {}
            }
        }
        if !note_stream_active {
            self.release_into(t, &mut out);
        }
        out
    }

    /// Note-off for the sounding note, if any.
    pub fn release(&mut self, timestamp_ms: u64) -> Vec<MidiEvent> {
        let mut out = Vec::new();
        self.release_into(timestamp_ms, &mut out);
        out
    }

    fn release_into(&mut self, t: u64, out: &mut Vec<MidiEvent>) {
        if let Some((ch, note)) = self.sounding.take() {
            out.push(MidiEvent::note_off(ch, note, t));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TrackAction {
    Play,
    Continue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrackCommand {
    pub action: TrackAction,
    pub track: Track,
    pub label: Emotion,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("playlist for {0} is empty")]
pub struct EmptyPlaylist(pub Emotion);

/// Emits a play command whenever the smoothed label changes.
///
/// The selector starts from neutral, so a session that opens neutral stays
/// silent until the first change. Each label cycles through its playlist
/// round-robin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackSelector {
    current: Emotion,
    next_index: [usize; 3],
    now_playing: Option<Track>,
}

impl Default for TrackSelector {
    fn default() -> Self {
        TrackSelector {
            current: Emotion::Neutral,
            next_index: [0; 3],
            now_playing: None,
        }
    }
}

impl TrackSelector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_playing(&self) -> Option<&Track> {
        self.now_playing.as_ref()
    }

    pub fn push(
        &mut self,
        state: &EmotionState,
        profile: &MappingProfile,
    ) -> Result<Option<TrackCommand>, EmptyPlaylist> {
        let label = state.label;
        if label == self.current {
            return Ok(None);
        }
        let tracks = profile.playlist.tracks(label);
        if tracks.is_empty() {
            return Err(EmptyPlaylist(label));
        }
        let i = self.next_index[label.index()] % tracks.len();
        self.next_index[label.index()] = (i + 1) % tracks.len();
        self.current = label;
        let track = tracks[i].clone();
        self.now_playing = Some(track.clone());
        Ok(Some(TrackCommand {
            action: TrackAction::Play,
            track,
            label,
            timestamp_ms: state.timestamp_ms,
        }))
    }
}

/// Runs a state stream through a fresh [`TrackSelector`].
pub fn select_tracks(
    states: &[EmotionState],
    profile: &MappingProfile,
) -> Result<Vec<TrackCommand>, EmptyPlaylist> {
    let mut sel = TrackSelector::new();
    let mut out = Vec::new();
    for s in states {
        out.extend(sel.push(s, profile)?);
    }
    Ok(out)
}
