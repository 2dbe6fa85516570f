//! Allocation-only building blocks for turning FaceOSC gesture streams into
//! emotion labels and MIDI.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. Everything that
//! touches sockets, files or clocks lives in the `mugeetion` crate, which
//! drives these types from a single pipeline thread.
//!
//! Layout:
//!
//! * [`osc`]: OSC 1.0 message and bundle codec (`i`, `f`, `s`, `b` tags).
//! * [`faceosc`]: the FaceOSC address map, [`faceosc::FacialFrame`] and the
//!   burst assembler that turns message streams into frames.
//! * [`emotion`]: action-unit extraction, range-model fitting, classification
//!   and label smoothing.
//! * [`midi`]: channel voice messages, variable-length quantities and
//!   format-0 Standard MIDI File rendering.
//! * [`mapping`]: mapping profiles, the per-frame mapper and the track
//!   selector.

#![no_std]

extern crate alloc;

pub mod emotion;
pub mod faceosc;
pub mod mapping;
pub mod midi;
pub mod osc;

pub use emotion::{
    classify, extract_aus, fit_model, AuEntry, AuExtractionTable, AuId, AuRange, AuSource, AuVector, Emotion,
    EmotionModel, EmotionState, Polarity, Smoother,
};
pub use faceosc::{FacialFrame, Feature, FeatureRange, FrameAssembler};
pub use mapping::{
    normalize_to_midi, Mapper, MappingProfile, MappingRule, RuleSource, RuleTarget, TrackCommand,
    TrackSelector,
};
pub use midi::{encode_midi, encode_vlq, write_smf, MidiEvent, MidiKind};
pub use osc::{OscArg, OscBundle, OscError, OscMessage, OscPacket, OscTimeTag};
