//! Reference implementations that tests check the real code against.
//!
//! Everything here is written from the wire-format and scoring definitions
//! directly and shares no code path with `mugeetion-core`; it only borrows
//! the core's plain data types so results can be compared.

pub mod classify_ref;
pub mod midi_ref;
pub mod normalize_ref;
pub mod osc_ref;
pub mod smf_reader;
