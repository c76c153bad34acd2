//! Fuzzy c-means, delegate election, and fire-strength combination.

pub mod delegates;
pub mod fcm;
pub mod fire;

pub use delegates::{delegates_from_ids, delegates_from_lines, delegates_to_lines, elect_delegates, Delegate};
pub use fcm::{fcm, FcmConfig, FcmState};
pub use fire::{combine, fire_strengths, CombineMode, FireStrengthVector};
