//! Sound-triggered procedural animation.
//!
//! A recorded soundtrack is matched against a dictionary of short vocal
//! patterns ("Tick", "Pop", "Chhh", ...) by normalized cross-correlation.
//! Detected events form a [`timeline::Timeline`], which a [`scene`]
//! configuration turns into sampled animation curves and spawn lists.

pub mod audio;
pub mod cli;
pub mod detector;
pub mod scene;
pub mod signal;
pub mod synth;
pub mod test_signals;
pub mod timeline;
