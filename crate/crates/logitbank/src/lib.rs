//! Calibration and scoring engine for benchmark leaderboards built on a
//! continuous-response two-parameter-logistic model.
//!
//! The pipeline: bounded scores in `[0, 1]` (confidence-weighted rubric
//! aggregates or exact-answer verdicts) are averaged across epochs, mapped to
//! the real line through an edge-corrected logit, and jointly calibrated into
//! per-item discrimination/difficulty plus per-examinee abilities
//! ([`calibrate`]). A frozen [`model::ItemBank`] then scores any examinee on
//! any item slice in closed form with analytic uncertainty ([`score`]), and
//! [`diagnostics`] covers calibration trust (leave-one-model-out), per-epoch
//! reliability, public/private contamination flagging, saturation, and
//! token-cost structure. [`synth`] generates matrices from known ground truth
//! for end-to-end validation; [`io`] holds the wire formats.
//!
//! Missing cells (generation failures) are first-class: a failed attempt is
//! `None`, never `0.0`, and drops out of every estimate instead of biasing it.

pub mod aggregate;
pub mod calibrate;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod score;
pub mod synth;

pub use error::{Error, Result};
