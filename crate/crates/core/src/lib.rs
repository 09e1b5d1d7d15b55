//! Wavelet-based power-quality indices and disturbance classification.
//!
//! A window is frequency-synchronized ([`freqsync`]), decomposed into six
//! dyadic bands with the discrete Meyer wavelet ([`wmra`]) and reduced to
//! the feature pair (RMS, GDR) ([`indices`]). A one-vs-one SVM ([`svm`])
//! classifies the pair into one of ten disturbance classes. [`siggen`]
//! produces labelled synthetic windows and [`pipeline`] ties the stages
//! together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dmey;
pub mod error;
pub mod extend;
pub mod freqsync;
pub mod indices;
pub mod pipeline;
pub mod siggen;
pub mod svm;
pub mod waveio;
pub mod wmra;

pub use error::{Error, Result};
