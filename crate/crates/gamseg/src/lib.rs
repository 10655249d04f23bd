//! Music boundary segmentation toolkit: DSP feature extraction, a CNN+BiLSTM
//! boundary detector trained from scratch, local-maximum peak picking,
//! tolerance-based evaluation, and a classical self-similarity baseline,
//! plus a synthetic-corpus generator that makes the whole pipeline testable
//! at desk scale.

pub mod annotations;
pub mod audio_io;
pub mod baseline;
pub mod eval;
pub mod features;
pub mod neuralnet;
pub mod rng;
pub mod synth;
pub mod training;
