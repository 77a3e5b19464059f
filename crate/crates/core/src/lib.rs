//! Core library for voxaug: corpus manifests, signal processing, speaker
//! embeddings, augmentation planning and execution, scoring, significance
//! testing, quality filtering, and report rendering.

pub mod augment;
pub mod corpus;
pub mod dsp;
pub mod embeddings;
pub mod exec;
pub mod pairing;
pub mod quality;
pub mod report;
pub mod scoring;
pub mod significance;
#[cfg(test)]
pub(crate) mod testutil;
pub mod util;
pub mod wav;
