//! Structural change between point-cloud map sessions, measured with the
//! symmetric temporal change ratio, plus a long-term place-recognition
//! benchmark and a synthetic evolving-city generator for ground truth.

pub mod bench;
pub mod cli;
pub mod cloud;
pub mod dataset;
pub mod geom;
pub mod hull;
pub mod spatial;
pub mod synth;
pub mod oracle;
pub mod tcr;
