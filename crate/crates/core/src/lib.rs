//! Joint sensing and semantic communications trained end to end with
//! multi-task learning, plus the conventional baselines it is compared with.
//!
//! One encoder maps a CIFAR-10 image to a short complex codeword. The same
//! waveform reaches a receiver (reconstruction by Decoder 1, semantic
//! classification by Decoder 3) and, when a target is present, returns as an
//! echo to the transmitter (presence and range classification by Decoder 2).
//! All four networks are trained jointly on a weighted sum of task losses.

pub mod baseline;
pub mod channel;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
