//! EEG motor-imagery decoding with a simulated robotic gait orthosis.
//!
//! The crate covers the full loop: synthesize (or load) labeled
//! idle/walk EEG, train a prediction model, stream it through an online
//! decoder driving a latency-bearing plant, and score the session with
//! cross-correlation, omission/false-alarm counts, and a Monte Carlo
//! significance control.
//!
//! See the `examples/` directory for one runnable program per stage and
//! the `gaitbci` binary for the file-based pipeline.

pub mod bayes;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod plant;
pub mod signal;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
