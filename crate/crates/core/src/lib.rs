pub mod bitstream;
pub mod dsp;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod quantizer;
pub mod synth;

pub use error::{Error, Result};
