//! Design and analysis toolkit for a broadband SNAIL parametric amplifier.

pub mod error;
pub mod gain;
pub mod imd;
pub mod netlist;
pub mod readout;
pub mod snail;
pub mod synthesis;

pub use error::{Error, ErrorClass, Result};
pub use num_complex::Complex64;
