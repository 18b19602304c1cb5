//! Work statistics of driven spin-1/2 ladders and chains started in
//! microcanonical and typical pure states.

pub mod basis;
pub mod eigen;
pub mod error;
pub mod fgr_eth;
pub mod io;
pub mod model;
pub mod propagator;
pub mod relaxation;
pub mod rng;
pub mod sparse;
pub mod spectral;
pub mod state;
pub mod state_prep;
pub mod work;

pub use error::{Error, Result};
