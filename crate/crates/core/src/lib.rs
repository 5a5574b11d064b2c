//! Simulation and calibration toolkit for a millimeter-wave transmon qubit
//! coupled to a dispersive readout resonator.

pub mod device;
pub mod error;
pub mod fit;
pub mod freqplan;
pub mod lindblad;
pub mod operator;
pub mod protocols;
pub mod pulse;
pub mod purcell;

pub use error::{Error, Result};
