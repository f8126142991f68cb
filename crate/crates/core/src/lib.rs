//! Coil sensitivity maps with absolute image phase from ESPIRiT calibration
//! on virtual conjugate coils, and the phase-constrained SENSE
//! reconstruction that uses them.

pub mod eig;
pub mod error;
pub mod espirit;
pub mod fft;
pub mod io;
pub mod maps;
pub mod pattern;
pub mod phantom;
pub mod pipeline;
pub mod recon;
pub mod tensor;
pub mod validate;
pub mod vcc;

pub use error::{Error, Result};
pub use num_complex;
pub use maps::SensitivityMaps;
pub use tensor::{Dim, KTensor};
