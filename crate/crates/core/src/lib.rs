//! Long-wave infrared shape from polarization.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! - [`polarization`]: Fresnel relations for a combined thermal emission and
//!   reflection ray, degree/angle of linear polarization, blackbody radiance
//!   and the zenith-to-DoLP curve.
//! - [`imaging`]: the polarimetric sensor model (polarizer and microbolometer
//!   Mueller matrices, offsets, noise) and difference imaging.
//! - [`calibration`]: gain and polarimetric response from blackbody pairs.
//! - [`reconstruction`]: least-squares Stokes recovery against a reference
//!   blackbody.
//! - [`simulator`]: a single-bounce ray-cast renderer producing ground truth
//!   normals and complete capture sessions.
//! - [`estimation`]: model-based normal estimation with boundary-propagated
//!   azimuth disambiguation.
//! - [`evaluation`] and [`io`]: angular-error metrics, PFM/PNG/JSON formats.

pub mod calibration;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod grid;
pub mod imaging;
pub mod io;
pub mod polarization;
pub mod reconstruction;
pub mod simulator;
pub mod stokes;

pub use error::{Error, Result};
pub use grid::{Grid, Image, Mask};
pub use stokes::{MuellerMatrix, StokesMap, StokesVector};
