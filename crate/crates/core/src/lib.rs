pub mod datagen;
pub mod error;
pub mod estimates;
mod fft;
pub mod grid;
pub mod modspace;
pub mod propagator;
pub mod solver;
pub mod variation;

pub use error::{Error, Result};
pub use grid::{Field, Grid, SpectralField};
