//! Skew Brownian motion on Koch pre-fractal domains surrounded by thin
//! insulating fibers, with an exactly solvable one-dimensional companion model.

pub mod config;
pub mod diffusion;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod lab;
pub mod oracle;
pub mod output;
pub mod stats;
pub mod vec2;

pub use error::{Error, Result};
pub use vec2::Vec2;
