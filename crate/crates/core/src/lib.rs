pub mod cli;
pub mod error;
pub mod diagnostics;
pub mod distributions;
pub mod io;
pub mod latent_field;
pub mod likelihood;
pub mod model;
pub mod priors;
pub mod sampler;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
