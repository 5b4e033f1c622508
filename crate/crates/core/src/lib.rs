pub mod blend;
pub mod codec;
pub mod error;
pub mod face;
pub mod formats;
pub mod image;
pub mod mrf;
pub mod pipeline;
pub mod stitch;
pub mod synth;
pub mod synthetic;
pub mod tracker;
pub mod viseme;

pub use error::{Error, Result};
