pub mod archive;
pub mod binio;
pub mod body;
pub mod dataset;
pub mod deform;
pub mod error;
pub mod eval;
mod fsutil;
pub mod geometry;
pub mod mesh;
pub mod pipeline;
pub mod raster;
pub mod registration;
pub mod regress;
pub mod run;
pub mod subspace;
pub mod synth;
pub mod texture;

pub use error::{Error, Result};
