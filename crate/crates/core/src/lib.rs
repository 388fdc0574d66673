pub mod adain;
pub mod asdm;
pub mod backend;
pub mod error;
pub mod fixtures;
pub mod injection;
pub mod io;
pub mod perceptual;
pub mod pipeline;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use pipeline::{MorphConfig, Pipeline};
pub use tensor::{ChannelStats, Tensor};
