pub mod dataset;
pub mod error;
pub mod network;
pub mod tensor;
pub mod text;
pub mod vocab;

pub use error::{Error, Result};
