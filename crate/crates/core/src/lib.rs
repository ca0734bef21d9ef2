pub mod color;
pub mod error;
pub mod network;
pub mod styles;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
