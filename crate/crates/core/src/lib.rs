pub mod classic;
pub mod cli;
pub mod error;
pub mod frame;
pub mod interlace;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use frame::{FieldPair, Frame};
