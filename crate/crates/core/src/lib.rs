pub mod error;
pub mod eval;
pub mod inference;
pub mod measurement;
pub mod model_selection;
pub mod scenario;

pub use error::{Error, Result};
