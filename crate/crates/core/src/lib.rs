pub mod error;
pub mod exact;
pub mod forward;
pub mod haar;
pub mod shrink;
pub mod signal;
pub mod solvers;
pub mod tv;

pub use error::{Error, Result};
pub use signal::NdSignal;
pub use tv::TvMode;
pub mod experiments;
