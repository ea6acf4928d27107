pub mod error;
pub mod grid;
pub mod groundstate;
pub mod logconv;
pub mod energy;
pub mod minimizer;
pub mod asymptotics;

pub use error::{Error, Result};
