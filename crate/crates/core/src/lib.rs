pub mod contracts;
pub mod error;
pub mod geometry;
pub mod gts;
pub mod logic;
pub mod pipeline;
pub mod planner;
pub mod relations;
pub mod signals;
pub mod vehicle;

pub use error::{Error, Result};
