pub mod abc;
pub mod cli;
pub mod envelopes;
pub mod error;
pub mod geometry;
pub mod grf;
pub mod io;
pub mod modelchoice;
pub mod params;
pub mod prior;
pub mod regression;
pub mod samplers;
pub mod seeding;
pub mod summaries;

pub use error::{Error, Result};
pub use geometry::{Point, PointPattern, Window};
pub use params::{ModelKind, ModelParams, Param};
pub use prior::PriorSpec;
