pub mod certify;
pub mod concentration;
pub mod error;
pub mod gnd;
pub mod numeric;
pub mod order;
pub mod scoring;

pub use error::{Error, Result};
pub mod image;
pub mod model;
pub mod rrsm;
pub mod interpret;
pub mod smoother;
pub mod attack;
pub mod eval;
pub mod harness;
pub mod selftest;
pub mod cli;
