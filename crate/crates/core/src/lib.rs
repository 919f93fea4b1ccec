pub mod error;
pub mod data;
pub mod diff;
pub mod forecast;
pub mod lp;
pub mod hub;
pub mod milp;
pub mod experiment;
pub mod valuation;
pub mod gradcheck;
pub mod report;

pub use error::{Error, Result};
