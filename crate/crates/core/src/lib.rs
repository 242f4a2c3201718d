//! Collaborative contextual bandits with a nonparametric meta-prior over
//! per-user reward means.

pub mod acquisition;
pub mod environments;
pub mod error;
pub mod harness;
pub mod kernel_basis;
pub mod logdensity;
pub mod smc;

pub use error::{CocoError, Result};
