//! Uncertainty-boosted activity anticipation.

pub mod autodiff;
pub mod cli;
pub mod cooccur;
pub mod data;
pub mod eval;
pub mod labelspace;
pub mod losses;
pub mod model;
