//! Goal-oriented optimal sensor placement for Bayesian linear inverse
//! problems governed by elliptic PDEs on the unit square.

pub mod bip;
pub mod criteria;
pub mod design;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod goal;
pub mod linop;
pub mod prior;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
