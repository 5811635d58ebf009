//! Full-order polynomial structural models, harmonic balance, arclength
//! continuation, invariant-manifold reduction and post-processing metrics.

pub mod continuation;
pub mod dpim;
pub mod error;
pub mod fom;
pub mod frfarc;
pub mod hb;
pub mod metrics;
pub mod mxb;

pub use error::{Error, Result};
