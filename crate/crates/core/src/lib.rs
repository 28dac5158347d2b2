//! Learning stable linear dynamical systems by clipping the spectrum of a
//! least-squares fit, plus Koopman lifting, evaluation and file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clip;
pub mod datagen;
pub mod error;
pub mod io;
pub mod koopman;
pub mod matrix;
pub mod pipeline;
mod schur;
pub mod simeval;
pub mod sysid;

pub use error::{Error, ErrorClass, Result};
