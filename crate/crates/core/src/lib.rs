//! Compact dense networks trained under problem-specific L2 losses to extract
//! optimal sets: roots of non-linear systems, implicit surface intersections,
//! minimum-volume unmixing simplices and Pareto fronts. Every solver has a
//! network-free brute-force counterpart in [`oracle`].

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximator;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod intersect;
pub mod io;
pub mod matrix;
pub mod net;
pub mod oracle;
pub mod pareto;
pub mod rng;
pub mod run;
pub mod source;
pub mod train;
pub mod unmix;

pub use error::{Error, Result};
pub use matrix::Matrix;
