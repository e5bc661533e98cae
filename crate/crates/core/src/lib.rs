#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod driver;
pub mod error;
pub mod linop;
pub mod multiscale;
pub mod prox;
pub mod signal;
pub mod solver;
pub mod experiment;
pub mod io;
