//! Test-only oracles and fixtures, shared with the CLI acceptance suite.
#![allow(dead_code)]

pub mod kernels;
pub mod oracle;
pub mod stops;
