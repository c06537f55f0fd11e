//! Command-line front end for the hedonic modeling toolkit.

pub mod commands;
pub mod compare;
pub mod svg;
