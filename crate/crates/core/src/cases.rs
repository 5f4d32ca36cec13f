//! Bundled test networks.

use crate::case_io::{parse_case, GridCase};

/// MATPOWER text of the IEEE 39-bus New England system.
pub const CASE39: &str = include_str!("../data/case39.m");

/// The IEEE 39-bus case: 39 buses, 46 lines, 10 generators.
pub fn ieee39() -> GridCase {
    parse_case(CASE39).expect("bundled case39 is valid")
}
