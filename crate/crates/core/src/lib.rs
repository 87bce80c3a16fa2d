//! Environment perception toolkit: object extraction from dynamic occupancy
//! grid maps, fusion with multi-object tracks, and confidence-gated
//! validation against physical, module and digital-map constraints.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod config;
pub mod dogma;
pub mod ego;
pub mod extraction;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod map;
pub mod sim;
