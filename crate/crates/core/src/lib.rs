#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod cli;
pub mod conflict;
pub mod corpus;
pub mod graph;
pub mod inference;
pub mod linalg;
pub mod special;
pub mod split;
pub mod util;
