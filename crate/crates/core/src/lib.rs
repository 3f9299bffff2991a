#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod finite;
pub mod linalg;
pub mod observability;
pub mod sim;
pub mod special;
pub mod spectral;
