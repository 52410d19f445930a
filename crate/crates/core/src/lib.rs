// Negated float comparisons are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charts;
pub mod cli;
pub mod ingest;
pub mod render;
pub mod store;
