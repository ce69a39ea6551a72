#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causal;
pub mod data;
pub mod evaluation;
pub mod learners;
pub mod report;
pub mod synth;
