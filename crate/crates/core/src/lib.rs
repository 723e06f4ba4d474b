// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cycles;
pub mod io;
pub mod ipa;
pub mod linalg;
pub mod lp;
pub mod polytope;
pub mod system;
