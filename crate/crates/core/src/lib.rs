// Guards like `!(x > 0.0)` deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod evaluate;
pub mod experiments;
pub mod filtering;
pub mod hard_synthesis;
pub mod matops;
pub mod of_synthesis;
pub mod par;
pub mod plant;
pub mod sf_synthesis;
pub mod sim;
pub mod systems;
