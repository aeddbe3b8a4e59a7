//! Selective sampling and interactive imitation learning with noisy experts.
//!
//! The crate is organised bottom-up:
//!
//! * [`link`]: link functions, margins, gaps and the surrogate loss;
//! * [`classes`]: model classes, constrained widths and brute-force complexity measures;
//! * [`oracles`]: online regression oracles and regret budgets Ψ;
//! * [`selsamp`]: SAGE, its epoch variant, the multi-expert driver and the `que` test;
//! * [`bandit`]: selective sampling with bandit feedback (IGW) and the two-query variant;
//! * [`imitation`]: RAVIOLI and friends, the binary-tree MDP, behaviour cloning and PDL checks;
//! * [`rng`]: counter-based random substreams used by every driver.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod classes;
pub mod error;
pub mod imitation;
pub mod link;
pub mod numfmt;
pub mod oracles;
pub mod rng;
pub mod selsamp;

pub use error::{AilError, Result};
