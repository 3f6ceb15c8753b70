//! Human-aware navigation: a timed-elastic-band planner that co-optimizes
//! robot and human trajectories under proxemic costmap layers, switched by a
//! four-mode state machine, plus a scripted-human simulator, a reactive
//! baseline and a benchmark harness.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops over several parallel arrays read better than zipped iterators
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod config;
pub mod costmap;
pub mod error;
pub mod global_plan;
pub mod hateb;
pub mod predict;
pub mod sim;
pub mod teb;
pub mod world;

pub use config::Config;
pub use error::{Error, Result};
