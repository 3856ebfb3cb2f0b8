//! Simulation and optimization of a full-duplex link assisted by a
//! simultaneously transmitting and reflecting surface.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod channel;
pub mod error;
pub mod fdlink;
pub mod harness;
pub mod neural;
pub mod numerics;
pub mod optim;
pub mod starris;

pub use channel::{gen_channels, ChannelSet, ScenarioSpec};
pub use error::{Error, Result};
pub use fdlink::{evaluate, LinkConfig, Metrics};
pub use harness::{parse_config, run_plan, summarize, ExperimentPlan, Method, RunOptions};
pub use numerics::{CMatrix, Rng, C64};
pub use optim::{alternating_optimize, enumerate_oracle, random_search, AltOptions, Objective, OptResult};
pub use starris::{StarConfig, StarMode};
