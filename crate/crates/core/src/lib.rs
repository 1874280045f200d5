pub mod digest;
mod error;
pub mod model;
pub mod ops;
pub mod pools;
pub mod analysis;
pub mod cost;
pub mod trainer;
pub mod orchestrator;
pub mod reports;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/pools.md")]
    mod pools {}
    #[doc = include_str!("../../../book/src/trials.md")]
    mod trials {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/cost.md")]
    mod cost {}
    #[doc = include_str!("../../../book/src/workflows.md")]
    mod workflows {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
