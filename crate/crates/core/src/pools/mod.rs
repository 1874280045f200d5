//! Experiment pool construction: bucket splits with a random control,
//! frozen-range recipe composition, the data pyramid, exact dedup and
//! compute schedules.

mod compose;
mod dedup;
mod pyramid;
mod schedule;
mod split;

pub use compose::{compose_recipe, sample_random_control, BoundaryBook};
pub use dedup::{dedup_exact, dedup_key};
pub use pyramid::{build_pyramid, Pyramid, PyramidEntry, PyramidSpec, DEFAULT_MAX_PYRAMID_OPS};
pub use schedule::{schedule_compute, ComputeSchedule, ScheduleMode, StreamSegment};
pub use split::{split_buckets, split_tertiles, ShortPool, SplitBoundaries, SplitOutcome, MAX_BUCKETS, MIN_BUCKETS};
