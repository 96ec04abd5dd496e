//! Monte Carlo coverage studies.
//!
//! A [`ScenarioConfig`] fixes the functional, the divergence, the data law
//! and the ball-size rules; [`run_coverage`] replicates the interval
//! construction on fresh samples and reports how often the true value is
//! covered. Every replication draws from its own seed, so reports do not
//! depend on the number of worker threads.

mod coverage;
mod law;
mod presets;
mod seed;
mod truth;

pub use coverage::{run_coverage, run_coverage_on, CoverageCell, CoverageReport, ScenarioConfig, FLAG_FAILURE_RATE};
pub use law::{sample_law, DataLaw};
pub use presets::{preset, PRESETS};
pub use seed::{stream_seed, Stream};
pub use truth::{default_truth, estimate_truth, Truth, TruthEstimate};
