//! Extremal instances, random equilibrium suites, worst-case search and the
//! replication table.

mod generators;
mod replicate;
mod search;

pub use generators::{
    gen_fractional_beats_integral_pair, gen_single_query_gap, gen_single_query_gap_randomtie, gen_uniform_ipoa,
};
pub use replicate::{replicate_all, replication_groups, Direction, ReplicationConfig, ReplicationRow, SuiteSizes};
pub use search::{
    log_uniform, random_instance, run_suite, sample_rng, worst_case_search, EquilibriumSample, InstanceShape,
    SearchResult, SuiteConfig, SuiteSummary, VALUE_RANGE,
};
