//! Bi-population, surrogate-assisted multi-objective architecture search
//! (error rate vs. MAdds) over an inverted-bottleneck search space.

pub mod archive;
pub mod complexity;
pub mod config;
pub mod driver;
pub mod evaluation;
pub mod experiments;
pub mod metrics;
pub mod moea;
pub mod sampling;
pub mod seed;
pub mod space;
pub mod surrogate;

pub use archive::{Archive, ArchiveError, ArchiveRecord, Source};
pub use complexity::{compute_madds, madds, ComplexityReport};
pub use config::{ConfigError, EvaluatorSpec, MigrationMode, RunConfig, SpaceChoice};
pub use driver::{migrate, run_from_config, run_moea_bus, DriverError, RunOutcome, TraceRow};
pub use evaluation::{
    evaluate_batch, EvalError, EvaluationResult, Evaluator, SyntheticEvaluator, SyntheticOracleConfig,
    TabularEvaluator,
};
pub use metrics::{distribution_entropy, hypervolume_2d, igd, MetricsError};
pub use moea::{crowding_distance, non_dominated_sort, survivor_selection, FrontAssignment, ObjectiveVector};
pub use sampling::{partition_regions, uniform_split_populations, BaselineMethod, SamplePool};
pub use space::{Genome, SearchSpaceConfig, SpaceError};
pub use surrogate::{kendall_tau, Comparator, LinearComparator, SurrogateKind, SvmHyperParams};
