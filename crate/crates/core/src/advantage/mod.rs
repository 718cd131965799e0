//! Distinguishers and advantage computations: the chi-square norm test,
//! the one-dimensional gap problem, and the fooling-gap harness.

pub mod c1;
pub mod fooling;
pub mod gap;

pub use c1::{c1_atom_location, c1_default_t, c1_experiment, c1_statistic, c1_statistic_from_norms, C1Config, C1Report, C1Sampling};
pub use fooling::{
    fooling_gap_experiment, mean_shift_control, Direction, Ensemble, FoolingConfig, FoolingReport, MeanShiftControl, PolyGap,
};
pub use gap::{
    best_ldp_advantage, gap_mixture_moment, gap_separation, gap_separation_at, ldp_advantage_mc, threshold_test_errors, AdvantageResult,
    GapComponent, GapProblem, SeparationReport, ThresholdErrors,
};
