//! Simulation and verification laboratory for a unidirectional elephant
//! random walk with power-law memory.
//!
//! The walk takes {0,1} increments: each step copies a past increment
//! chosen by a Gamma-ratio memory kernel with probability p, and
//! contributes 0 otherwise. The crate provides exact kernel mathematics,
//! deterministic moment recursions, counter-based reproducible simulation,
//! genealogy of the 1-sites, and ensemble-level statistics for the growth
//! exponent, survival dichotomy, and the mixed-normal fluctuation limit.

pub mod analysis;
pub mod error;
pub mod genealogy;
pub mod kernel;
pub mod moments;
pub mod rng;
pub mod special;
pub mod util;
pub mod walker;

pub use analysis::{
    classify_survival, clt_sample, conditional_variance_profile, estimate_exponent,
    ks_distance, normal_cdf, remainder_decay_check, run_ensemble, run_replicas,
    CltSample, CondVarProfile, EnsembleOptions, EnsembleReport, ExponentEstimate,
    ReplicaSummary, Survival, DEFAULT_DELTA,
};
pub use error::{Error, Result};
pub use genealogy::{build_forest, AncestryForest, LinkMode};
pub use kernel::{
    big_c, eta_coefficient, eta_squared, memory_pmf, IndexSet, ModelParams, Regime,
    WeightTable, THETA_TOL,
};
pub use moments::{
    exact_mean_s, exact_mean_xi, exact_second_moment_xi, moment_series,
    paley_zygmund_check, ratio_certificate, MomentSeries, RatioCertificate,
};
pub use rng::{replica_seed, CounterRng};
pub use walker::{
    checkpoint_grid, simulate, simulate_modified, Checkpoint, ModifiedTrajectory,
    SimOptions, StepLink, Trajectory, DEFAULT_CHECKPOINT_RATIO, DEFAULT_STEP_BUDGET,
};
