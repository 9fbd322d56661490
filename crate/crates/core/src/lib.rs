//! Simulator and numerical analysis toolkit for dynamically tuned
//! max-weight scheduling in time-varying wireless networks.
//!
//! A max-weight scheduler must solve a hard optimization every slot; real
//! solvers trade answer quality for runtime while the channel keeps moving.
//! This crate models that trade-off end to end for a two-user fading
//! downlink:
//!
//! - [`channel`]: finite-state Markov fading process with exact k-step
//!   marginals,
//! - [`rates`]: superposition-coding rate pairs over a power split,
//! - [`solver`]: exact max-weight solutions and tunable suboptimal
//!   algorithms whose quality improves with allotted runtime,
//! - [`policy`]: the dynamic controller that adapts the solver runtime
//!   online, plus static and oracle baselines,
//! - [`sim`]: the slot-level queueing simulation with seeded reproducibility
//!   and empirical stability verdicts,
//! - [`analysis`]: capacity-region geometry and the scaling factors that
//!   quantify how much of the capacity region each policy stabilizes.

pub mod analysis;
pub mod channel;
pub mod policy;
pub mod rates;
pub mod rng;
pub mod sim;
pub mod solver;

pub use analysis::{
    capacity_boundary_along, capacity_support, chi_of, phi_of, phi_row, phi_tilde, r_infinity,
    theta_dcp_lower, theta_table, AnalysisError, BoundaryPoint, DirectionGrid, DirectionRow,
    PhiEstimate, RinfParams, ThetaTable,
};
pub use channel::{ChannelError, ChannelModel};
pub use policy::{
    apply_update_rule, DcpConfig, DcpPolicy, OraclePolicy, Policy, PolicyError, PolicySpec,
    RoundRecord, StaticPolicy,
};
pub use rates::{RateError, RateModel, ScheduleVector};
pub use sim::{
    queue_step, run_sim, stability_verdict, ArrivalProcess, RunOptions, SimError, SimMetrics,
    Verdict, VerdictError, WindowSample,
};
pub use solver::{
    achieve_target, run_suboptimal, solve_exact, AlgorithmVariant, ExactSolution, HSchedule,
    SolverError,
};
