//! Scheduling policies: the dynamic runtime controller, the fixed
//! frame-length static baseline, and a zero-lag exact oracle.
//!
//! The dynamic controller partitions time into rounds. Each round opens with
//! a *test interval* of `N_c` slots run under a randomly picked candidate
//! frame length, and continues with an *update interval* of `N_3 * N_c`
//! slots run under the adopted frame length. At the end of a test interval
//! the controller compares the test interval's normalized backlog-rate
//! average against the previous update interval's: a candidate that wins by
//! more than `alpha` is adopted and `N_3` is halved; otherwise the incumbent
//! stays and `N_3` is doubled up to `L_1`.
//!
//! Frames follow the one-frame-lag discipline: the schedule used during a
//! frame is the solver output for the backlog/channel snapshot taken at the
//! start of the *previous* frame. At interval boundaries the in-flight
//! schedule computed during the last frame of the old interval serves the
//! first frame of the new one, so no slot is ever left unscheduled.
//!
//! Interval quality is measured as the per-slot backlog-normalized product
//! `X(t)·D(t) / ||X(t)||`, averaged over the interval (slots with an empty
//! system contribute zero). Normalizing per slot rather than by the
//! interval-start backlog matters: update intervals are up to `L_1` times
//! longer than test intervals, so under a drifting backlog a window-start
//! normalizer inflates the incumbent's measurement relative to the
//! candidate's and the controller locks onto bad frame lengths until the
//! backlog grows enormous. Both estimators agree in the large-backlog limit
//! that the adoption analysis relies on.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rates::{RateModel, ScheduleVector};
use crate::rng::{stream_rng, STREAM_CANDIDATE, STREAM_SOLVER};
use crate::solver::{run_suboptimal, solve_exact, AlgorithmVariant};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("policy ticked at slot {t} after slot {last}; slots must advance by one")]
    ClockRegression { t: u64, last: u64 },
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
}

/// Parameters of the dynamic controller.
#[derive(Debug, Clone, PartialEq)]
pub struct DcpConfig {
    /// Test-interval length in slots; every candidate frame length divides it.
    pub n_c: u64,
    /// Adoption threshold on the normalized backlog-rate average.
    pub alpha: f64,
    /// Cap on the update-interval multiplier; a power of two.
    pub l1: u32,
    /// Candidate frame lengths.
    pub n1_set: Vec<u32>,
    /// Quality model of the underlying suboptimal solver.
    pub variant: AlgorithmVariant,
    /// Grid resolution handed to the exact solver.
    pub solver_grid: usize,
}

impl DcpConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        self.validate_relaxed()?;
        if !(self.alpha > 0.0) {
            return Err(PolicyError::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// All structural rules, but any non-NaN adoption threshold is accepted:
    /// +inf (never adopt) and -inf (always adopt) are legitimate settings
    /// for controlled experiments. Config files go through [`validate`](Self::validate).
    pub fn validate_relaxed(&self) -> Result<(), PolicyError> {
        if self.n1_set.is_empty() {
            return Err(PolicyError::InvalidConfig("empty candidate set".into()));
        }
        for &n1 in &self.n1_set {
            if n1 == 0 || self.n_c % n1 as u64 != 0 {
                return Err(PolicyError::InvalidConfig(format!(
                    "candidate frame length {n1} does not divide the test interval {}",
                    self.n_c
                )));
            }
        }
        if self.l1 == 0 || !self.l1.is_power_of_two() {
            return Err(PolicyError::InvalidConfig(format!(
                "l1 must be a positive power of two, got {}",
                self.l1
            )));
        }
        if self.alpha.is_nan() {
            return Err(PolicyError::InvalidConfig("alpha must not be NaN".into()));
        }
        self.variant
            .validate()
            .map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Adoption rule applied at the end of a test interval. Strict inequality:
/// a candidate exactly `alpha` better is not adopted.
pub fn apply_update_rule(
    phi_r: f64,
    phi_prev: f64,
    n1_cur: u32,
    n1_candidate: u32,
    n3_cur: u32,
    alpha: f64,
    l1: u32,
) -> (u32, u32) {
    if phi_r > phi_prev + alpha {
        (n1_candidate, (n3_cur / 2).max(1))
    } else {
        (n1_cur, (n3_cur * 2).min(l1))
    }
}

/// Per-round history of the controller's decisions and measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u32,
    pub t_start: u64,
    pub n1_candidate: u32,
    /// Normalized backlog-rate average of the test interval.
    pub phi_r: f64,
    pub adopted: bool,
    /// Frame length in force during the update interval.
    pub n1: u32,
    pub n3: u32,
    /// Normalized backlog-rate average of the update interval; absent while
    /// the interval is still running.
    pub phi_update: Option<f64>,
}

/// A per-slot scheduling policy driven by the simulation engine.
pub trait Policy {
    /// Returns the schedule to use in slot `t`, given the backlog at the
    /// start of the slot and the current channel state index. Must be called
    /// once per slot with `t` advancing by one.
    fn tick(&mut self, t: u64, x: [f64; 2], s_idx: usize) -> Result<ScheduleVector, PolicyError>;

    /// The frame length currently in force (candidate during test intervals).
    fn n1_in_effect(&self) -> u32;

    /// Round history; empty for policies without rounds.
    fn rounds(&self) -> &[RoundRecord] {
        &[]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Test,
    Update,
}

/// Read-only view of the controller internals, for diagnostics and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcpStateView {
    pub phase: Phase,
    pub round: u32,
    pub round_start: u64,
    pub interval_start: u64,
    pub interval_len: u64,
    pub frame_len: u32,
    pub n1: u32,
    pub n2: u64,
    pub n3: u32,
    pub n1_candidate: u32,
    pub phi_prev: f64,
    pub in_use: ScheduleVector,
    pub pending: ScheduleVector,
    pub snapshot_backlog: [f64; 2],
    pub snapshot_state: usize,
}

pub struct DcpPolicy {
    cfg: DcpConfig,
    rates: RateModel,
    states: Vec<[f64; 2]>,

    phase: Phase,
    round: u32,
    round_start: u64,
    interval_start: u64,
    interval_len: u64,
    frame_len: u32,
    n1: u32,
    n3: u32,
    n1_candidate: u32,
    phi_prev: f64,
    acc: f64,

    in_use: ScheduleVector,
    pending: ScheduleVector,
    snapshot_backlog: [f64; 2],
    snapshot_state: usize,

    last_t: Option<u64>,
    rounds: Vec<RoundRecord>,

    solver_rng: ChaCha8Rng,
    candidate_rng: ChaCha8Rng,
}

impl DcpPolicy {
    pub fn new(
        cfg: DcpConfig,
        rates: RateModel,
        states: Vec<[f64; 2]>,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        cfg.validate_relaxed()?;
        let n1 = *cfg.n1_set.iter().min().unwrap();
        let mid = ScheduleVector::midpoint(&rates);
        Ok(Self {
            rates,
            states,
            phase: Phase::Test,
            round: 0,
            round_start: 0,
            interval_start: 0,
            interval_len: cfg.n_c,
            frame_len: n1,
            n1,
            n3: 1,
            n1_candidate: n1,
            phi_prev: 0.0,
            acc: 0.0,
            in_use: mid,
            pending: mid,
            snapshot_backlog: [0.0, 0.0],
            snapshot_state: 0,
            last_t: None,
            rounds: Vec::new(),
            solver_rng: stream_rng(seed, STREAM_SOLVER),
            candidate_rng: stream_rng(seed, STREAM_CANDIDATE),
            cfg,
        })
    }

    /// Uniform pick over the candidate set; one draw from the candidate
    /// stream, so each value carries probability 1/|set|.
    fn pick_candidate(&mut self) -> u32 {
        let idx = self.candidate_rng.random_range(0..self.cfg.n1_set.len());
        self.cfg.n1_set[idx]
    }

    pub fn state_view(&self) -> DcpStateView {
        DcpStateView {
            phase: self.phase,
            round: self.round,
            round_start: self.round_start,
            interval_start: self.interval_start,
            interval_len: self.interval_len,
            frame_len: self.frame_len,
            n1: self.n1,
            n2: self.cfg.n_c / self.n1 as u64,
            n3: self.n3,
            n1_candidate: self.n1_candidate,
            phi_prev: self.phi_prev,
            in_use: self.in_use,
            pending: self.pending,
            snapshot_backlog: self.snapshot_backlog,
            snapshot_state: self.snapshot_state,
        }
    }

    fn check_clock(&mut self, t: u64) -> Result<(), PolicyError> {
        if let Some(last) = self.last_t {
            if t != last + 1 {
                return Err(PolicyError::ClockRegression { t, last });
            }
        } else if t != 0 {
            return Err(PolicyError::ClockRegression { t, last: 0 });
        }
        self.last_t = Some(t);
        Ok(())
    }
}

impl Policy for DcpPolicy {
    fn tick(&mut self, t: u64, x: [f64; 2], s_idx: usize) -> Result<ScheduleVector, PolicyError> {
        self.check_clock(t)?;

        if t == self.interval_start {
            self.acc = 0.0;
            match self.phase {
                Phase::Test => {
                    self.n1_candidate = self.pick_candidate();
                    self.frame_len = self.n1_candidate;
                    self.interval_len = self.cfg.n_c;
                }
                Phase::Update => {
                    self.frame_len = self.n1;
                    self.interval_len = self.n3 as u64 * self.cfg.n_c;
                }
            }
        }

        if (t - self.interval_start) % self.frame_len as u64 == 0 {
            // Deploy the schedule computed during the previous frame and
            // start computing the next one from this frame's snapshot.
            self.in_use = self.pending;
            self.snapshot_backlog = x;
            self.snapshot_state = s_idx;
            self.pending = run_suboptimal(
                &self.cfg.variant,
                x,
                self.states[s_idx],
                self.frame_len as u64,
                &self.rates,
                self.cfg.solver_grid,
                &mut self.solver_rng,
            );
        }

        let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if norm > 0.0 {
            let d = self.rates.rate_pair(self.states[s_idx], self.in_use);
            self.acc += (x[0] * d[0] + x[1] * d[1]) / norm;
        }

        if t + 1 == self.interval_start + self.interval_len {
            let phi = self.acc / self.interval_len as f64;
            match self.phase {
                Phase::Test => {
                    let adopted = phi > self.phi_prev + self.cfg.alpha;
                    let (n1_next, n3_next) = apply_update_rule(
                        phi,
                        self.phi_prev,
                        self.n1,
                        self.n1_candidate,
                        self.n3,
                        self.cfg.alpha,
                        self.cfg.l1,
                    );
                    self.rounds.push(RoundRecord {
                        round: self.round,
                        t_start: self.round_start,
                        n1_candidate: self.n1_candidate,
                        phi_r: phi,
                        adopted,
                        n1: n1_next,
                        n3: n3_next,
                        phi_update: None,
                    });
                    self.n1 = n1_next;
                    self.n3 = n3_next;
                    self.phase = Phase::Update;
                }
                Phase::Update => {
                    self.phi_prev = phi;
                    if let Some(rec) = self.rounds.last_mut() {
                        rec.phi_update = Some(phi);
                    }
                    self.phase = Phase::Test;
                    self.round += 1;
                    self.round_start = t + 1;
                }
            }
            self.interval_start = t + 1;
        }

        Ok(self.in_use)
    }

    fn n1_in_effect(&self) -> u32 {
        self.frame_len
    }

    fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }
}

/// Fixed frame-length policy: frames `[i*N1, (i+1)*N1)` forever, same
/// one-frame-lag discipline, no measurement or adoption machinery.
pub struct StaticPolicy {
    n1: u32,
    variant: AlgorithmVariant,
    rates: RateModel,
    states: Vec<[f64; 2]>,
    solver_grid: usize,
    in_use: ScheduleVector,
    pending: ScheduleVector,
    last_t: Option<u64>,
    solver_rng: ChaCha8Rng,
}

impl StaticPolicy {
    pub fn new(
        n1: u32,
        variant: AlgorithmVariant,
        rates: RateModel,
        states: Vec<[f64; 2]>,
        solver_grid: usize,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        if n1 == 0 {
            return Err(PolicyError::InvalidConfig(
                "frame length must be positive".into(),
            ));
        }
        variant
            .validate()
            .map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        let mid = ScheduleVector::midpoint(&rates);
        Ok(Self {
            n1,
            variant,
            rates,
            states,
            solver_grid,
            in_use: mid,
            pending: mid,
            last_t: None,
            solver_rng: stream_rng(seed, STREAM_SOLVER),
        })
    }
}

impl Policy for StaticPolicy {
    fn tick(&mut self, t: u64, x: [f64; 2], s_idx: usize) -> Result<ScheduleVector, PolicyError> {
        if let Some(last) = self.last_t {
            if t != last + 1 {
                return Err(PolicyError::ClockRegression { t, last });
            }
        } else if t != 0 {
            return Err(PolicyError::ClockRegression { t, last: 0 });
        }
        self.last_t = Some(t);

        if t % self.n1 as u64 == 0 {
            self.in_use = self.pending;
            self.pending = run_suboptimal(
                &self.variant,
                x,
                self.states[s_idx],
                self.n1 as u64,
                &self.rates,
                self.solver_grid,
                &mut self.solver_rng,
            );
        }
        Ok(self.in_use)
    }

    fn n1_in_effect(&self) -> u32 {
        self.n1
    }
}

/// Benchmark policy: solves the max-weight problem exactly in the current
/// slot with zero lag.
pub struct OraclePolicy {
    rates: RateModel,
    states: Vec<[f64; 2]>,
    solver_grid: usize,
}

impl OraclePolicy {
    pub fn new(rates: RateModel, states: Vec<[f64; 2]>, solver_grid: usize) -> Self {
        Self {
            rates,
            states,
            solver_grid,
        }
    }
}

impl Policy for OraclePolicy {
    fn tick(&mut self, _t: u64, x: [f64; 2], s_idx: usize) -> Result<ScheduleVector, PolicyError> {
        Ok(solve_exact(x, self.states[s_idx], &self.rates, self.solver_grid).schedule)
    }

    fn n1_in_effect(&self) -> u32 {
        0
    }
}

/// What to schedule with: parsed from the experiment config.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Dcp(DcpConfig),
    Static {
        n1: u32,
        variant: AlgorithmVariant,
        solver_grid: usize,
    },
    Oracle {
        solver_grid: usize,
    },
}

impl PolicySpec {
    /// Instantiates the policy with its own RNG streams derived from `seed`.
    /// DCP and static policies share the solver stream id, so a DCP run with
    /// a singleton candidate set and a never-firing threshold reproduces the
    /// static trace exactly.
    pub fn build(
        &self,
        rates: RateModel,
        states: Vec<[f64; 2]>,
        seed: u64,
    ) -> Result<Box<dyn Policy>, PolicyError> {
        match self {
            PolicySpec::Dcp(cfg) => Ok(Box::new(DcpPolicy::new(cfg.clone(), rates, states, seed)?)),
            PolicySpec::Static {
                n1,
                variant,
                solver_grid,
            } => Ok(Box::new(StaticPolicy::new(
                *n1,
                variant.clone(),
                rates,
                states,
                *solver_grid,
                seed,
            )?)),
            PolicySpec::Oracle { solver_grid } => {
                Ok(Box::new(OraclePolicy::new(rates, states, *solver_grid)))
            }
        }
    }
}

/// Slot histogram of the frame lengths a policy had in effect.
pub type N1Histogram = BTreeMap<u32, u64>;
