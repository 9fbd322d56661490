//! Exact max-weight solver and the tunable suboptimal algorithm family.
//!
//! The exact solver maximizes the backlog-rate product f(p1) = X·D(s, p1)
//! over the power split, by a uniform grid scan followed by golden-section
//! refinement of the best cell's neighborhood. For this rate model f has at
//! most one interior critical point, so the refined result is the global
//! maximum; the grid guards the procedure against rate models where that
//! argument does not apply.
//!
//! Suboptimal algorithms are modeled by their *quality at a given runtime*
//! `n` (in slots): a gap-decay law, a g(n)-factor law, or a randomized
//! success-probability law. The contract constrains the achieved product
//! value; the schedule realizing it is found by bisection along the segment
//! from the algorithm's random initial point to the optimum, which keeps the
//! output deterministic given the draw.

use rand::Rng;
use thiserror::Error;

use crate::rates::{RateModel, ScheduleVector};

/// Default grid resolution for the exact solver.
pub const DEFAULT_GRID: usize = 4096;

const GOLDEN_INV: f64 = 0.618_033_988_749_894_9; // 1/phi
const BISECT_MAX_ITERS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("target {target} outside bracket [{f_init}, {f_opt}]")]
    TargetOutOfBracket {
        target: f64,
        f_init: f64,
        f_opt: f64,
    },
    #[error("invalid algorithm parameters: {0}")]
    InvalidVariant(String),
}

/// Nondecreasing step map from runtime (slots) to a success probability,
/// evaluated as the value of the largest breakpoint not exceeding `n`
/// (0 before the first breakpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct HSchedule(Vec<(u64, f64)>);

impl HSchedule {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self, SolverError> {
        if points.is_empty() {
            return Err(SolverError::InvalidVariant("empty h table".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 < w[0].1 {
                return Err(SolverError::InvalidVariant(
                    "h table must be strictly increasing in n and nondecreasing in probability"
                        .into(),
                ));
            }
        }
        if points.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) {
            return Err(SolverError::InvalidVariant(
                "h values must lie in [0,1]".into(),
            ));
        }
        Ok(Self(points))
    }

    pub fn eval(&self, n: u64) -> f64 {
        let mut h = 0.0;
        for &(n_i, p_i) in &self.0 {
            if n_i <= n {
                h = p_i;
            } else {
                break;
            }
        }
        h
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.0
    }
}

/// Quality-vs-runtime model of the suboptimal algorithm.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmVariant {
    /// After n slots the gap to the optimal product shrinks to gap0 / beta^n.
    GapDecay { beta: f64 },
    /// Product reaches at least g(n) * optimum with g(n) = xi (1 - zeta^n).
    FactorG { xi: f64, zeta: f64 },
    /// PTAS-style factor g(n) = 1 - beta_p ln(N) / ln(n), clamped to [0,1]
    /// and defined as 0 for n <= 1 where the expression diverges.
    FactorGPtas { beta_p: f64, n_users: u32 },
    /// With probability h(n) the optimum is found; otherwise the random
    /// initial schedule is kept.
    RandomizedH { h: HSchedule },
}

impl AlgorithmVariant {
    pub fn validate(&self) -> Result<(), SolverError> {
        match self {
            AlgorithmVariant::GapDecay { beta } => {
                if !(*beta > 1.0) {
                    return Err(SolverError::InvalidVariant(format!(
                        "gap decay requires beta > 1, got {beta}"
                    )));
                }
            }
            AlgorithmVariant::FactorG { xi, zeta } => {
                if !(*xi > 0.0 && *xi <= 1.0) || !(0.0..1.0).contains(zeta) {
                    return Err(SolverError::InvalidVariant(format!(
                        "factor-g requires xi in (0,1] and zeta in [0,1), got xi={xi} zeta={zeta}"
                    )));
                }
            }
            AlgorithmVariant::FactorGPtas { beta_p, n_users } => {
                if !(*beta_p > 0.0) || *n_users < 1 {
                    return Err(SolverError::InvalidVariant(format!(
                        "ptas factor requires beta_p > 0 and n_users >= 1, got beta_p={beta_p} n_users={n_users}"
                    )));
                }
            }
            AlgorithmVariant::RandomizedH { .. } => {}
        }
        Ok(())
    }

    /// The guaranteed fraction g(n) of the optimum for the factor variants.
    pub fn g_of(&self, n: u64) -> Option<f64> {
        match self {
            AlgorithmVariant::FactorG { xi, zeta } => Some(xi * (1.0 - zeta.powf(n as f64))),
            AlgorithmVariant::FactorGPtas { beta_p, n_users } => {
                if n <= 1 {
                    Some(0.0)
                } else {
                    let g = 1.0 - beta_p * (*n_users as f64).ln() / (n as f64).ln();
                    Some(g.clamp(0.0, 1.0))
                }
            }
            _ => None,
        }
    }
}

/// Argmax of the backlog-rate product and its value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    pub schedule: ScheduleVector,
    pub value: f64,
}

/// The max-weight objective f(p1) = X·D(s, p1).
#[inline]
pub fn objective(rates: &RateModel, x: [f64; 2], gains: [f64; 2], p1: f64) -> f64 {
    let d = rates.rates_at(gains, p1);
    x[0] * d[0] + x[1] * d[1]
}

/// Maximizes the backlog-rate product over the power split to within 1e-9
/// of the true maximum. `grid` is the scan resolution (>= 2). A zero backlog
/// makes every schedule optimal; the midpoint split is returned by
/// convention.
pub fn solve_exact(x: [f64; 2], gains: [f64; 2], rates: &RateModel, grid: usize) -> ExactSolution {
    assert!(grid >= 2, "solver grid must have at least two points");
    let p_t = rates.p_t();
    if x[0] == 0.0 && x[1] == 0.0 {
        return ExactSolution {
            schedule: ScheduleVector::midpoint(rates),
            value: 0.0,
        };
    }
    let f = |p1: f64| objective(rates, x, gains, p1);

    let step = p_t / (grid - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f(0.0);
    for i in 1..grid {
        let p = if i == grid - 1 { p_t } else { i as f64 * step };
        let v = f(p);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }

    // Golden-section refinement on the neighborhood of the best cell.
    let mut lo = if best_i == 0 {
        0.0
    } else {
        (best_i - 1) as f64 * step
    };
    let mut hi = if best_i >= grid - 2 {
        p_t
    } else {
        (best_i + 1) as f64 * step
    };
    let mut best_p = if best_i == grid - 1 {
        p_t
    } else {
        best_i as f64 * step
    };

    let mut c = hi - GOLDEN_INV * (hi - lo);
    let mut d = lo + GOLDEN_INV * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..90 {
        if fc > best_v {
            best_v = fc;
            best_p = c;
        }
        if fd > best_v {
            best_v = fd;
            best_p = d;
        }
        if hi - lo < 1e-13 * p_t.max(1.0) {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - GOLDEN_INV * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + GOLDEN_INV * (hi - lo);
            fd = f(d);
        }
    }

    ExactSolution {
        schedule: ScheduleVector::from_raw(best_p),
        value: best_v,
    }
}

/// Finds a schedule on the segment between `p_init` and the optimum whose
/// objective value matches `target` to within `1e-9 * max(1, f_opt)`.
/// The endpoints must bracket the target; the objective is continuous, so a
/// crossing exists and bisection finds it.
pub fn achieve_target(
    x: [f64; 2],
    gains: [f64; 2],
    p_init: f64,
    p_opt: f64,
    target: f64,
    rates: &RateModel,
) -> Result<ScheduleVector, SolverError> {
    let f = |p1: f64| objective(rates, x, gains, p1);
    let f_init = f(p_init);
    let f_opt = f(p_opt);
    let tol = 1e-9 * f_opt.abs().max(1.0);
    if target > f_opt + tol || target < f_init - tol {
        return Err(SolverError::TargetOutOfBracket {
            target,
            f_init,
            f_opt,
        });
    }
    if target >= f_opt {
        return Ok(ScheduleVector::from_raw(p_opt));
    }
    if target <= f_init {
        return Ok(ScheduleVector::from_raw(p_init));
    }

    // Bisect on the segment parameter down to a fixed resolution. The exit
    // criterion is deliberately scale-free: every branch decision commutes
    // with scaling the backlog, which keeps the output schedule equivariant
    // under X -> cX. The resulting value error is bounded by the objective's
    // segment derivative times 2^-40, far inside the stated tolerance.
    let mut lo = 0.0f64; // at p_init
    let mut hi = 1.0f64; // at p_opt
    let at = |lambda: f64| p_init + lambda * (p_opt - p_init);
    let mut p_mid = at(0.5);
    for _ in 0..BISECT_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        p_mid = at(mid);
        if hi - lo < 1e-12 {
            break;
        }
        if f(p_mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ScheduleVector::from_raw(p_mid))
}

/// Deterministic core of the suboptimal algorithm: produces the schedule
/// for runtime `n` given the already-drawn initial point `p_init` (and, for
/// the randomized variant, the already-drawn Bernoulli uniform), against a
/// precomputed exact solution. Analysis sweeps call this directly to share
/// draws across channel states.
pub fn realize_from(
    variant: &AlgorithmVariant,
    x: [f64; 2],
    gains: [f64; 2],
    n: u64,
    p_init: f64,
    bernoulli_u: Option<f64>,
    exact: &ExactSolution,
    rates: &RateModel,
) -> ScheduleVector {
    let p_opt = exact.schedule.p1();
    let f_opt = exact.value;
    let f_init = objective(rates, x, gains, p_init);
    match variant {
        AlgorithmVariant::GapDecay { beta } => {
            if n == 0 {
                // Zero iterations leave the initial gap untouched.
                return ScheduleVector::from_raw(p_init);
            }
            let gap0 = (f_opt - f_init).max(0.0);
            let target = f_opt - gap0 / beta.powf(n as f64);
            achieve_target(x, gains, p_init, p_opt, target, rates)
                .expect("gap-decay target lies in the bracket by construction")
        }
        AlgorithmVariant::FactorG { .. } | AlgorithmVariant::FactorGPtas { .. } => {
            let g = variant.g_of(n).unwrap();
            let target = g * f_opt;
            if f_init >= target {
                // The random start already satisfies the factor guarantee.
                return ScheduleVector::from_raw(p_init);
            }
            achieve_target(x, gains, p_init, p_opt, target, rates)
                .expect("factor target lies in the bracket by construction")
        }
        AlgorithmVariant::RandomizedH { h } => {
            let u = bernoulli_u.expect("randomized variant needs a Bernoulli draw");
            if u < h.eval(n) {
                exact.schedule
            } else {
                ScheduleVector::from_raw(p_init)
            }
        }
    }
}

/// Runs the suboptimal algorithm for `n` slots of runtime on inputs (X, s).
///
/// Consumes exactly one uniform draw for the initial point, plus one more
/// for the randomized variant's success check.
pub fn run_suboptimal<R: Rng + ?Sized>(
    variant: &AlgorithmVariant,
    x: [f64; 2],
    gains: [f64; 2],
    n: u64,
    rates: &RateModel,
    grid: usize,
    rng: &mut R,
) -> ScheduleVector {
    let p_init = rng.random::<f64>() * rates.p_t();
    let bernoulli_u = match variant {
        AlgorithmVariant::RandomizedH { .. } => Some(rng.random::<f64>()),
        _ => None,
    };
    let exact = solve_exact(x, gains, rates, grid);
    realize_from(variant, x, gains, n, p_init, bernoulli_u, &exact, rates)
}
