//! Finite-state Markov model of the fading channel.
//!
//! A [`ChannelModel`] owns the set of per-user gain vectors, the
//! row-stochastic transition matrix, and the stationary distribution
//! (computed at construction). It supports sampling one transition per
//! timeslot and exact k-step marginals, which the analysis module uses to
//! integrate over channel randomness instead of simulating it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use thiserror::Error;

/// Residual target for the stationary-distribution iteration.
const STATIONARY_TOL: f64 = 1e-12;
/// Iteration cap for the stationary-distribution computation.
const STATIONARY_MAX_ITERS: usize = 1_000_000;
/// Row sums may deviate from one by at most this much.
const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("transition matrix row {row} sums to {sum}, not 1")]
    NonStochasticMatrix { row: usize, sum: f64 },
    #[error("transition matrix has no unique stationary distribution (chain is reducible)")]
    Reducible,
    #[error("expected a square {expected}x{expected} transition matrix, got row of length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state {state} has a non-positive gain magnitude")]
    InvalidGain { state: usize },
    #[error("stationary distribution did not reach residual {tol} in {iters} iterations")]
    StationaryDiverged { tol: f64, iters: usize },
}

/// Finite-state Markov channel: gain vectors, transition matrix, and
/// stationary distribution. Immutable after construction and safe to share
/// across worker threads; each worker brings its own RNG.
#[derive(Debug)]
pub struct ChannelModel {
    states: Vec<[f64; 2]>,
    transition: Vec<f64>, // row-major n x n
    pi: Vec<f64>,
    n: usize,
    // Memoized binary powers of the transition matrix, keyed by exponent.
    powers: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl Clone for ChannelModel {
    fn clone(&self) -> Self {
        Self {
            states: self.states.clone(),
            transition: self.transition.clone(),
            pi: self.pi.clone(),
            n: self.n,
            powers: Mutex::new(HashMap::new()),
        }
    }
}

impl ChannelModel {
    /// Builds the model from gain vectors and a row-major transition matrix,
    /// validating stochasticity and irreducibility, and computes the
    /// stationary distribution by damped power iteration.
    pub fn new_markov(states: Vec<[f64; 2]>, rows: Vec<Vec<f64>>) -> Result<Self, ChannelError> {
        let n = states.len();
        if rows.len() != n {
            return Err(ChannelError::DimensionMismatch {
                expected: n,
                got: rows.len(),
            });
        }
        for (i, s) in states.iter().enumerate() {
            if !(s[0] > 0.0 && s[1] > 0.0) {
                return Err(ChannelError::InvalidGain { state: i });
            }
        }
        let mut transition = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ChannelError::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(ChannelError::NonStochasticMatrix { row: i, sum });
            }
            transition.extend_from_slice(row);
        }
        if !strongly_connected(&transition, n) {
            return Err(ChannelError::Reducible);
        }
        let pi = stationary(&transition, n)?;
        Ok(Self {
            states,
            transition,
            pi,
            n,
            powers: Mutex::new(HashMap::new()),
        })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    /// Gain vector of state `idx`.
    pub fn gains(&self, idx: usize) -> [f64; 2] {
        self.states[idx]
    }

    pub fn states(&self) -> &[[f64; 2]] {
        &self.states
    }

    /// Stationary distribution over states.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// One-step transition probability from `i` to `j`.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.n + j]
    }

    /// Samples the next state from row `current`, consuming exactly one
    /// uniform draw.
    pub fn step<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.transition[current * self.n..(current + 1) * self.n];
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        self.n - 1 // row sums to 1 up to rounding
    }

    /// Samples a state from the stationary distribution (one uniform draw).
    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in self.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        self.n - 1
    }

    /// Exact distribution of the state `k` slots after being in `s0`:
    /// row `s0` of T^k. For `k = 0` this is the indicator at `s0`.
    pub fn marginal_after(&self, s0: usize, k: u64) -> Vec<f64> {
        let m = self.power(k);
        m[s0 * self.n..(s0 + 1) * self.n].to_vec()
    }

    /// T^k via repeated squaring, with binary powers memoized per model so
    /// repeated analysis sweeps do not recompute them.
    pub fn power(&self, k: u64) -> Arc<Vec<f64>> {
        if k == 0 {
            return Arc::new(identity(self.n));
        }
        if let Some(hit) = self.powers.lock().unwrap().get(&k) {
            return Arc::clone(hit);
        }
        let result = if k == 1 {
            Arc::new(self.transition.clone())
        } else {
            let half = self.power(k / 2);
            let mut sq = mat_mul(&half, &half, self.n);
            if k % 2 == 1 {
                sq = mat_mul(&sq, &self.transition, self.n);
            }
            Arc::new(sq)
        };
        self.powers
            .lock()
            .unwrap()
            .entry(k)
            .or_insert_with(|| Arc::clone(&result));
        result
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Both forward and backward reachability from state 0 must cover every
/// state on the positive-entry graph.
fn strongly_connected(t: &[f64], n: usize) -> bool {
    let reach = |transpose: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let p = if transpose {
                    t[j * n + i]
                } else {
                    t[i * n + j]
                };
                if p > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count
    };
    reach(false) == n && reach(true) == n
}

/// Power iteration on the lazy kernel (T + I)/2, which shares T's stationary
/// vector but is aperiodic, so the iteration converges for periodic chains
/// too. The residual is measured against the original T.
fn stationary(t: &[f64], n: usize) -> Result<Vec<f64>, ChannelError> {
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..STATIONARY_MAX_ITERS {
        for x in next.iter_mut() {
            *x = 0.0;
        }
        for i in 0..n {
            let vi = v[i];
            for j in 0..n {
                next[j] += vi * t[i * n + j];
            }
        }
        let residual = v
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // Lazy update: v <- (v + vT)/2, then renormalize against drift.
        let mut sum = 0.0;
        for (vi, ni) in v.iter_mut().zip(next.iter()) {
            *vi = 0.5 * (*vi + ni);
            sum += *vi;
        }
        for vi in v.iter_mut() {
            *vi /= sum;
        }
        if residual <= STATIONARY_TOL {
            return Ok(v);
        }
    }
    Err(ChannelError::StationaryDiverged {
        tol: STATIONARY_TOL,
        iters: STATIONARY_MAX_ITERS,
    })
}
