//! Transmission-rate model for a two-user superposition-coding downlink.
//!
//! A schedule is a split of the total power budget between the two users.
//! The user with the stronger gain decodes cleanly; the weaker user treats
//! the other signal as noise. Rates are in nats per slot: the model uses the
//! NATURAL logarithm throughout. This is forced by the reference operating
//! points the toolkit reproduces — e.g. the symmetric sum-rate boundary
//! point 2.4181 equals ln(126)/2 exactly, while log2 would give 3.4882.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("power split p1 = {p1} outside [0, {p_t}]")]
    PowerOutOfRange { p1: f64, p_t: f64 },
    #[error("rate model requires n0 > 0 and p_t > 0, got n0 = {n0}, p_t = {p_t}")]
    InvalidParameter { n0: f64, p_t: f64 },
}

/// Noise power and total power budget of the downlink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    n0: f64,
    p_t: f64,
}

/// A power allocation: user 1 gets `p1`, user 2 gets the rest of the budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleVector {
    p1: f64,
}

impl ScheduleVector {
    /// Validated schedule with `0 <= p1 <= P_t`.
    pub fn new(p1: f64, model: &RateModel) -> Result<Self, RateError> {
        if !(0.0..=model.p_t).contains(&p1) {
            return Err(RateError::PowerOutOfRange { p1, p_t: model.p_t });
        }
        Ok(Self { p1 })
    }

    /// The neutral even split, used to initialize policies.
    pub fn midpoint(model: &RateModel) -> Self {
        Self {
            p1: model.p_t / 2.0,
        }
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self, model: &RateModel) -> f64 {
        model.p_t - self.p1
    }

    pub(crate) fn from_raw(p1: f64) -> Self {
        Self { p1 }
    }
}

impl RateModel {
    pub fn new(n0: f64, p_t: f64) -> Result<Self, RateError> {
        if !(n0 > 0.0) || !(p_t > 0.0) {
            return Err(RateError::InvalidParameter { n0, p_t });
        }
        Ok(Self { n0, p_t })
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn p_t(&self) -> f64 {
        self.p_t
    }

    /// Upper bound on either user's rate when no gain magnitude exceeds
    /// `max_gain`.
    pub fn d_max(&self, max_gain: f64) -> f64 {
        (1.0 + self.p_t * max_gain * max_gain / self.n0).ln()
    }

    /// Rate pair (nats/slot) for gains `s` under schedule `sched`.
    ///
    /// If |s1| < |s2|, user 2 decodes cleanly and user 1 sees user 2's power
    /// as interference; if |s1| >= |s2| the roles are swapped (ties give
    /// user 1 the clean channel).
    pub fn rate_pair(&self, s: [f64; 2], sched: ScheduleVector) -> [f64; 2] {
        self.rates_at(s, sched.p1)
    }

    /// As [`rate_pair`](Self::rate_pair), validating the raw power split.
    pub fn rate_pair_at(&self, s: [f64; 2], p1: f64) -> Result<[f64; 2], RateError> {
        if !(0.0..=self.p_t).contains(&p1) {
            return Err(RateError::PowerOutOfRange { p1, p_t: self.p_t });
        }
        Ok(self.rates_at(s, p1))
    }

    #[inline]
    pub(crate) fn rates_at(&self, s: [f64; 2], p1: f64) -> [f64; 2] {
        debug_assert!((0.0..=self.p_t).contains(&p1), "p1 out of range: {p1}");
        let a = s[0] * s[0];
        let b = s[1] * s[1];
        let p2 = self.p_t - p1;
        if s[0] < s[1] {
            let d1 = (1.0 + p1 * a / (p2 * a + self.n0)).ln();
            let d2 = (1.0 + p2 * b / self.n0).ln();
            [d1, d2]
        } else {
            let d1 = (1.0 + p1 * a / self.n0).ln();
            let d2 = (1.0 + p2 * b / (p1 * b + self.n0)).ln();
            [d1, d2]
        }
    }
}
