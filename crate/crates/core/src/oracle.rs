//! Time-optimal bang-bang control of the double integrator.
//!
//! The switching curve is `2āp = −sign(v)·v²`. Below it the optimal action is
//! `+ā`, above it `−ā`; once on it the state rides it into the origin while
//! decelerating.

use crate::env::{sign, Controller, State, SETTLE_EPS};

/// Tolerance for deciding that a state lies on the switching curve.
pub const ON_CURVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingCurve {
    pub action_bound: f64,
}

impl SwitchingCurve {
    pub fn new(action_bound: f64) -> Self {
        assert!(action_bound > 0.0, "acceleration bound must be positive");
        SwitchingCurve { action_bound }
    }

    /// `2āp + sign(v)v²`: negative below the curve, positive above, zero on it.
    pub fn residual(&self, s: State) -> f64 {
        2.0 * self.action_bound * s.p + sign(s.v) * s.v * s.v
    }
}

/// Open-loop bang-bang law. No deadband; see [`BangBang`] for the guarded
/// controller used in rollouts.
pub fn bang_bang_action(s: State, action_bound: f64) -> f64 {
    if s.p == 0.0 && s.v == 0.0 {
        return 0.0;
    }
    let r = SwitchingCurve::new(action_bound).residual(s);
    if r.abs() < ON_CURVE_TOL {
        -sign(s.v) * action_bound
    } else if r > 0.0 {
        -action_bound
    } else {
        action_bound
    }
}

/// Minimum time to reach the origin from `s0`, s.
pub fn optimal_time(s0: State, action_bound: f64) -> f64 {
    let a = action_bound;
    let r = SwitchingCurve::new(a).residual(s0);
    if s0 == State::ORIGIN {
        0.0
    } else if r.abs() < ON_CURVE_TOL {
        s0.v.abs() / a
    } else if r < 0.0 {
        // accelerate to the v > 0 branch, then brake
        let vs = (0.5 * s0.v * s0.v - a * s0.p).sqrt();
        (2.0 * vs - s0.v) / a
    } else {
        let vs = (0.5 * s0.v * s0.v + a * s0.p).sqrt();
        (2.0 * vs + s0.v) / a
    }
}

/// Where the optimal trajectory from `s0` meets the switching curve.
pub fn ideal_decel_point(s0: State, action_bound: f64) -> State {
    let a = action_bound;
    let r = SwitchingCurve::new(a).residual(s0);
    if s0 == State::ORIGIN || r.abs() < ON_CURVE_TOL {
        s0
    } else if r < 0.0 {
        let p = 0.5 * s0.p - s0.v * s0.v / (4.0 * a);
        State::new(p, (-2.0 * a * p).max(0.0).sqrt())
    } else {
        let p = 0.5 * s0.p + s0.v * s0.v / (4.0 * a);
        State::new(p, -(2.0 * a * p).max(0.0).sqrt())
    }
}

/// Bang-bang controller with a small coasting region around the origin.
///
/// Inside `|p| < guard/2, |v| < guard/4` it commands zero so a discrete-time
/// rollout stops chattering; a full second of coasting from there stays
/// inside the settling band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BangBang {
    pub action_bound: f64,
    pub guard: f64,
}

impl BangBang {
    pub fn new(action_bound: f64) -> Self {
        BangBang {
            action_bound,
            guard: SETTLE_EPS,
        }
    }

    pub fn curve(&self) -> SwitchingCurve {
        SwitchingCurve::new(self.action_bound)
    }
}

impl Controller for BangBang {
    fn action(&self, s: State) -> f64 {
        if s.p.abs() < 0.5 * self.guard && s.v.abs() < 0.25 * self.guard {
            return 0.0;
        }
        bang_bang_action(s, self.action_bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn branches() {
        assert_eq!(bang_bang_action(State::new(-10.0, 0.0), 5.0), 5.0);
        assert_eq!(bang_bang_action(State::new(10.0, 0.0), 5.0), -5.0);
        assert_eq!(bang_bang_action(State::ORIGIN, 5.0), 0.0);
        let on = State::new(-5.0, 50f64.sqrt());
        assert_eq!(bang_bang_action(on, 5.0), -5.0);
        // The four-digit rounding of √50 lands just above the curve.
        assert_eq!(bang_bang_action(State::new(-5.0, 7.0711), 5.0), -5.0);
    }

    #[test]
    fn optimal_times() {
        assert_abs_diff_eq!(optimal_time(State::new(-10.0, 0.0), 5.0), 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(optimal_time(State::new(-40.0, 0.0), 5.0), 2.0 * 8f64.sqrt(), epsilon = 1e-12);
        assert_eq!(optimal_time(State::ORIGIN, 5.0), 0.0);
        // moving away from the target costs braking time plus the return trip
        let t = optimal_time(State::new(0.0, 5.0), 5.0);
        let brake = 1.0;
        let back = optimal_time(State::new(2.5, 0.0), 5.0);
        assert_abs_diff_eq!(t, brake + back, epsilon = 1e-12);
    }

    #[test]
    fn decel_points() {
        let d = ideal_decel_point(State::new(-10.0, 0.0), 5.0);
        assert_abs_diff_eq!(d.p, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.v, 50f64.sqrt(), epsilon = 1e-12);
        let d = ideal_decel_point(State::new(-40.0, 0.0), 5.0);
        assert_abs_diff_eq!(d.p, -20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.v, 200f64.sqrt(), epsilon = 1e-12);
        assert_eq!(ideal_decel_point(State::ORIGIN, 5.0), State::ORIGIN);
        let d = ideal_decel_point(State::new(12.0, 0.0), 5.0);
        assert_abs_diff_eq!(d.p, 6.0, epsilon = 1e-12);
        assert!(d.v < 0.0);
    }

    #[test]
    fn guard_only_near_origin() {
        let c = BangBang::new(5.0);
        assert_eq!(c.action(State::new(0.01, 0.005)), 0.0);
        assert_eq!(c.action(State::new(-0.01, 0.02)), 5.0);
    }
}
