//! Double-integrator plant `ṗ = v, v̇ = a`, episode rollouts and trajectory
//! metrics.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::textio::sig9;

/// Settling band on both position and velocity.
pub const SETTLE_EPS: f64 = 0.05;
/// Rollouts stop as diverged once `|p|` exceeds this, m.
pub const DIVERGE_BOUND: f64 = 1e4;
pub const MAX_STEPS: usize = 10_000_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("non-finite input to the plant")]
    NonFinite,
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("controller returned a non-finite action at t = {t}")]
    NonFiniteAction { t: f64 },
    #[error("rollout of {0} steps exceeds the step limit")]
    TooManySteps(f64),
}

/// Plant state: position (m) and velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub p: f64,
    pub v: f64,
}

impl State {
    pub const ORIGIN: State = State { p: 0.0, v: 0.0 };

    pub const fn new(p: f64, v: f64) -> Self {
        State { p, v }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.p.hypot(self.v)
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        State::new(radius * angle.cos(), radius * angle.sin())
    }
}

impl std::ops::Neg for State {
    type Output = State;
    fn neg(self) -> State {
        State::new(-self.p, -self.v)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4})", self.p, self.v)
    }
}

/// Anything that maps a state to a commanded acceleration.
pub trait Controller {
    fn action(&self, s: State) -> f64;
}

impl<F: Fn(State) -> f64> Controller for F {
    fn action(&self, s: State) -> f64 {
        self(s)
    }
}

impl Controller for crate::net::PolicyNet {
    fn action(&self, s: State) -> f64 {
        self.forward(s).unwrap_or(f64::NAN)
    }
}

/// Zero-order-hold update, exact for constant acceleration over `dt`.
pub fn step(s: State, a: f64, dt: f64) -> Result<State, EnvError> {
    if !(s.is_finite() && a.is_finite() && dt.is_finite()) {
        return Err(EnvError::NonFinite);
    }
    if dt <= 0.0 {
        return Err(EnvError::NonPositiveStep(dt));
    }
    Ok(State::new(s.p + s.v * dt + 0.5 * a * dt * dt, s.v + a * dt))
}

/// The plant with its actuator limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegrator {
    pub action_bound: f64,
}

impl Default for DoubleIntegrator {
    fn default() -> Self {
        DoubleIntegrator {
            action_bound: crate::net::DEFAULT_ACTION_BOUND,
        }
    }
}

impl DoubleIntegrator {
    pub fn new(action_bound: f64) -> Self {
        DoubleIntegrator { action_bound }
    }

    pub fn clamp(&self, a: f64) -> f64 {
        a.clamp(-self.action_bound, self.action_bound)
    }

    /// [`step`] with the action clamped to `[-ā, ā]`.
    pub fn step(&self, s: State, a: f64, dt: f64) -> Result<State, EnvError> {
        if !a.is_finite() {
            return Err(EnvError::NonFinite);
        }
        step(s, self.clamp(a), dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    HorizonReached,
    Settled,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: State,
    pub action: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub horizon: f64,
    pub dt: f64,
    pub action_bound: f64,
    pub settle_eps: f64,
    /// How long the state must stay in the settling band before stopping, s.
    pub settle_window: f64,
    pub diverge_bound: f64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            horizon: 40.0,
            dt: 0.02,
            action_bound: crate::net::DEFAULT_ACTION_BOUND,
            settle_eps: SETTLE_EPS,
            settle_window: 1.0,
            diverge_bound: DIVERGE_BOUND,
        }
    }
}

impl RolloutOptions {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Runs `controller` from `s0` until the horizon, settling or divergence.
///
/// Sample `k` holds the state at `t = k·dt` and the (clamped) action applied
/// over the following interval.
pub fn rollout<C: Controller + ?Sized>(controller: &C, s0: State, opts: &RolloutOptions) -> Result<Trajectory, EnvError> {
    if !(opts.dt.is_finite() && opts.horizon.is_finite() && s0.is_finite()) {
        return Err(EnvError::NonFinite);
    }
    if opts.dt <= 0.0 {
        return Err(EnvError::NonPositiveStep(opts.dt));
    }
    let steps_f = (opts.horizon / opts.dt).round();
    if steps_f > MAX_STEPS as f64 {
        return Err(EnvError::TooManySteps(steps_f));
    }
    let steps = steps_f.max(0.0) as usize;
    let plant = DoubleIntegrator::new(opts.action_bound);
    let window_steps = (opts.settle_window / opts.dt).round() as usize;
    let in_band = |s: &State| s.p.abs() < opts.settle_eps && s.v.abs() < opts.settle_eps;

    let mut samples = Vec::with_capacity(steps.min(1 << 16) + 1);
    let mut s = s0;
    let mut band_run = 0usize;
    let mut termination = Termination::HorizonReached;
    for k in 0..=steps {
        let t = k as f64 * opts.dt;
        let raw = controller.action(s);
        if !raw.is_finite() {
            return Err(EnvError::NonFiniteAction { t });
        }
        let a = plant.clamp(raw);
        samples.push(Sample { t, state: s, action: a });
        if s.p.abs() > opts.diverge_bound {
            termination = Termination::Diverged;
            break;
        }
        band_run = if in_band(&s) { band_run + 1 } else { 0 };
        if band_run > window_steps {
            termination = Termination::Settled;
            break;
        }
        if k == steps {
            break;
        }
        s = plant.step(s, a, opts.dt)?;
    }
    Ok(Trajectory {
        dt: opts.dt,
        samples,
        termination,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryMetrics {
    /// Largest excursion past the origin on the side opposite `p₀`, m.
    pub overshoot: f64,
    /// First time after which `|p| < ε` for the rest of the trajectory.
    pub settling_time: Option<f64>,
    /// First time both `|p|` and `|v|` are inside the settling band.
    pub arrival_time: Option<f64>,
    /// First sample decelerating hard: `a·v < 0` and `|a| > ā/2`.
    pub actual_decel_point: Option<State>,
    pub final_error: f64,
}

impl Trajectory {
    pub fn initial(&self) -> State {
        self.samples[0].state
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory is never empty")
    }

    pub fn horizon(&self) -> f64 {
        self.last().t
    }

    pub fn metrics(&self, action_bound: f64) -> TrajectoryMetrics {
        metrics(self, action_bound, SETTLE_EPS)
    }

    /// CSV with header `t,p,v,a`, 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,p,v,a")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{}",
                sig9(s.t),
                sig9(s.state.p),
                sig9(s.state.v),
                sig9(s.action)
            )?;
        }
        Ok(())
    }
}

pub fn metrics(traj: &Trajectory, action_bound: f64, settle_eps: f64) -> TrajectoryMetrics {
    let p0 = traj.initial().p;
    let side = -sign(p0);
    let overshoot = traj
        .samples
        .iter()
        .map(|s| side * s.state.p)
        .fold(0.0f64, f64::max);

    let mut settling_time = None;
    for s in traj.samples.iter().rev() {
        if s.state.p.abs() < settle_eps {
            settling_time = Some(s.t);
        } else {
            break;
        }
    }

    let arrival_time = traj
        .samples
        .iter()
        .find(|s| s.state.p.abs() < settle_eps && s.state.v.abs() < settle_eps)
        .map(|s| s.t);

    let actual_decel_point = traj
        .samples
        .iter()
        .find(|s| s.action * s.state.v < 0.0 && s.action.abs() > 0.5 * action_bound)
        .map(|s| s.state);

    TrajectoryMetrics {
        overshoot,
        settling_time,
        arrival_time,
        actual_decel_point,
        final_error: traj.last().state.p.abs(),
    }
}

/// `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn step_closed_forms() {
        assert_eq!(step(State::new(0.0, 0.0), 5.0, 1.0).unwrap(), State::new(2.5, 5.0));
        let s = step(State::new(-10.0, 0.0), 5.0, 0.02).unwrap();
        assert_abs_diff_eq!(s.p, -9.999, epsilon = 1e-12);
        assert_abs_diff_eq!(s.v, 0.1, epsilon = 1e-12);
        assert_eq!(step(State::new(3.0, -2.0), 0.0, 0.5).unwrap(), State::new(2.0, -2.0));
    }

    #[test]
    fn step_rejects_bad_inputs() {
        assert_eq!(step(State::new(0.0, 0.0), 1.0, -0.1), Err(EnvError::NonPositiveStep(-0.1)));
        assert_eq!(step(State::new(0.0, 0.0), 1.0, 0.0), Err(EnvError::NonPositiveStep(0.0)));
        assert_eq!(step(State::new(f64::NAN, 0.0), 1.0, 0.1), Err(EnvError::NonFinite));
        assert_eq!(step(State::new(0.0, 0.0), f64::INFINITY, 0.1), Err(EnvError::NonFinite));
    }

    #[test]
    fn forward_then_negative_dt_is_rejected() {
        let s = step(State::new(1.0, 2.0), 3.0, 0.1).unwrap();
        assert!(step(s, 3.0, -0.1).is_err());
    }

    #[test]
    fn plant_clamps_the_action() {
        let plant = DoubleIntegrator::default();
        assert_eq!(
            plant.step(State::ORIGIN, 50.0, 1.0).unwrap(),
            step(State::ORIGIN, 5.0, 1.0).unwrap()
        );
    }

    #[test]
    fn zero_controller_at_origin_settles_without_overshoot() {
        let traj = rollout(&|_s: State| 0.0, State::ORIGIN, &RolloutOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::Settled);
        assert!(traj.horizon() <= 1.0 + 1e-9);
        let m = traj.metrics(5.0);
        assert_eq!(m.overshoot, 0.0);
        assert_eq!(m.settling_time, Some(0.0));
    }

    #[test]
    fn constant_push_diverges() {
        let opts = RolloutOptions::default().with_horizon(200.0);
        let traj = rollout(&|_s: State| 5.0, State::new(1.0, 1.0), &opts).unwrap();
        assert_eq!(traj.termination, Termination::Diverged);
    }

    #[test]
    fn non_finite_action_is_an_error() {
        let err = rollout(&|_s: State| f64::NAN, State::new(1.0, 0.0), &RolloutOptions::default()).unwrap_err();
        assert_eq!(err, EnvError::NonFiniteAction { t: 0.0 });
    }

    #[test]
    fn step_limit() {
        let opts = RolloutOptions::default().with_dt(1e-6).with_horizon(100.0);
        assert!(matches!(
            rollout(&|_s: State| 0.0, State::new(1.0, 0.0), &opts),
            Err(EnvError::TooManySteps(_))
        ));
    }

    #[test]
    fn samples_are_uniform_and_bounded() {
        let opts = RolloutOptions::default().with_horizon(3.0);
        let traj = rollout(&|s: State| -40.0 * s.p, State::new(2.0, 0.0), &opts).unwrap();
        for (k, s) in traj.samples.iter().enumerate() {
            assert_abs_diff_eq!(s.t, k as f64 * opts.dt, epsilon = 1e-12);
            assert!(s.action.abs() <= 5.0);
        }
    }

    #[test]
    fn never_crossing_means_no_overshoot() {
        let traj = rollout(&|_s: State| 0.0, State::new(-3.0, 0.0), &RolloutOptions::default().with_horizon(2.0)).unwrap();
        let m = traj.metrics(5.0);
        assert_eq!(m.overshoot, 0.0);
        assert_eq!(m.settling_time, None);
        assert_eq!(m.final_error, 3.0);
        assert_eq!(m.actual_decel_point, None);
    }

    #[test]
    fn csv_header_and_rows() {
        let traj = rollout(&|_s: State| 1.0, State::new(0.0, 0.0), &RolloutOptions::default().with_horizon(0.04)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,p,v,a");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "0.02,0.0002,0.02,1");
    }
}
