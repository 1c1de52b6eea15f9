//! Vehicle dynamics, fixed-step integration and the hybrid run loop.
//!
//! The turn rate is computed once per step and held over it. Crossings of the
//! aim circle `C_a` are localized by bisection on the sub-step length; the
//! step is split there so the estimator freeze/reset happens at the event.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{self, EstimatorParams, EstimatorState};
use crate::geometry::{
    self, CartesianState, GeometryError, PolarState, TargetPosition, ZERO_RANGE_THRESHOLD,
};
use crate::guidance::{self, ControlDecision, ControllerMode, GuidanceParams, ValidationReport};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_EVENT_TOLERANCE: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no crossing of the aim circle between the two samples")]
    NoCrossing,
    #[error("gain conditions violated\n{0}")]
    GainConditionViolated(Box<ValidationReport>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

// ---------------------------------------------------------------------------
// Right-hand sides

/// `(V cos psi, V sin psi, omega)`.
pub fn cartesian_rhs(state: &CartesianState, omega: f64, speed: f64) -> [f64; 3] {
    [speed * state.psi.cos(), speed * state.psi.sin(), omega]
}

/// `(-V cos theta, omega + V sin theta / r)`.
pub fn polar_rhs(state: &PolarState, omega: f64, speed: f64) -> Result<[f64; 2], GeometryError> {
    if state.r < ZERO_RANGE_THRESHOLD {
        return Err(GeometryError::ZeroRange(state.r));
    }
    Ok(polar_rhs_unchecked(state.r, state.theta, omega, speed))
}

#[inline]
fn polar_rhs_unchecked(r: f64, theta: f64, omega: f64, speed: f64) -> [f64; 2] {
    [-speed * theta.cos(), omega + speed * theta.sin() / r]
}

// ---------------------------------------------------------------------------
// Integration

pub trait Vector: Copy {
    /// `self + a * d`
    fn axpy(&self, a: f64, d: &Self) -> Self;
}

impl<const N: usize> Vector for [f64; N] {
    fn axpy(&self, a: f64, d: &Self) -> Self {
        std::array::from_fn(|i| self[i] + a * d[i])
    }
}

/// One classical fourth-order Runge-Kutta step of an autonomous system.
pub fn rk4_step<S: Vector>(y: &S, h: f64, f: impl Fn(&S) -> S) -> S {
    let k1 = f(y);
    let k2 = f(&y.axpy(0.5 * h, &k1));
    let k3 = f(&y.axpy(0.5 * h, &k2));
    let k4 = f(&y.axpy(h, &k3));
    y.axpy(h / 6.0, &k1)
        .axpy(h / 3.0, &k2)
        .axpy(h / 3.0, &k3)
        .axpy(h / 6.0, &k4)
}

/// Plant state together with the two estimator states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint<S> {
    pub plant: S,
    pub est: [f64; 2],
}

impl<S: Vector> Vector for Joint<S> {
    fn axpy(&self, a: f64, d: &Self) -> Self {
        Joint {
            plant: self.plant.axpy(a, &d.plant),
            est: self.est.axpy(a, &d.est),
        }
    }
}

/// A formulation of the vehicle kinematics the hybrid loop can drive.
pub trait Plant {
    type State: Vector + std::fmt::Debug;
    fn range(&self, y: &Self::State) -> f64;
    fn range_rate(&self, y: &Self::State) -> Result<f64, GeometryError>;
    fn rhs(&self, y: &Self::State, omega: f64) -> Self::State;
}

#[derive(Debug, Clone, Copy)]
pub struct CartesianPlant {
    pub target: TargetPosition,
    pub speed: f64,
}

impl Plant for CartesianPlant {
    type State = [f64; 3];

    fn range(&self, y: &[f64; 3]) -> f64 {
        (y[0] - self.target.x).hypot(y[1] - self.target.y)
    }

    fn range_rate(&self, y: &[f64; 3]) -> Result<f64, GeometryError> {
        geometry::range_rate(&to_cartesian(y), &self.target, self.speed)
    }

    fn rhs(&self, y: &[f64; 3], omega: f64) -> [f64; 3] {
        cartesian_rhs(&to_cartesian(y), omega, self.speed)
    }
}

/// Integrates `(r, theta)` directly; theta is left unwrapped.
#[derive(Debug, Clone, Copy)]
pub struct PolarPlant {
    pub speed: f64,
}

impl Plant for PolarPlant {
    type State = [f64; 2];

    fn range(&self, y: &[f64; 2]) -> f64 {
        y[0]
    }

    fn range_rate(&self, y: &[f64; 2]) -> Result<f64, GeometryError> {
        if y[0] < ZERO_RANGE_THRESHOLD {
            return Err(GeometryError::ZeroRange(y[0]));
        }
        Ok(-self.speed * y[1].cos())
    }

    fn rhs(&self, y: &[f64; 2], omega: f64) -> [f64; 2] {
        polar_rhs_unchecked(y[0], y[1], omega, self.speed)
    }
}

fn to_cartesian(y: &[f64; 3]) -> CartesianState {
    CartesianState::new(y[0], y[1], y[2])
}

fn from_cartesian(s: &CartesianState) -> [f64; 3] {
    [s.x, s.y, s.psi]
}

/// Advances plant and estimator over `h` with the turn rate held at `omega`.
/// A frozen (or absent) estimator is carried unchanged.
pub fn flow<P: Plant>(
    plant: &P,
    y: &Joint<P::State>,
    omega: f64,
    estimator: Option<&EstimatorParams>,
    frozen: bool,
    h: f64,
) -> Joint<P::State> {
    rk4_step(y, h, |s| Joint {
        plant: plant.rhs(&s.plant, omega),
        est: match estimator {
            Some(params) if !frozen => {
                estimator::injection(s.est[0], s.est[1], plant.range(&s.plant), params)
            }
            _ => [0.0, 0.0],
        },
    })
}

/// Single zero-order-hold step of the Cartesian model, with optional estimator.
pub fn step(
    state: &CartesianState,
    est: Option<(&EstimatorState, &EstimatorParams)>,
    omega: f64,
    speed: f64,
    target: &TargetPosition,
    h: f64,
) -> (CartesianState, Option<EstimatorState>) {
    let plant = CartesianPlant {
        target: *target,
        speed,
    };
    let y = Joint {
        plant: from_cartesian(state),
        est: est.map_or([0.0, 0.0], |(e, _)| [e.xhat1, e.xhat2]),
    };
    let frozen = est.is_some_and(|(e, _)| e.frozen);
    let next = flow(&plant, &y, omega, est.map(|(_, p)| p), frozen, h);
    let next_est = est.map(|(e, _)| EstimatorState {
        xhat1: next.est[0],
        xhat2: next.est[1],
        frozen: e.frozen,
    });
    (to_cartesian(&next.plant), next_est)
}

// ---------------------------------------------------------------------------
// Events

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingKind {
    /// Range decreasing through `r_a`.
    Entry,
    /// Range increasing through `r_a`.
    Exit,
}

impl CrossingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CrossingKind::Entry => "entry",
            CrossingKind::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub kind: CrossingKind,
    pub time: f64,
    pub state_at_event: CartesianState,
    pub r: f64,
    /// `(xhat1, xhat2)` just after the event: held values at an entry,
    /// reset values at an exit. `None` without an estimator.
    pub estimate: Option<[f64; 2]>,
}

/// Bisects `tau` in `(0, span]` for the point where the range crosses `r_a`.
/// `at(tau)` returns the range and state after `tau`. The returned point is
/// always on the post-crossing side, so the caller's inside/outside flag and
/// the sign of `r - r_a` agree after the event.
fn bisect_crossing<S: Copy>(
    at: impl Fn(f64) -> (f64, S),
    span: f64,
    was_inside: bool,
    r_a: f64,
    tol: f64,
) -> (f64, f64, S) {
    let pre_side = |r: f64| (r < r_a) == was_inside;
    let (mut lo, mut hi) = (0.0, span);
    let (mut r_hi, mut s_hi) = at(hi);
    for _ in 0..MAX_BISECTIONS {
        if (r_hi - r_a).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (r_mid, s_mid) = at(mid);
        if pre_side(r_mid) {
            lo = mid;
        } else {
            hi = mid;
            r_hi = r_mid;
            s_hi = s_mid;
        }
    }
    (hi, r_hi, s_hi)
}

/// Localizes a crossing of the circle `r = r_a` between two samples, moving
/// linearly between them. `r = r_a` counts as outside, so touching the circle
/// without changing side is not a crossing.
pub fn locate_crossing(
    prev: (f64, CartesianState),
    next: (f64, CartesianState),
    target: &TargetPosition,
    r_a: f64,
    tol: f64,
) -> Result<CrossingEvent, DynamicsError> {
    let r0 = geometry::range(&prev.1, target);
    let r1 = geometry::range(&next.1, target);
    let inside0 = r0 < r_a;
    if inside0 == (r1 < r_a) {
        return Err(DynamicsError::NoCrossing);
    }
    let span = next.0 - prev.0;
    let lerp = |tau: f64| {
        let w = tau / span;
        let s = CartesianState::new(
            prev.1.x + w * (next.1.x - prev.1.x),
            prev.1.y + w * (next.1.y - prev.1.y),
            prev.1.psi + w * (next.1.psi - prev.1.psi),
        );
        (geometry::range(&s, target), s)
    };
    let (tau, r, state) = bisect_crossing(lerp, span, inside0, r_a, tol);
    Ok(CrossingEvent {
        kind: if inside0 {
            CrossingKind::Exit
        } else {
            CrossingKind::Entry
        },
        time: prev.0 + tau,
        state_at_event: state,
        r,
        estimate: None,
    })
}

// ---------------------------------------------------------------------------
// Configuration and records

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub target: TargetPosition,
    pub initial_state: CartesianState,
    pub guidance: GuidanceParams,
    pub estimator: Option<EstimatorParams>,
    /// Initial `(xhat1, xhat2)`; defaults to `(r(0), 0)`.
    pub estimator_initial: Option<[f64; 2]>,
    pub step_size: f64,
    pub duration: f64,
    pub event_tolerance: f64,
    pub controller_mode: ControllerMode,
}

impl SimConfig {
    /// Full-information configuration with default step and tolerance.
    pub fn full_information(
        target: TargetPosition,
        initial_state: CartesianState,
        guidance: GuidanceParams,
        duration: f64,
    ) -> Self {
        SimConfig {
            target,
            initial_state,
            guidance,
            estimator: None,
            estimator_initial: None,
            step_size: DEFAULT_STEP,
            duration,
            event_tolerance: DEFAULT_EVENT_TOLERANCE,
            controller_mode: ControllerMode::FullInformation,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("step_size", self.step_size),
            ("duration", self.duration),
            ("event_tolerance", self.event_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be positive and finite (got {v})"));
            }
        }
        let s = &self.initial_state;
        if ![s.x, s.y, s.psi, self.target.x, self.target.y]
            .iter()
            .all(|v| v.is_finite())
        {
            out.push("initial state and target must be finite".into());
        }
        if self.controller_mode == ControllerMode::OutputFeedback && self.estimator.is_none() {
            out.push("output_feedback mode requires estimator gains".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DynamicsError::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn gain_report(&self) -> ValidationReport {
        guidance::validate_gains(
            self.guidance.r_d,
            self.guidance.k,
            self.guidance.speed,
            self.estimator.as_ref(),
            self.controller_mode,
        )
    }

    pub fn num_steps(&self) -> usize {
        (self.duration / self.step_size).round().max(1.0) as usize
    }
}

/// One sample per integration step. `omega` is the turn rate applied from
/// this sample to the next. Estimator columns are NaN when no estimator runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub state: CartesianState,
    pub r: f64,
    pub theta: f64,
    pub r_dot: f64,
    pub omega: f64,
    pub xhat1: f64,
    pub xhat2: f64,
    pub inside_ca: bool,
}

impl TrajectoryRecord {
    pub fn frozen(&self) -> bool {
        self.inside_ca
    }

    pub fn has_estimate(&self) -> bool {
        !self.xhat1.is_nan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarRecord {
    pub t: f64,
    pub r: f64,
    pub theta: f64,
    pub omega: f64,
    pub inside_ca: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TrajectoryRecord>,
    pub events: Vec<CrossingEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarRunOutput {
    pub records: Vec<PolarRecord>,
    pub events: Vec<(CrossingKind, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainPolicy {
    /// Abort when any gain inequality fails.
    Strict,
    /// Run anyway unless the controller itself is undefined.
    Permissive,
}

// ---------------------------------------------------------------------------
// Hybrid executive

/// Sequential hybrid simulation over one plant formulation.
pub struct Simulation<P: Plant> {
    plant: P,
    guidance: GuidanceParams,
    estimator: Option<EstimatorParams>,
    mode: ControllerMode,
    h: f64,
    tol: f64,
    step_index: usize,
    t: f64,
    y: Joint<P::State>,
    inside: bool,
}

pub struct RawEvent<S> {
    pub kind: CrossingKind,
    pub t: f64,
    pub y: S,
    pub r: f64,
    pub est: [f64; 2],
}

impl<P: Plant> Simulation<P> {
    fn with_plant(config: &SimConfig, plant: P, y0: P::State) -> Result<Self, DynamicsError> {
        config.validate()?;
        let r0 = plant.range(&y0);
        if r0 < ZERO_RANGE_THRESHOLD {
            return Err(GeometryError::ZeroRange(r0).into());
        }
        let est0 = if config.estimator.is_some() {
            config.estimator_initial.unwrap_or([r0, 0.0])
        } else {
            [f64::NAN, f64::NAN]
        };
        Ok(Simulation {
            plant,
            guidance: config.guidance,
            estimator: config.estimator,
            mode: config.controller_mode,
            h: config.step_size,
            tol: config.event_tolerance,
            step_index: 0,
            t: 0.0,
            y: Joint {
                plant: y0,
                est: est0,
            },
            inside: false,
        })
    }

    /// A start inside `C_a` counts as an entry at t = 0.
    fn initial_events(&mut self) -> Vec<RawEvent<P::State>> {
        let r = self.plant.range(&self.y.plant);
        if r < self.guidance.r_a {
            self.inside = true;
            vec![RawEvent {
                kind: CrossingKind::Entry,
                t: 0.0,
                y: self.y.plant,
                r,
                est: self.y.est,
            }]
        } else {
            Vec::new()
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn inside(&self) -> bool {
        self.inside
    }

    pub fn range(&self) -> f64 {
        self.plant.range(&self.y.plant)
    }

    pub fn estimator_state(&self) -> Option<EstimatorState> {
        self.estimator.map(|_| EstimatorState {
            xhat1: self.y.est[0],
            xhat2: self.y.est[1],
            frozen: self.inside,
        })
    }

    fn decision_at(&self, y: &Joint<P::State>, inside: bool) -> Result<ControlDecision, DynamicsError> {
        let r = self.plant.range(&y.plant);
        let rate = match self.mode {
            ControllerMode::FullInformation => self.plant.range_rate(&y.plant)?,
            ControllerMode::OutputFeedback => y.est[1],
        };
        Ok(guidance::decide(r, rate, &self.guidance, inside))
    }

    pub fn decision(&self) -> Result<ControlDecision, DynamicsError> {
        self.decision_at(&self.y, self.inside)
    }

    fn apply_event(&mut self, kind: CrossingKind) {
        self.inside = kind == CrossingKind::Entry;
        if let (CrossingKind::Exit, Some(params)) = (kind, self.estimator.as_ref()) {
            let frozen = EstimatorState {
                xhat1: self.y.est[0],
                xhat2: self.y.est[1],
                frozen: true,
            };
            // The flag bookkeeping guarantees the estimator is frozen here.
            let reset = estimator::reset_at_exit(&frozen, params, &self.guidance)
                .expect("estimator frozen while inside C_a");
            self.y.est = [reset.xhat1, reset.xhat2];
        }
    }

    /// Advances one full step of length `h`, splitting it at any crossings.
    pub fn step(&mut self) -> Result<Vec<RawEvent<P::State>>, DynamicsError> {
        let mut events = Vec::new();
        let t_end = (self.step_index + 1) as f64 * self.h;
        let mut remaining = self.h;
        let r_a = self.guidance.r_a;
        loop {
            let omega = self.decision()?.omega;
            let inside = self.inside;
            let est = self.estimator.as_ref();
            let y0 = self.y;
            let trial = flow(&self.plant, &y0, omega, est, inside, remaining);
            let r_trial = self.plant.range(&trial.plant);
            let crossed = if inside { r_trial >= r_a } else { r_trial < r_a };
            if !crossed {
                self.y = trial;
                break;
            }
            let plant = &self.plant;
            let (tau, r_event, y_event) = bisect_crossing(
                |tau| {
                    let y = flow(plant, &y0, omega, est, inside, tau);
                    (plant.range(&y.plant), y)
                },
                remaining,
                inside,
                r_a,
                self.tol,
            );
            self.y = y_event;
            self.t += tau;
            let kind = if inside {
                CrossingKind::Exit
            } else {
                CrossingKind::Entry
            };
            self.apply_event(kind);
            events.push(RawEvent {
                kind,
                t: self.t,
                y: self.y.plant,
                r: r_event,
                est: self.y.est,
            });
            remaining -= tau;
            if remaining <= 0.0 {
                break;
            }
        }
        self.step_index += 1;
        self.t = t_end;
        let r = self.range();
        if r < ZERO_RANGE_THRESHOLD {
            return Err(GeometryError::ZeroRange(r).into());
        }
        Ok(events)
    }
}

pub type CartesianSimulation = Simulation<CartesianPlant>;

impl Simulation<CartesianPlant> {
    pub fn new(config: &SimConfig) -> Result<Self, DynamicsError> {
        let plant = CartesianPlant {
            target: config.target,
            speed: config.guidance.speed,
        };
        Self::with_plant(config, plant, from_cartesian(&config.initial_state))
    }

    pub fn state(&self) -> CartesianState {
        to_cartesian(&self.y.plant)
    }

    pub fn record(&self) -> Result<TrajectoryRecord, DynamicsError> {
        let state = self.state();
        let polar = geometry::to_polar(&state, &self.plant.target)?;
        Ok(TrajectoryRecord {
            t: self.t,
            state,
            r: polar.r,
            theta: polar.theta,
            r_dot: self.plant.range_rate(&self.y.plant)?,
            omega: self.decision()?.omega,
            xhat1: self.y.est[0],
            xhat2: self.y.est[1],
            inside_ca: self.inside,
        })
    }

    fn event(&self, raw: RawEvent<[f64; 3]>) -> CrossingEvent {
        CrossingEvent {
            kind: raw.kind,
            time: raw.t,
            state_at_event: to_cartesian(&raw.y),
            r: raw.r,
            estimate: self.estimator.map(|_| raw.est),
        }
    }
}

impl Simulation<PolarPlant> {
    pub fn new_polar(config: &SimConfig) -> Result<Self, DynamicsError> {
        let polar = geometry::to_polar(&config.initial_state, &config.target)?;
        let plant = PolarPlant {
            speed: config.guidance.speed,
        };
        Self::with_plant(config, plant, [polar.r, polar.theta])
    }

    pub fn polar_record(&self) -> Result<PolarRecord, DynamicsError> {
        Ok(PolarRecord {
            t: self.t,
            r: self.y.plant[0],
            theta: geometry::wrap_angle(self.y.plant[1]),
            omega: self.decision()?.omega,
            inside_ca: self.inside,
        })
    }
}

fn check_gains(config: &SimConfig, policy: GainPolicy) -> Result<(), DynamicsError> {
    if policy == GainPolicy::Strict {
        let report = config.gain_report();
        if !report.pass() {
            return Err(DynamicsError::GainConditionViolated(Box::new(report)));
        }
    }
    Ok(())
}

/// Runs the Cartesian model for the configured duration.
pub fn run(config: &SimConfig, policy: GainPolicy) -> Result<RunOutput, DynamicsError> {
    check_gains(config, policy)?;
    let mut sim = CartesianSimulation::new(config)?;
    let n = config.num_steps();
    let mut records = Vec::with_capacity(n + 1);
    let mut events: Vec<CrossingEvent> = sim
        .initial_events()
        .into_iter()
        .map(|e| sim.event(e))
        .collect();
    for _ in 0..n {
        records.push(sim.record()?);
        for raw in sim.step()? {
            events.push(sim.event(raw));
        }
    }
    records.push(sim.record()?);
    Ok(RunOutput { records, events })
}

/// Same closed loop integrated in `(r, theta)` coordinates.
pub fn run_polar(config: &SimConfig, policy: GainPolicy) -> Result<PolarRunOutput, DynamicsError> {
    check_gains(config, policy)?;
    let mut sim = Simulation::new_polar(config)?;
    let n = config.num_steps();
    let mut records = Vec::with_capacity(n + 1);
    let mut events: Vec<(CrossingKind, f64)> =
        sim.initial_events().iter().map(|e| (e.kind, e.t)).collect();
    for _ in 0..n {
        records.push(sim.polar_record()?);
        events.extend(sim.step()?.iter().map(|e| (e.kind, e.t)));
    }
    records.push(sim.polar_record()?);
    Ok(PolarRunOutput { records, events })
}
