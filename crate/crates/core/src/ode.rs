//! Fixed-step integration of the six-compartment temporal model.

use thiserror::Error;

use crate::kinetics::{reaction_rhs, BehaviorParams, TransitionSchedule};

pub type BehaviorState = [f64; 6];

/// Any component beyond this magnitude aborts the run.
pub const BLOW_UP_LIMIT: f64 = 1e3;
/// Undershoot below this is reported instead of projected away.
pub const UNDERSHOOT_LIMIT: f64 = -1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invalid integration run: {0}")]
    InvalidRun(String),
    #[error("blow-up at t = {t}: component {component} reached {value}")]
    BlowUp {
        t: f64,
        component: usize,
        value: f64,
    },
    #[error("negative density at t = {t}: component {component} = {value}")]
    Undershoot {
        t: f64,
        component: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Euler,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rk4" => Ok(Method::Rk4),
            "euler" => Ok(Method::Euler),
            other => Err(format!(
                "unknown integration method `{other}` (expected rk4 or euler)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeRun {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub method: Method,
    pub initial: BehaviorState,
    /// Keep every k-th step; the final state is always kept.
    pub store_every: usize,
}

impl OdeRun {
    /// Everyone in daily behavior at `t = 0`, RK4 with `dt = 0.01`.
    pub fn from_daily(t1: f64) -> Self {
        Self {
            t0: 0.0,
            t1,
            dt: 0.01,
            method: Method::Rk4,
            initial: [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            store_every: 1,
        }
    }

    /// A zero-length span (`t1 == t0`) is accepted and yields the initial
    /// state only.
    pub fn validate(&self) -> Result<(), OdeError> {
        let bad = |m: String| Err(OdeError::InvalidRun(m));
        if !(self.t0.is_finite() && self.t1.is_finite()) {
            return bad("time span must be finite".into());
        }
        if self.t1 < self.t0 {
            return bad(format!("t1 = {} precedes t0 = {}", self.t1, self.t0));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.t1 > self.t0 && self.dt > self.t1 - self.t0 {
            return bad(format!(
                "dt = {} exceeds the span {}",
                self.dt,
                self.t1 - self.t0
            ));
        }
        if self.store_every == 0 {
            return bad("store_every must be at least 1".into());
        }
        for (i, v) in self.initial.iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return bad(format!(
                    "initial component {i} = {v} is not a non-negative number"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<BehaviorState>,
}

impl OdeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &BehaviorState)> {
        Some((*self.times.last()?, self.states.last()?))
    }

    /// Max over stored times of `|sum(rho(t)) - sum(rho(t0))|`.
    pub fn conservation_report(&self) -> f64 {
        let Some(first) = self.states.first() else {
            return 0.0;
        };
        let reference: f64 = first.iter().sum();
        self.states
            .iter()
            .map(|s| (s.iter().sum::<f64>() - reference).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_component(&self) -> f64 {
        self.states
            .iter()
            .flat_map(|s| s.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

fn axpy(y: &BehaviorState, a: f64, x: &BehaviorState) -> BehaviorState {
    std::array::from_fn(|i| y[i] + a * x[i])
}

/// One step of the chosen method from `(t, y)` with step `h`.
pub fn advance(
    method: Method,
    t: f64,
    y: &BehaviorState,
    h: f64,
    sched: &TransitionSchedule,
    p: &BehaviorParams,
) -> BehaviorState {
    advance_with(method, t, y, h, &|t, y| reaction_rhs(t, y, sched, p))
}

/// [`advance`] for an arbitrary right-hand side.
pub fn advance_with(
    method: Method,
    t: f64,
    y: &BehaviorState,
    h: f64,
    f: &dyn Fn(f64, &BehaviorState) -> BehaviorState,
) -> BehaviorState {
    match method {
        Method::Euler => axpy(y, h, &f(t, y)),
        Method::Rk4 => {
            let k1 = f(t, y);
            let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
            let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
            let k4 = f(t + h, &axpy(y, h, &k3));
            std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        }
    }
}

pub fn integrate(
    run: &OdeRun,
    sched: &TransitionSchedule,
    p: &BehaviorParams,
) -> Result<OdeTrajectory, OdeError> {
    run.validate()?;
    sched
        .validate()
        .map_err(|e| OdeError::InvalidRun(e.to_string()))?;
    p.validate()
        .map_err(|e| OdeError::InvalidRun(e.to_string()))?;
    integrate_with(run, &|t, y| reaction_rhs(t, y, sched, p))
}

/// [`integrate`] for an arbitrary right-hand side; only `run` is checked.
pub fn integrate_with(
    run: &OdeRun,
    f: &dyn Fn(f64, &BehaviorState) -> BehaviorState,
) -> Result<OdeTrajectory, OdeError> {
    run.validate()?;
    let mut traj = OdeTrajectory {
        times: vec![run.t0],
        states: vec![run.initial],
    };
    let span = run.t1 - run.t0;
    if span == 0.0 {
        return Ok(traj);
    }

    // Steps land on t0 + k*dt; the last one is shortened to hit t1 exactly.
    let last_full = {
        let n = (span / run.dt).floor() as u64;
        if span - n as f64 * run.dt <= 1e-9 * run.dt {
            n.saturating_sub(1)
        } else {
            n
        }
    };

    let mut y = run.initial;
    let mut k: u64 = 0;
    loop {
        let t = run.t0 + k as f64 * run.dt;
        let t_next = if k >= last_full {
            run.t1
        } else {
            run.t0 + (k + 1) as f64 * run.dt
        };
        y = advance_with(run.method, t, &y, t_next - t, f);
        check_state(t_next, &y)?;
        k += 1;
        let done = t_next == run.t1;
        if done || k.is_multiple_of(run.store_every as u64) {
            traj.times.push(t_next);
            traj.states.push(y);
        }
        if done {
            break;
        }
    }
    Ok(traj)
}

fn check_state(t: f64, y: &BehaviorState) -> Result<(), OdeError> {
    for (component, &value) in y.iter().enumerate() {
        if !value.is_finite() || value.abs() > BLOW_UP_LIMIT {
            return Err(OdeError::BlowUp {
                t,
                component,
                value,
            });
        }
        if value < UNDERSHOOT_LIMIT {
            return Err(OdeError::Undershoot {
                t,
                component,
                value,
            });
        }
    }
    Ok(())
}
