//! Reaction kinetics of the Alert-Panic-Control model.
//!
//! Compartments are indexed as
//!
//! | index | compartment                         |
//! |-------|-------------------------------------|
//! | 0     | alert                               |
//! | 1     | panic                               |
//! | 2     | control                             |
//! | 3     | daily behavior before the event     |
//! | 4     | daily behavior after the event      |
//! | 5     | victims (ODE view only)             |
//!
//! Every function here is pure. Negative densities are treated as zero so
//! the spatial stepper can evaluate rates on round-off undershoots; counting
//! such inputs is left to the caller (see [`count_negative`]).

use std::f64::consts::PI;

use thiserror::Error;

pub const ALERT: usize = 0;
pub const PANIC: usize = 1;
pub const CONTROL: usize = 2;
pub const DAILY_BEFORE: usize = 3;
pub const DAILY_AFTER: usize = 4;
pub const VICTIMS: usize = 5;

/// Largest accepted singularity guard.
pub const EPSILON_MAX: f64 = 0.1;
/// Guards above this trigger a warning.
pub const EPSILON_WARN: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticsError {
    #[error("parameter `{name}` must be finite and non-negative, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("epsilon must lie in (0, {EPSILON_MAX}], got {0}")]
    Epsilon(f64),
    #[error("ramp start {start} must be strictly before its end {end}")]
    RampOrder { start: f64, end: f64 },
    #[error("constant schedule value {0} is outside [0, 1]")]
    ConstantOutOfRange(f64),
}

/// Kinetic rates of the behavioral transitions (all in 1/time, except
/// `epsilon`, which is a dimensionless density).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorParams {
    /// alert -> control
    pub b1: f64,
    /// alert -> panic
    pub b2: f64,
    /// control -> alert
    pub b3: f64,
    /// panic -> alert
    pub b4: f64,
    /// panic -> control
    pub c1: f64,
    /// control -> panic
    pub c2: f64,
    /// mortality of alert individuals
    pub delta1: f64,
    /// mortality of panicked individuals
    pub delta2: f64,
    /// mortality of controlled individuals
    pub delta3: f64,
    /// imitation of control by alert individuals
    pub alpha13: f64,
    /// imitation of panic by alert individuals
    pub alpha12: f64,
    /// imitation of control by panicked individuals
    pub alpha23: f64,
    /// imitation of panic by controlled individuals
    pub alpha32: f64,
    /// keeps the population ratios finite when a compartment is empty
    pub epsilon: f64,
}

impl BehaviorParams {
    /// Reference parameters for a population with a low risk culture
    /// (`c2 > c1`, `b2 > b1`). Mortality is off.
    pub fn low_risk_culture() -> Self {
        Self {
            b1: 0.1,
            b2: 0.2,
            b3: 0.001,
            b4: 0.001,
            c1: 0.1,
            c2: 0.4,
            delta1: 0.0,
            delta2: 0.0,
            delta3: 0.0,
            alpha13: 0.6,
            alpha12: 0.7,
            alpha23: 0.6,
            alpha32: 0.7,
            epsilon: 1e-3,
        }
    }

    /// All rates and intensities set to zero.
    pub fn inert() -> Self {
        Self {
            b1: 0.0,
            b2: 0.0,
            b3: 0.0,
            b4: 0.0,
            c1: 0.0,
            c2: 0.0,
            delta1: 0.0,
            delta2: 0.0,
            delta3: 0.0,
            alpha13: 0.0,
            alpha12: 0.0,
            alpha23: 0.0,
            alpha32: 0.0,
            epsilon: 1e-3,
        }
    }

    pub fn rates(&self) -> [(&'static str, f64); 13] {
        [
            ("b1", self.b1),
            ("b2", self.b2),
            ("b3", self.b3),
            ("b4", self.b4),
            ("c1", self.c1),
            ("c2", self.c2),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
            ("alpha13", self.alpha13),
            ("alpha12", self.alpha12),
            ("alpha23", self.alpha23),
            ("alpha32", self.alpha32),
        ]
    }

    pub fn validate(&self) -> Result<(), KineticsError> {
        for (name, value) in self.rates() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(KineticsError::NegativeRate { name, value });
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon <= EPSILON_MAX) {
            return Err(KineticsError::Epsilon(self.epsilon));
        }
        if self.epsilon > EPSILON_WARN {
            log::warn!(
                "epsilon = {} is not small; imitation terms will be noticeably damped",
                self.epsilon
            );
        }
        Ok(())
    }
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self::low_risk_culture()
    }
}

/// Time profile of a behavioral transition switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ramp {
    /// Cosine ramp from 0 at `start` to 1 at `end`.
    Smoothstep {
        start: f64,
        end: f64,
    },
    Constant(f64),
}

impl Ramp {
    pub fn validate(&self) -> Result<(), KineticsError> {
        match *self {
            Ramp::Smoothstep { start, end } => {
                if start.is_finite() && end.is_finite() && start < end {
                    Ok(())
                } else {
                    Err(KineticsError::RampOrder { start, end })
                }
            }
            Ramp::Constant(v) => {
                if (0.0..=1.0).contains(&v) {
                    Ok(())
                } else {
                    Err(KineticsError::ConstantOutOfRange(v))
                }
            }
        }
    }

    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        match *self {
            Ramp::Smoothstep { start, end } => smoothstep(t, start, end),
            Ramp::Constant(v) => v,
        }
    }
}

/// The two time-dependent switches: `gamma` moves the daily population into
/// alert at the onset of the event, `phi` returns controlled individuals to
/// daily life afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSchedule {
    pub gamma: Ramp,
    pub phi: Ramp,
}

impl TransitionSchedule {
    /// Immediate onset and no return to everyday life.
    pub fn no_return() -> Self {
        Self {
            gamma: Ramp::Constant(1.0),
            phi: Ramp::Constant(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), KineticsError> {
        self.gamma.validate()?;
        self.phi.validate()
    }

    #[inline]
    pub fn gamma_at(&self, t: f64) -> f64 {
        self.gamma.value_at(t)
    }

    #[inline]
    pub fn phi_at(&self, t: f64) -> f64 {
        self.phi.value_at(t)
    }
}

impl Default for TransitionSchedule {
    fn default() -> Self {
        Self::no_return()
    }
}

/// Saturating imitation strength `w^2 / (1 + w^2)`.
#[inline]
pub fn xi(w: f64) -> f64 {
    let w2 = w * w;
    if w2.is_infinite() {
        return 1.0;
    }
    w2 / (1.0 + w2)
}

/// Cosine ramp between `z0` and `z1`.
pub fn zeta(t: f64, z0: f64, z1: f64) -> Result<f64, KineticsError> {
    Ramp::Smoothstep { start: z0, end: z1 }.validate()?;
    Ok(smoothstep(t, z0, z1))
}

#[inline]
fn smoothstep(t: f64, z0: f64, z1: f64) -> f64 {
    if t < z0 {
        0.0
    } else if t <= z1 {
        0.5 - 0.5 * (PI * (t - z0) / (z1 - z0)).cos()
    } else {
        1.0
    }
}

/// Alert individuals imitating controlled ones.
#[inline]
pub fn imitation_f(rho1: f64, rho3: f64, p: &BehaviorParams) -> f64 {
    let (rho1, rho3) = (rho1.max(0.0), rho3.max(0.0));
    p.alpha13 * xi(rho3 / (rho1 + p.epsilon)) * rho1 * rho3
}

/// Alert individuals imitating panicked ones.
#[inline]
pub fn imitation_g(rho1: f64, rho2: f64, p: &BehaviorParams) -> f64 {
    let (rho1, rho2) = (rho1.max(0.0), rho2.max(0.0));
    p.alpha12 * xi(rho2 / (rho1 + p.epsilon)) * rho1 * rho2
}

/// Net panic -> control imitation flow; negative when control individuals
/// are drawn into panic.
#[inline]
pub fn imitation_h(rho2: f64, rho3: f64, p: &BehaviorParams) -> f64 {
    let (rho2, rho3) = (rho2.max(0.0), rho3.max(0.0));
    (p.alpha23 * xi(rho3 / (rho2 + p.epsilon)) - p.alpha32 * xi(rho2 / (rho3 + p.epsilon)))
        * rho2
        * rho3
}

/// Local reaction rates of the five spatial compartments for given switch
/// values. Mortality leaves the system here; its total is [`mortality_rate`].
#[inline]
pub fn local_rates(rho: &[f64; 5], gamma: f64, phi: f64, p: &BehaviorParams) -> [f64; 5] {
    let r1 = rho[ALERT].max(0.0);
    let r2 = rho[PANIC].max(0.0);
    let r3 = rho[CONTROL].max(0.0);
    let r4 = rho[DAILY_BEFORE].max(0.0);

    let f = imitation_f(r1, r3, p);
    let g = imitation_g(r1, r2, p);
    let h = imitation_h(r2, r3, p);
    let onset = gamma * r4;
    let recovery = phi * r3;

    [
        -(p.b1 + p.b2 + p.delta1) * r1 + onset + p.b3 * r3 + p.b4 * r2 - f - g,
        -(p.b4 + p.c1 + p.delta2) * r2 + p.b2 * r1 + p.c2 * r3 + g - h,
        -(p.b3 + p.c2 + p.delta3) * r3 + p.b1 * r1 + p.c1 * r2 - recovery + f + h,
        -onset,
        recovery,
    ]
}

/// Rate at which individuals die, per unit area.
#[inline]
pub fn mortality_rate(rho: &[f64; 5], p: &BehaviorParams) -> f64 {
    p.delta1 * rho[ALERT].max(0.0)
        + p.delta2 * rho[PANIC].max(0.0)
        + p.delta3 * rho[CONTROL].max(0.0)
}

/// Right-hand side of the six-compartment temporal model.
pub fn reaction_rhs(
    t: f64,
    s: &[f64; 6],
    sched: &TransitionSchedule,
    p: &BehaviorParams,
) -> [f64; 6] {
    let rho = [s[0], s[1], s[2], s[3], s[4]];
    let r = local_rates(&rho, sched.gamma_at(t), sched.phi_at(t), p);
    [r[0], r[1], r[2], r[3], r[4], mortality_rate(&rho, p)]
}

/// Reaction part of the spatial system at one point.
pub fn reaction_rhs_pde(
    t: f64,
    rho: &[f64; 5],
    sched: &TransitionSchedule,
    p: &BehaviorParams,
) -> [f64; 5] {
    local_rates(rho, sched.gamma_at(t), sched.phi_at(t), p)
}

pub fn count_negative(values: &[f64]) -> usize {
    values.iter().filter(|v| **v < 0.0).count()
}
