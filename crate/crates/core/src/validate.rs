//! Invariant suite behind `apc validate`.
//!
//! Each check returns a measured value and the threshold it is held to. Two
//! debug hooks exist for exercising the suite itself: `flip_h_sign` flips
//! the sign of the panic/control imitation term in the control equation only
//! (so the temporal model stops conserving mass), and `cfl_safety` overrides
//! the step safety factor of the positivity run.

use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::grid::{check_divergence, DirectionField, GeometrySpec, Grid2D};
use crate::kinetics::{
    imitation_h, reaction_rhs, BehaviorParams, Ramp, TransitionSchedule, CONTROL, DAILY_BEFORE,
};
use crate::ode::{integrate_with, Method, OdeError, OdeRun};
use crate::scenario::{ScenarioConfig, BUILTIN_NAMES};
use crate::solver::{
    run, DensityField, MassLedger, Problem, RunOutput, SolverError, StepControl, Stepper,
    TransportParams, SPECIES,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub flip_h_sign: bool,
    pub cfl_safety: f64,
    /// grid of the positivity and ledger run
    pub grid: (usize, usize),
    pub t_end: f64,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            flip_h_sign: false,
            cfl_safety: 0.5,
            grid: (40, 20),
            t_end: 30.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &'static str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name,
            passed: value <= threshold,
            value,
            threshold,
            detail,
        }
    }

    fn failed(name: &'static str, threshold: f64, detail: String) -> Self {
        Self {
            name,
            passed: false,
            value: f64::NAN,
            threshold,
            detail,
        }
    }
}

/// Max drift of the six-compartment sum over `[0, t_end]`, RK4 `dt = 0.01`,
/// `gamma = 1`, `phi = 0`, everyone in daily behavior at the start.
pub fn ode_conservation_drift(
    p: &BehaviorParams,
    t_end: f64,
    flip_h_sign: bool,
) -> Result<f64, OdeError> {
    let sched = TransitionSchedule::no_return();
    let rhs = |t: f64, y: &[f64; 6]| {
        let mut r = reaction_rhs(t, y, &sched, p);
        if flip_h_sign {
            r[CONTROL] -= 2.0 * imitation_h(y[1], y[2], p);
        }
        r
    };
    Ok(integrate_with(&OdeRun::from_daily(t_end), &rhs)?.conservation_report())
}

/// Scenario 1 geometry on an `nx` x `ny` grid.
pub fn scenario1_on(nx: usize, ny: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::scenario1();
    cfg.geometry.nx = nx;
    cfg.geometry.ny = ny;
    cfg
}

/// Scenario 1 with the given grid, horizon and safety factor. The step cap
/// is lifted so that the safety factor alone sets the step.
pub fn positivity_run(opts: &SuiteOptions) -> Result<RunOutput, SolverError> {
    let mut cfg = scenario1_on(opts.grid.0, opts.grid.1);
    cfg.control = StepControl {
        cfl_safety: opts.cfl_safety,
        dt_max: 1.0,
        t_end: opts.t_end,
        output_interval: 1.0,
        snapshot_times: Vec::new(),
    };
    let (problem, initial) = cfg
        .build()
        .map_err(|e| SolverError::InvalidControl(e.to_string()))?;
    run(&problem, initial, &cfg.control)
}

/// Largest per-cell difference between a transport-free run from uniform
/// daily density and the temporal model with matched Euler steps.
pub fn zero_transport_defect(nx: usize, ny: usize, t_end: f64) -> Result<f64, String> {
    let cfg = scenario1_on(nx, ny);
    let grid = Grid2D::build(&cfg.geometry).map_err(|e| e.to_string())?;
    let direction = DirectionField::toward_target(&grid, [2.25, 0.5]).map_err(|e| e.to_string())?;
    let problem = Problem {
        grid,
        direction,
        behavior: cfg.behavior,
        transport: TransportParams::frozen(),
        schedule: cfg.schedule,
    };
    let g = &problem.grid;
    let level = 1.0 / (g.interior_count() as f64 * g.cell_area());
    let mut initial = DensityField::zeros(g);
    for c in 0..g.len() {
        if g.is_interior(c) {
            initial.rho[DAILY_BEFORE][c] = level;
        }
    }
    let control = StepControl {
        cfl_safety: 0.5,
        dt_max: 0.01,
        t_end,
        output_interval: 1.0,
        snapshot_times: Vec::new(),
    };
    let out = run(&problem, initial, &control).map_err(|e| e.to_string())?;

    let ode = OdeRun {
        method: Method::Euler,
        initial: [0.0, 0.0, 0.0, level, 0.0, 0.0],
        ..OdeRun::from_daily(t_end)
    };
    let traj = integrate_with(&ode, &|t, y| {
        reaction_rhs(t, y, &problem.schedule, &problem.behavior)
    })
    .map_err(|e| e.to_string())?;
    let (_, reference) = traj.last().ok_or("empty trajectory")?;
    let mut worst: f64 = 0.0;
    for c in (0..g.len()).filter(|&c| g.is_interior(c)) {
        for (rho, r) in out.final_field.rho.iter().zip(reference) {
            worst = worst.max((rho[c] - r).abs());
        }
    }
    Ok(worst)
}

/// Pure-diffusion problem on a plain `nx` x `ny` box of 0.1 cells with an
/// exit that carries no flux.
pub fn diffusion_problem(nx: usize, ny: usize, d: [f64; SPECIES]) -> Problem {
    let spec = GeometrySpec {
        origin: [0.0, 0.0],
        width: 0.1 * nx as f64,
        height: 0.1 * ny as f64,
        nx,
        ny,
        exit: None,
        obstacles: Vec::new(),
    };
    let grid = Grid2D::build(&spec).expect("valid box");
    let direction = DirectionField::toward_target(&grid, [0.1 * nx as f64 + 0.3, 0.05 * ny as f64])
        .expect("target outside");
    Problem {
        grid,
        direction,
        behavior: BehaviorParams::inert(),
        transport: TransportParams {
            diffusion: d,
            ..TransportParams::frozen()
        },
        schedule: TransitionSchedule {
            gamma: Ramp::Constant(0.0),
            phi: Ramp::Constant(0.0),
        },
    }
}

/// Explicit diffusion step `(I + dt A) u` with `A` assembled from the
/// neighbor relation of a plain box.
pub fn dense_diffusion_step(
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    d: f64,
    dt: f64,
    u: &[f64],
) -> Vec<f64> {
    let n = nx * ny;
    let mut a = vec![vec![0.0; n]; n];
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            let mut link = |k: usize, coef: f64| {
                a[c][k] += coef;
                a[c][c] -= coef;
            };
            if i > 0 {
                link(c - 1, d / (dx * dx));
            }
            if i + 1 < nx {
                link(c + 1, d / (dx * dx));
            }
            if j > 0 {
                link(c - nx, d / (dy * dy));
            }
            if j + 1 < ny {
                link(c + nx, d / (dy * dy));
            }
        }
    }
    (0..n)
        .map(|r| u[r] + dt * a[r].iter().zip(u).map(|(x, y)| x * y).sum::<f64>())
        .collect()
}

/// Largest difference between one solver step and the dense reference over
/// every box from 3x3 to 5x5, `trials` random fields each.
pub fn diffusion_oracle_defect(trials: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for nx in 3..=5 {
        for ny in 3..=5 {
            for _ in 0..trials {
                let d: [f64; SPECIES] = std::array::from_fn(|_| rng.random_range(0.001..0.1));
                let problem = diffusion_problem(nx, ny, d);
                let g = &problem.grid;
                let mut f = DensityField::zeros(g);
                for s in 0..SPECIES {
                    f.rho[s] = (0..g.len()).map(|_| rng.random_range(0.0..1.0)).collect();
                }
                let before = f.clone();
                let mut stepper = Stepper::new(&problem);
                let dt = stepper.stable_dt(&f, 0.9, 1.0);
                let mut ledger = MassLedger::for_field(&f, g);
                stepper
                    .step(&mut f, &mut ledger, dt)
                    .expect("diffusion step");
                for ((now, prev), ds) in f.rho.iter().zip(&before.rho).zip(d) {
                    let reference = dense_diffusion_step(nx, ny, g.dx, g.dy, ds, dt, prev);
                    for (a, b) in now.iter().zip(&reference) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
    }
    worst
}

/// Largest discrete divergence of the direction field over the built-in
/// scenarios.
pub fn builtin_divergence() -> Result<f64, String> {
    let mut worst = f64::NEG_INFINITY;
    for name in BUILTIN_NAMES {
        let cfg = ScenarioConfig::builtin(name).expect("builtin");
        let (problem, _) = cfg.build().map_err(|e| e.to_string())?;
        worst = worst.max(check_divergence(&problem.direction, &problem.grid));
    }
    Ok(worst)
}

pub fn run_suite(opts: &SuiteOptions) -> Vec<CheckResult> {
    let mut results = Vec::new();

    let p = BehaviorParams::low_risk_culture();
    results.push(match ode_conservation_drift(&p, 250.0, opts.flip_h_sign) {
        Ok(drift) => CheckResult::at_most(
            "conservation",
            drift,
            1e-10,
            "max |sum rho_i(t) - 1|, RK4 dt=0.01, t<=250".into(),
        ),
        Err(e) => CheckResult::failed("conservation", 1e-10, e.to_string()),
    });

    match positivity_run(opts) {
        Ok(out) => {
            let detail = format!(
                "{}x{} grid, safety {}, t<={}, {} steps",
                opts.grid.0, opts.grid.1, opts.cfl_safety, opts.t_end, out.stats.steps
            );
            results.push(CheckResult::at_most(
                "positivity",
                0.0 - out.stats.min_density,
                1e-12,
                detail,
            ));
            let monotone = out
                .series
                .windows(2)
                .map(|w| w[1].diagnostics.total_mass - w[0].diagnostics.total_mass)
                .fold(out.stats.max_mass_increase, f64::max);
            results.push(CheckResult::at_most(
                "mass monotone",
                monotone,
                1e-14,
                "largest increase of U between steps".into(),
            ));
            results.push(CheckResult::at_most(
                "ledger closure",
                out.stats.max_closure_defect,
                1e-10,
                "|interior + outflow + mortality - clipped - initial| / initial".into(),
            ));
        }
        Err(e) => {
            results.push(CheckResult::failed("positivity", 1e-12, e.to_string()));
            results.push(CheckResult::failed(
                "mass monotone",
                1e-14,
                "run aborted".into(),
            ));
            results.push(CheckResult::failed(
                "ledger closure",
                1e-10,
                "run aborted".into(),
            ));
        }
    }

    results.push(match zero_transport_defect(10, 5, 10.0) {
        Ok(v) => CheckResult::at_most(
            "zero transport",
            v,
            1e-6,
            "per-cell state vs Euler ODE at t=10".into(),
        ),
        Err(e) => CheckResult::failed("zero transport", 1e-6, e),
    });

    results.push(CheckResult::at_most(
        "diffusion oracle",
        diffusion_oracle_defect(100, opts.seed),
        1e-14,
        "one step vs dense matrix, 3x3..5x5, 100 trials each".into(),
    ));

    results.push(match builtin_divergence() {
        Ok(v) => CheckResult::at_most(
            "divergence",
            v,
            1e-8,
            "max central-difference div(nu), built-in scenarios".into(),
        ),
        Err(e) => CheckResult::failed("divergence", 1e-8, e),
    });

    results
}

pub fn format_table(results: &[CheckResult]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(
            out,
            "{:<18} {:<4} value {:>12.3e}  limit {:>8.1e}  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.value,
            r.threshold,
            r.detail
        );
    }
    out
}
