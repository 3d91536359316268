//! Explicit finite-volume solver for the five-species advection-diffusion-
//! reaction system.
//!
//! Fluxes are assembled per face first and applied to cells second, so the
//! exit outflow booked in the [`MassLedger`] is exactly the flux removed
//! from the cells. Diffusion uses the two-point flux, panic and control are
//! advected with first-order upwinding along the desired direction, walls
//! carry no flux and exit faces carry `rho * v_out` outward.

use thiserror::Error;

use crate::grid::{DirectionField, ExitFace, Grid2D, Side};
use crate::kinetics::{
    local_rates, mortality_rate, BehaviorParams, TransitionSchedule, CONTROL, PANIC,
};

pub const SPECIES: usize = 5;

/// Undershoot tolerated and clipped to zero.
pub const CLIP_TOLERANCE: f64 = 1e-12;
/// Undershoot beyond this aborts the run.
pub const ABORT_UNDERSHOOT: f64 = -1e-8;
/// Upper bound on time-series rows per run.
pub const MAX_OUTPUT_ROWS: f64 = 1e7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite density for species {species} in cell {cell} at t = {t}")]
    NonFinite { t: f64, species: usize, cell: usize },
    #[error("density undershoot {value:e} for species {species} in cell {cell} at t = {t}")]
    Undershoot {
        t: f64,
        species: usize,
        cell: usize,
        value: f64,
    },
    #[error("invalid step control: {0}")]
    InvalidControl(String),
    #[error("invalid transport parameters: {0}")]
    InvalidTransport(String),
    #[error("field does not match the grid: {0}")]
    Shape(String),
}

/// Transport coefficients per species (index 0 = alert ... 4 = daily after).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams {
    /// diffusivities (length^2 / time)
    pub diffusion: [f64; SPECIES],
    /// free speed of the panicked population (length / time)
    pub v2_max: f64,
    /// free speed of the controlled population (length / time)
    pub v3_max: f64,
    /// exit crossing speeds (length / time)
    pub v_out: [f64; SPECIES],
    /// Clamp `V = V_max (1 - rho_total)` at zero for overcrowded cells.
    pub clamp_velocity: bool,
}

impl TransportParams {
    /// Reference transport for the low-risk-culture runs. The post-event
    /// daily population reuses the pre-event diffusivity and exit speed.
    pub fn reference() -> Self {
        Self {
            diffusion: [0.001, 0.05, 0.01, 0.01, 0.01],
            v2_max: 0.3,
            v3_max: 0.2,
            v_out: [0.2, 0.1, 0.3, 0.2, 0.2],
            clamp_velocity: true,
        }
    }

    /// No motion at all.
    pub fn frozen() -> Self {
        Self {
            diffusion: [0.0; SPECIES],
            v2_max: 0.0,
            v3_max: 0.0,
            v_out: [0.0; SPECIES],
            clamp_velocity: true,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let named = self
            .diffusion
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("d{}", i + 1), *v))
            .chain(
                self.v_out
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (format!("v{}_out", i + 1), *v)),
            )
            .chain([
                ("v2_max".to_string(), self.v2_max),
                ("v3_max".to_string(), self.v3_max),
            ]);
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SolverError::InvalidTransport(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn max_diffusion(&self) -> f64 {
        self.diffusion.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_exit_speed(&self) -> f64 {
        self.v_out.iter().copied().fold(0.0, f64::max)
    }
}

impl Default for TransportParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Speeds of panic and control for the local total density.
#[inline]
pub fn velocity_closure(rho: &[f64; SPECIES], tp: &TransportParams) -> (f64, f64) {
    speeds(rho.iter().sum(), tp)
}

#[inline]
fn speeds(total: f64, tp: &TransportParams) -> (f64, f64) {
    let mut free = 1.0 - total;
    if tp.clamp_velocity {
        free = free.max(0.0);
    }
    (tp.v2_max * free, tp.v3_max * free)
}

/// The five densities over the grid (obstacle cells hold zero).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub t: f64,
    pub rho: [Vec<f64>; SPECIES],
}

impl DensityField {
    pub fn zeros(g: &Grid2D) -> Self {
        Self {
            t: 0.0,
            rho: std::array::from_fn(|_| vec![0.0; g.len()]),
        }
    }

    pub fn cells(&self) -> usize {
        self.rho[0].len()
    }

    #[inline]
    pub fn local(&self, cell: usize) -> [f64; SPECIES] {
        std::array::from_fn(|s| self.rho[s][cell])
    }

    fn check_shape(&self, g: &Grid2D) -> Result<(), SolverError> {
        if self.rho.iter().any(|r| r.len() != g.len()) {
            return Err(SolverError::Shape(format!(
                "expected {} cells per species",
                g.len()
            )));
        }
        Ok(())
    }
}

/// Area-weighted summaries of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    /// total interior mass
    pub total_mass: f64,
    pub species_mass: [f64; SPECIES],
    pub min_value: f64,
    pub max_value: f64,
    pub max_total_density: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn diagnostics(f: &DensityField, g: &Grid2D) -> Diagnostics {
    let area = g.cell_area();
    let mut sums = [CompensatedSum::default(); SPECIES];
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    let mut max_total: f64 = 0.0;
    for cell in (0..g.len()).filter(|&c| g.is_interior(c)) {
        let mut total = 0.0;
        for (s, mass) in sums.iter_mut().enumerate() {
            let v = f.rho[s][cell];
            mass.add(v);
            total += v;
            min_value = min_value.min(v);
            max_value = max_value.max(v);
        }
        max_total = max_total.max(total);
    }
    let species_mass = sums.map(|m| m.value() * area);
    let mut total = CompensatedSum::default();
    for m in sums {
        total.add(m.value());
    }
    Diagnostics {
        t: f.t,
        total_mass: total.value() * area,
        species_mass,
        min_value,
        max_value,
        max_total_density: max_total,
    }
}

/// Discrete mass balance. `interior_mass + exit_outflow_cum + mortality_cum`
/// equals `initial_mass + clipped_cum` up to round-off.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MassLedger {
    pub initial_mass: f64,
    pub interior_mass: f64,
    pub exit_outflow_cum: f64,
    pub mortality_cum: f64,
    /// mass added by clipping round-off undershoots to zero
    pub clipped_cum: f64,
}

impl MassLedger {
    pub fn new(initial_mass: f64) -> Self {
        Self {
            initial_mass,
            interior_mass: initial_mass,
            ..Self::default()
        }
    }

    pub fn for_field(f: &DensityField, g: &Grid2D) -> Self {
        Self::new(diagnostics(f, g).total_mass)
    }

    /// Relative closure defect of the balance.
    pub fn closure_defect(&self) -> f64 {
        let residual = self.interior_mass + self.exit_outflow_cum + self.mortality_cum
            - self.clipped_cum
            - self.initial_mass;
        if self.initial_mass > 0.0 {
            residual.abs() / self.initial_mass
        } else {
            residual.abs()
        }
    }
}

/// Time stepping controls.
#[derive(Debug, Clone, PartialEq)]
pub struct StepControl {
    pub cfl_safety: f64,
    /// upper bound on the step when the stability limits are loose
    pub dt_max: f64,
    pub t_end: f64,
    /// interval between time-series rows
    pub output_interval: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            cfl_safety: 0.5,
            dt_max: 0.01,
            t_end: 250.0,
            output_interval: 1.0,
            snapshot_times: vec![50.0, 100.0, 150.0, 200.0, 250.0],
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidControl(m));
        if !(self.cfl_safety > 0.0 && self.cfl_safety.is_finite()) {
            return bad(format!(
                "cfl_safety must be positive, got {}",
                self.cfl_safety
            ));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad(format!("dt_max must be positive, got {}", self.dt_max));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if !(self.output_interval > 0.0 && self.output_interval.is_finite()) {
            return bad(format!(
                "output_interval must be positive, got {}",
                self.output_interval
            ));
        }
        if self.t_end / self.output_interval > MAX_OUTPUT_ROWS {
            return bad(format!(
                "output_interval {} gives more than {MAX_OUTPUT_ROWS} rows up to t_end = {}",
                self.output_interval, self.t_end
            ));
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_end))
        {
            return bad(format!("snapshot time {t} is outside [0, {}]", self.t_end));
        }
        Ok(())
    }

    /// Times that get a time-series row: 0, every `output_interval`, and `t_end`.
    pub fn output_times(&self) -> Vec<f64> {
        let mut times = vec![0.0];
        let mut k = 1u64;
        loop {
            let t = k as f64 * self.output_interval;
            if t >= self.t_end {
                break;
            }
            times.push(t);
            k += 1;
        }
        if self.t_end > 0.0 {
            times.push(self.t_end);
        }
        times
    }

    /// Sorted, deduplicated times at which the run must stop exactly.
    fn event_times(&self) -> Vec<f64> {
        let mut times = self.output_times();
        times.extend(self.snapshot_times.iter().copied());
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }
}

/// Largest stable explicit step:
/// `safety * min(h^2 / (4 d_max), h / (max advective + exit speed))`,
/// capped at `dt_max`.
pub fn cfl_dt(
    g: &Grid2D,
    tp: &TransportParams,
    max_advective_speed: f64,
    safety: f64,
    dt_max: f64,
) -> f64 {
    let h = g.dx.min(g.dy);
    let d = tp.max_diffusion();
    let diffusive = if d > 0.0 {
        h * h / (4.0 * d)
    } else {
        f64::INFINITY
    };
    let speed = max_advective_speed.abs() + tp.max_exit_speed();
    let advective = if speed > 0.0 {
        h / speed
    } else {
        f64::INFINITY
    };
    (safety * diffusive.min(advective)).min(dt_max)
}

/// Default depth, in cells, of the region next to an exit.
pub const EXIT_REGION_DEPTH: usize = 3;

/// Largest density of `species` over the cells within `depth` cells of an
/// exit; zero when there is no exit.
pub fn exit_region_peak(f: &DensityField, g: &Grid2D, species: usize, depth: usize) -> f64 {
    g.exit_region(depth)
        .into_iter()
        .map(|c| f.rho[species][c])
        .fold(0.0, f64::max)
}

/// Face fluxes per unit face length, positive in the +x / +y direction.
/// Boundary faces hold the signed exit flux (zero on walls).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxes {
    pub x: [Vec<f64>; SPECIES],
    pub y: [Vec<f64>; SPECIES],
}

impl FaceFluxes {
    fn zeros(g: &Grid2D) -> Self {
        Self {
            x: std::array::from_fn(|_| vec![0.0; (g.nx + 1) * g.ny]),
            y: std::array::from_fn(|_| vec![0.0; g.nx * (g.ny + 1)]),
        }
    }
}

/// Everything that defines the spatial problem apart from the state.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid2D,
    pub direction: DirectionField,
    pub behavior: BehaviorParams,
    pub transport: TransportParams,
    pub schedule: TransitionSchedule,
}

impl Problem {
    pub fn validate(&self) -> Result<(), SolverError> {
        self.transport.validate()?;
        self.behavior
            .validate()
            .map_err(|e| SolverError::InvalidTransport(e.to_string()))?;
        self.schedule
            .validate()
            .map_err(|e| SolverError::InvalidTransport(e.to_string()))?;
        let g = &self.grid;
        if self.direction.cell.len() != g.len()
            || self.direction.x_face.len() != (g.nx + 1) * g.ny
            || self.direction.y_face.len() != g.nx * (g.ny + 1)
        {
            return Err(SolverError::Shape(
                "direction field does not match the grid".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step counters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub dt: f64,
    /// smallest density produced by the update, before clipping
    pub min_density: f64,
    pub clipped: usize,
    /// cells where the velocity clamp was active
    pub clamped: usize,
    /// negative inputs seen by the kinetics
    pub negative_inputs: usize,
    pub outflow: f64,
    pub mortality: f64,
}

/// Explicit stepper with reusable scratch buffers.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    problem: &'a Problem,
    fluxes: FaceFluxes,
    speed: [Vec<f64>; 2],
    rates: [Vec<f64>; SPECIES],
    /// `1/h` on faces between two interior cells, 0 elsewhere
    x_coef: Vec<f64>,
    y_coef: Vec<f64>,
    /// face-normal direction split into its positive and negative parts,
    /// zero on closed faces
    x_up: [Vec<f64>; 2],
    y_up: [Vec<f64>; 2],
    exits: Vec<ExitFace>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a Problem) -> Self {
        let g = &problem.grid;
        let df = &problem.direction;
        let (nx, ny) = (g.nx, g.ny);
        let xs = nx + 1;
        let mut x_coef = vec![0.0; xs * ny];
        let mut x_up = [vec![0.0; xs * ny], vec![0.0; xs * ny]];
        for j in 0..ny {
            for i in 1..nx {
                let k = j * xs + i;
                if g.is_interior(j * nx + i - 1) && g.is_interior(j * nx + i) {
                    x_coef[k] = 1.0 / g.dx;
                    x_up[0][k] = df.x_face[k].max(0.0);
                    x_up[1][k] = df.x_face[k].min(0.0);
                }
            }
        }
        let mut y_coef = vec![0.0; nx * (ny + 1)];
        let mut y_up = [vec![0.0; nx * (ny + 1)], vec![0.0; nx * (ny + 1)]];
        for j in 1..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if g.is_interior(k - nx) && g.is_interior(k) {
                    y_coef[k] = 1.0 / g.dy;
                    y_up[0][k] = df.y_face[k].max(0.0);
                    y_up[1][k] = df.y_face[k].min(0.0);
                }
            }
        }
        Self {
            problem,
            fluxes: FaceFluxes::zeros(g),
            speed: [vec![0.0; g.len()], vec![0.0; g.len()]],
            rates: std::array::from_fn(|_| vec![0.0; g.len()]),
            x_coef,
            y_coef,
            x_up,
            y_up,
            exits: g.exit_faces().collect(),
        }
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    /// Computes speeds from the local total density; returns the largest
    /// speed magnitude and the number of clamped cells. Obstacle cells hold
    /// zero density and never count as clamped.
    fn update_speeds(&mut self, f: &DensityField) -> (f64, usize) {
        let tp = &self.problem.transport;
        let [r0, r1, r2, r3, r4] = &f.rho;
        let [v2, v3] = &mut self.speed;
        let mut max_speed: f64 = 0.0;
        let mut clamped = 0;
        let cells = r0.iter().zip(r1).zip(r2).zip(r3).zip(r4);
        for (((((a, b), c), d), e), (s2, s3)) in cells.zip(v2.iter_mut().zip(v3.iter_mut())) {
            let total = a + b + c + d + e;
            clamped += usize::from(total > 1.0);
            let (u2, u3) = speeds(total, tp);
            *s2 = u2;
            *s3 = u3;
            max_speed = max_speed.max(u2.abs()).max(u3.abs());
        }
        if !tp.clamp_velocity {
            clamped = 0;
        }
        (max_speed, clamped)
    }

    /// Stable step for the current state.
    pub fn stable_dt(&mut self, f: &DensityField, safety: f64, dt_max: f64) -> f64 {
        let (max_speed, _) = self.update_speeds(f);
        cfl_dt(
            &self.problem.grid,
            &self.problem.transport,
            max_speed,
            safety,
            dt_max,
        )
    }

    fn assemble(&mut self, f: &DensityField) {
        let g = &self.problem.grid;
        let tp = &self.problem.transport;
        let (nx, ny) = (g.nx, g.ny);
        let xs = nx + 1;

        for s in 0..SPECIES {
            let rho = &f.rho[s];
            let d = tp.diffusion[s];
            let advected = match s {
                PANIC => Some(&self.speed[0]),
                CONTROL => Some(&self.speed[1]),
                _ => None,
            };
            let fx = &mut self.fluxes.x[s];
            for j in 0..ny {
                let cells = j * nx..(j + 1) * nx;
                let faces = j * xs + 1..j * xs + nx;
                let pairs = rho[cells.clone()]
                    .windows(2)
                    .zip(&self.x_coef[faces.clone()]);
                match advected {
                    None => {
                        for (flux, (w, c)) in fx[faces].iter_mut().zip(pairs) {
                            *flux = -d * (w[1] - w[0]) * c;
                        }
                    }
                    Some(v) => {
                        let up = self.x_up[0][faces.clone()]
                            .iter()
                            .zip(&self.x_up[1][faces.clone()]);
                        let iter = pairs.zip(v[cells].windows(2)).zip(up);
                        for (flux, (((w, c), vw), (p, n))) in fx[faces].iter_mut().zip(iter) {
                            *flux = -d * (w[1] - w[0]) * c + w[0] * vw[0] * p + w[1] * vw[1] * n;
                        }
                    }
                }
            }
            let fy = &mut self.fluxes.y[s];
            for j in 1..ny {
                let below = &rho[(j - 1) * nx..j * nx];
                let above = &rho[j * nx..(j + 1) * nx];
                let faces = j * nx..(j + 1) * nx;
                let pairs = below.iter().zip(above).zip(&self.y_coef[faces.clone()]);
                match advected {
                    None => {
                        for (flux, ((b, t), c)) in fy[faces].iter_mut().zip(pairs) {
                            *flux = -d * (t - b) * c;
                        }
                    }
                    Some(v) => {
                        let vb = &v[(j - 1) * nx..j * nx];
                        let vt = &v[j * nx..(j + 1) * nx];
                        let up = self.y_up[0][faces.clone()]
                            .iter()
                            .zip(&self.y_up[1][faces.clone()]);
                        let iter = pairs.zip(vb.iter().zip(vt)).zip(up);
                        for (flux, ((((b, t), c), (sb, st)), (p, n))) in
                            fy[faces].iter_mut().zip(iter)
                        {
                            *flux = -d * (t - b) * c + b * sb * p + t * st * n;
                        }
                    }
                }
            }
        }

        // Outer boundary: walls stay zero from construction; exit faces
        // carry rho * v_out outward.
        for face in &self.exits {
            let (i, j) = (face.cell % nx, face.cell / nx);
            for s in 0..SPECIES {
                let out = f.rho[s][face.cell] * tp.v_out[s];
                match face.side {
                    Side::Left => self.fluxes.x[s][j * xs] = -out,
                    Side::Right => self.fluxes.x[s][j * xs + nx] = out,
                    Side::Bottom => self.fluxes.y[s][i] = -out,
                    Side::Top => self.fluxes.y[s][ny * nx + i] = out,
                }
            }
        }
    }

    /// Advances `f` by one forward-Euler step of length `dt` and books the
    /// exit and mortality sinks in `ledger`. `dt` should not exceed
    /// [`Stepper::stable_dt`]; larger steps are taken as given.
    pub fn step(
        &mut self,
        f: &mut DensityField,
        ledger: &mut MassLedger,
        dt: f64,
    ) -> Result<StepReport, SolverError> {
        f.check_shape(&self.problem.grid)?;
        let (_, clamped) = self.update_speeds(f);
        self.assemble(f);

        let Problem {
            grid: g,
            behavior: p,
            transport: tp,
            schedule,
            ..
        } = self.problem;
        let (nx, ny) = (g.nx, g.ny);
        let xs = nx + 1;
        let area = g.cell_area();
        let gamma = schedule.gamma_at(f.t);
        let phi = schedule.phi_at(f.t);

        let mut outflow = 0.0;
        for face in &self.exits {
            for s in 0..SPECIES {
                outflow += f.rho[s][face.cell] * tp.v_out[s] * face.length;
            }
        }
        outflow *= dt;

        let mut report = StepReport {
            dt,
            clamped,
            ..StepReport::default()
        };
        let mut mortality = 0.0;
        for cell in 0..g.len() {
            if !g.is_interior(cell) {
                continue;
            }
            let local = f.local(cell);
            report.negative_inputs += local.iter().filter(|v| **v < 0.0).count();
            let rates = local_rates(&local, gamma, phi, p);
            mortality += mortality_rate(&local, p);
            for (s, r) in rates.into_iter().enumerate() {
                self.rates[s][cell] = r;
            }
        }
        mortality *= dt * area;

        // Obstacle cells have zero rates and closed faces, so they stay zero.
        let (inv_dx, inv_dy) = (1.0 / g.dx, 1.0 / g.dy);
        let mut min = f64::INFINITY;
        let mut sum = CompensatedSum::default();
        for s in 0..SPECIES {
            let (fx, fy) = (&self.fluxes.x[s], &self.fluxes.y[s]);
            for j in 0..ny {
                let cells = j * nx..(j + 1) * nx;
                let lo = &fy[j * nx..(j + 1) * nx];
                let hi = &fy[(j + 1) * nx..(j + 2) * nx];
                let iter = fx[j * xs..(j + 1) * xs]
                    .windows(2)
                    .zip(lo.iter().zip(hi))
                    .zip(&self.rates[s][cells.clone()]);
                let mut row = 0.0;
                for (v, ((wx, (l, h)), rate)) in f.rho[s][cells].iter_mut().zip(iter) {
                    let div = (wx[1] - wx[0]) * inv_dx + (h - l) * inv_dy;
                    *v += dt * (rate - div);
                    min = min.min(*v);
                    row += *v;
                }
                sum.add(row);
            }
        }

        let t_new = f.t + dt;
        if !(min >= 0.0 && sum.value().is_finite()) {
            sum = CompensatedSum::default();
            min = f64::INFINITY;
            for s in 0..SPECIES {
                for cell in 0..g.len() {
                    let v = &mut f.rho[s][cell];
                    if !v.is_finite() {
                        return Err(SolverError::NonFinite {
                            t: t_new,
                            species: s,
                            cell,
                        });
                    }
                    min = min.min(*v);
                    if *v < ABORT_UNDERSHOOT {
                        return Err(SolverError::Undershoot {
                            t: t_new,
                            species: s,
                            cell,
                            value: *v,
                        });
                    }
                    if *v < 0.0 && *v > -CLIP_TOLERANCE {
                        report.clipped += 1;
                        ledger.clipped_cum += -*v * area;
                        *v = 0.0;
                    }
                    sum.add(*v);
                }
            }
        }
        report.min_density = min;

        f.t = t_new;
        ledger.exit_outflow_cum += outflow;
        ledger.mortality_cum += mortality;
        ledger.interior_mass = sum.value() * area;
        report.outflow = outflow;
        report.mortality = mortality;
        Ok(report)
    }

    /// Face fluxes of the last assembled state.
    pub fn fluxes(&self) -> &FaceFluxes {
        &self.fluxes
    }
}

/// Face fluxes for `f` (allocating convenience wrapper).
pub fn assemble_fluxes(f: &DensityField, problem: &Problem) -> FaceFluxes {
    let mut stepper = Stepper::new(problem);
    stepper.update_speeds(f);
    stepper.assemble(f);
    stepper.fluxes
}

/// One row of the aggregate time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub diagnostics: Diagnostics,
    pub outflow_cum: f64,
    pub mortality_cum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub steps: u64,
    pub min_density: f64,
    pub max_total_density: f64,
    /// largest single-step increase of the interior mass
    pub max_mass_increase: f64,
    pub clipped: u64,
    /// cell-steps with the velocity clamp active
    pub clamped: u64,
    pub negative_inputs: u64,
    pub max_closure_defect: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<DensityField>,
    pub series: Vec<SeriesRow>,
    pub ledger: MassLedger,
    pub stats: RunStats,
    pub final_field: DensityField,
}

/// Integrates from `initial` to `control.t_end`, stopping exactly on every
/// output and snapshot time.
pub fn run(
    problem: &Problem,
    initial: DensityField,
    control: &StepControl,
) -> Result<RunOutput, SolverError> {
    problem.validate()?;
    control.validate()?;
    initial.check_shape(&problem.grid)?;
    let g = &problem.grid;

    let mut field = initial;
    let mut ledger = MassLedger::for_field(&field, g);
    let first = diagnostics(&field, g);
    let mut stats = RunStats {
        min_density: first.min_value,
        max_total_density: first.max_total_density,
        ..RunStats::default()
    };
    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    let row = |d: Diagnostics, l: &MassLedger| SeriesRow {
        diagnostics: d,
        outflow_cum: l.exit_outflow_cum,
        mortality_cum: l.mortality_cum,
    };

    let output_times = control.output_times();
    let mut warned = false;
    let mut stepper = Stepper::new(problem);
    let mut mass = first.total_mass;

    for target in control.event_times() {
        while field.t < target {
            let dt = stepper
                .stable_dt(&field, control.cfl_safety, control.dt_max)
                .min(target - field.t);
            let report = stepper.step(&mut field, &mut ledger, dt)?;
            // land exactly on the event time
            if (target - field.t).abs() < 1e-12 * target.max(1.0) {
                field.t = target;
            }
            stats.steps += 1;
            stats.min_density = stats.min_density.min(report.min_density);
            stats.clipped += report.clipped as u64;
            stats.clamped += report.clamped as u64;
            stats.negative_inputs += report.negative_inputs as u64;
            stats.max_mass_increase = stats.max_mass_increase.max(ledger.interior_mass - mass);
            stats.max_closure_defect = stats.max_closure_defect.max(ledger.closure_defect());
            mass = ledger.interior_mass;
        }
        let d = diagnostics(&field, g);
        stats.max_total_density = stats.max_total_density.max(d.max_total_density);
        if d.max_total_density > 1.0 && !warned {
            log::warn!(
                "total density {:.3} exceeds 1 at t = {}; speeds are {}",
                d.max_total_density,
                field.t,
                if problem.transport.clamp_velocity {
                    "clamped to zero there"
                } else {
                    "negative there"
                }
            );
            warned = true;
        }
        if output_times.contains(&target) {
            series.push(row(d, &ledger));
        }
        if control.snapshot_times.contains(&target) {
            snapshots.push(field.clone());
        }
    }

    Ok(RunOutput {
        snapshots,
        series,
        ledger,
        stats,
        final_field: field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ExitSpec, GeometrySpec};
    use crate::kinetics::Ramp;

    fn small_problem(
        nx: usize,
        ny: usize,
        exit: bool,
        tp: TransportParams,
        p: BehaviorParams,
    ) -> Problem {
        let spec = GeometrySpec {
            origin: [0.0, 0.0],
            width: nx as f64 * 0.1,
            height: ny as f64 * 0.1,
            nx,
            ny,
            exit: exit.then_some(ExitSpec {
                side: Side::Right,
                start: 0.0,
                end: ny as f64 * 0.1,
            }),
            obstacles: vec![],
        };
        let grid = Grid2D::build(&spec).unwrap();
        let target = [nx as f64 * 0.1 + 0.3, ny as f64 * 0.05];
        let direction = DirectionField::toward_target(&grid, target).unwrap();
        Problem {
            grid,
            direction,
            behavior: p,
            transport: tp,
            schedule: TransitionSchedule::no_return(),
        }
    }

    #[test]
    fn velocity_closure_examples() {
        let tp = TransportParams::reference();
        assert_eq!(velocity_closure(&[0.0; 5], &tp), (0.3, 0.2));
        assert_eq!(
            velocity_closure(&[0.2, 0.2, 0.2, 0.2, 0.2], &tp),
            (0.0, 0.0)
        );
        let (v2, v3) = velocity_closure(&[0.1, 0.1, 0.1, 0.1, 0.1], &tp);
        assert!((v2 - 0.15).abs() < 1e-15 && (v3 - 0.10).abs() < 1e-15);
        assert_eq!(
            velocity_closure(&[2.0, 0.0, 0.0, 0.0, 0.0], &tp),
            (0.0, 0.0)
        );
        let strict = TransportParams {
            clamp_velocity: false,
            ..tp
        };
        let (v2, _) = velocity_closure(&[2.0, 0.0, 0.0, 0.0, 0.0], &strict);
        assert!((v2 + 0.3).abs() < 1e-15);
    }

    #[test]
    fn uniform_field_has_no_interior_diffusive_flux() {
        let tp = TransportParams {
            v2_max: 0.0,
            v3_max: 0.0,
            ..TransportParams::reference()
        };
        let pb = small_problem(5, 4, true, tp, BehaviorParams::low_risk_culture());
        let mut f = DensityField::zeros(&pb.grid);
        for s in 0..SPECIES {
            f.rho[s].fill(0.1);
        }
        let fl = assemble_fluxes(&f, &pb);
        for s in 0..SPECIES {
            for j in 0..4 {
                for i in 0..5 {
                    assert_eq!(fl.x[s][j * 6 + i], 0.0);
                }
            }
            assert!(fl.y[s].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn walls_carry_no_flux_and_exits_carry_rho_v_out() {
        let pb = small_problem(
            4,
            3,
            true,
            TransportParams::reference(),
            BehaviorParams::low_risk_culture(),
        );
        let mut f = DensityField::zeros(&pb.grid);
        for s in 0..SPECIES {
            for (c, v) in f.rho[s].iter_mut().enumerate() {
                *v = 0.05 * (c + s) as f64;
            }
        }
        f.rho[PANIC][pb.grid.idx(3, 1)] = 0.4;
        let fl = assemble_fluxes(&f, &pb);
        for s in 0..SPECIES {
            for j in 0..3 {
                assert_eq!(fl.x[s][j * 5], 0.0, "left wall");
            }
            for i in 0..4 {
                assert_eq!(fl.y[s][i], 0.0);
                assert_eq!(fl.y[s][3 * 4 + i], 0.0);
            }
        }
        // v2_out = 0.1 in the reference transport
        assert!((fl.x[PANIC][5 + 4] - 0.04).abs() < 1e-16);
    }

    #[test]
    fn cfl_examples() {
        let g = Grid2D::build(&GeometrySpec::default()).unwrap();
        assert_eq!(cfl_dt(&g, &TransportParams::frozen(), 0.0, 0.5, 0.01), 0.01);
        let tp = TransportParams {
            diffusion: [0.05; 5],
            v_out: [0.0; 5],
            ..TransportParams::frozen()
        };
        let dt = cfl_dt(&g, &tp, 0.0, 0.5, 1.0);
        assert!((dt - 0.001).abs() < 1e-15);
        // full reference: diffusion bound 0.002, advective 0.02 / 0.6
        let dt = cfl_dt(&g, &TransportParams::reference(), 0.3, 1.0, 1.0);
        assert!((dt - 0.002f64.min(0.02 / 0.6)).abs() < 1e-15);
    }

    #[test]
    fn zero_field_stays_zero() {
        let pb = small_problem(
            5,
            5,
            true,
            TransportParams::reference(),
            BehaviorParams::low_risk_culture(),
        );
        let mut f = DensityField::zeros(&pb.grid);
        let mut ledger = MassLedger::for_field(&f, &pb.grid);
        let before = ledger;
        let mut st = Stepper::new(&pb);
        st.step(&mut f, &mut ledger, 0.01).unwrap();
        assert!(f.rho.iter().all(|r| r.iter().all(|v| *v == 0.0)));
        assert_eq!(ledger.exit_outflow_cum, before.exit_outflow_cum);
        assert_eq!(ledger.interior_mass, 0.0);
    }

    #[test]
    fn sealed_uniform_step_matches_reaction_step() {
        let p = BehaviorParams {
            delta2: 0.05,
            ..BehaviorParams::low_risk_culture()
        };
        let pb = small_problem(4, 4, false, TransportParams::frozen(), p);
        let local = [0.2, 0.1, 0.05, 0.3, 0.0];
        let mut f = DensityField::zeros(&pb.grid);
        for (rho, v) in f.rho.iter_mut().zip(local) {
            rho.fill(v);
        }
        let mut ledger = MassLedger::for_field(&f, &pb.grid);
        let dt = 0.01;
        Stepper::new(&pb).step(&mut f, &mut ledger, dt).unwrap();
        let r = crate::kinetics::reaction_rhs_pde(0.0, &local, &pb.schedule, &p);
        for s in 0..SPECIES {
            let want = local[s] + dt * r[s];
            assert!(f.rho[s].iter().all(|v| *v == want));
        }
        assert!(ledger.closure_defect() < 1e-14);
        assert!(ledger.mortality_cum > 0.0);
    }

    #[test]
    fn undershoot_aborts() {
        let tp = TransportParams {
            diffusion: [1.0; 5],
            ..TransportParams::frozen()
        };
        let pb = small_problem(4, 4, false, tp, BehaviorParams::inert());
        let mut f = DensityField::zeros(&pb.grid);
        f.rho[0][5] = 1.0;
        let mut ledger = MassLedger::for_field(&f, &pb.grid);
        // 20x the stable step
        let err = Stepper::new(&pb)
            .step(&mut f, &mut ledger, 0.05)
            .unwrap_err();
        assert!(matches!(err, SolverError::Undershoot { .. }));
    }

    #[test]
    fn zero_length_run_returns_initial_snapshot() {
        let pb = small_problem(
            4,
            4,
            true,
            TransportParams::reference(),
            BehaviorParams::low_risk_culture(),
        );
        let mut f = DensityField::zeros(&pb.grid);
        f.rho[3].fill(1.0 / 0.16);
        let control = StepControl {
            t_end: 0.0,
            snapshot_times: vec![0.0],
            ..StepControl::default()
        };
        let out = run(&pb, f.clone(), &control).unwrap();
        assert_eq!(out.snapshots, vec![f]);
        assert_eq!(out.series.len(), 1);
        assert_eq!(out.stats.steps, 0);
    }

    #[test]
    fn run_lands_on_event_times() {
        let pb = small_problem(
            5,
            4,
            true,
            TransportParams::reference(),
            BehaviorParams::low_risk_culture(),
        );
        let mut f = DensityField::zeros(&pb.grid);
        f.rho[3][7] = 10.0;
        let control = StepControl {
            t_end: 2.5,
            output_interval: 1.0,
            snapshot_times: vec![0.75, 2.5],
            ..StepControl::default()
        };
        let out = run(&pb, f, &control).unwrap();
        let ts: Vec<f64> = out.series.iter().map(|r| r.diagnostics.t).collect();
        assert_eq!(ts, vec![0.0, 1.0, 2.0, 2.5]);
        let snaps: Vec<f64> = out.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(snaps, vec![0.75, 2.5]);
        assert!(out.ledger.closure_defect() < 1e-13);
        assert!(out.ledger.exit_outflow_cum > 0.0);
    }

    #[test]
    fn invalid_control_rejected() {
        let pb = small_problem(
            4,
            4,
            true,
            TransportParams::reference(),
            BehaviorParams::low_risk_culture(),
        );
        let f = DensityField::zeros(&pb.grid);
        let control = StepControl {
            t_end: 1.0,
            snapshot_times: vec![2.0],
            ..StepControl::default()
        };
        assert!(matches!(
            run(&pb, f, &control),
            Err(SolverError::InvalidControl(_))
        ));
    }

    #[test]
    fn smooth_schedule_is_evaluated_at_step_start() {
        let mut pb = small_problem(
            4,
            4,
            false,
            TransportParams::frozen(),
            BehaviorParams::inert(),
        );
        pb.schedule = TransitionSchedule {
            gamma: Ramp::Smoothstep {
                start: 1.0,
                end: 3.0,
            },
            phi: Ramp::Constant(0.0),
        };
        let mut f = DensityField::zeros(&pb.grid);
        f.rho[3].fill(1.0);
        f.t = 2.0;
        let mut ledger = MassLedger::for_field(&f, &pb.grid);
        Stepper::new(&pb).step(&mut f, &mut ledger, 0.1).unwrap();
        assert!((f.rho[0][0] - 0.05).abs() < 1e-15);
    }
}
