//! Run descriptions and the line-oriented config format.
//!
//! A config document is a list of `section.key = value` lines. `#` starts a
//! comment, blank lines are ignored, lists are comma-separated. Keys not
//! listed in [`KEYS`] are rejected. Unset keys keep the `scenario1` values.
//!
//! ```text
//! # scenario 3 with a slower panic exit
//! run.name = scenario3-slow
//! geometry.obstacles = 1.5, 0.34, 1.6, 0.66
//! transport.v2_out = 0.05
//! schedule.gamma = smoothstep, 1, 3
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::grid::{DirectionField, ExitSpec, GeometryError, GeometrySpec, Grid2D, Rect, Side};
use crate::kinetics::{BehaviorParams, Ramp, TransitionSchedule, DAILY_BEFORE};
use crate::solver::{DensityField, Problem, StepControl, TransportParams};

pub const BUILTIN_NAMES: [&str; 3] = ["scenario1", "scenario2", "scenario3"];

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "geometry.origin",
    "geometry.width",
    "geometry.height",
    "geometry.nx",
    "geometry.ny",
    "geometry.exit_side",
    "geometry.exit_start",
    "geometry.exit_end",
    "geometry.target",
    "geometry.target_offset",
    "geometry.obstacles",
    "behavior.b1",
    "behavior.b2",
    "behavior.b3",
    "behavior.b4",
    "behavior.c1",
    "behavior.c2",
    "behavior.delta1",
    "behavior.delta2",
    "behavior.delta3",
    "behavior.alpha13",
    "behavior.alpha12",
    "behavior.alpha23",
    "behavior.alpha32",
    "behavior.epsilon",
    "transport.d1",
    "transport.d2",
    "transport.d3",
    "transport.d4",
    "transport.d5",
    "transport.v2_max",
    "transport.v3_max",
    "transport.v1_out",
    "transport.v2_out",
    "transport.v3_out",
    "transport.v4_out",
    "transport.v5_out",
    "transport.clamp_velocity",
    "schedule.gamma",
    "schedule.phi",
    "initial.bumps",
    "run.name",
    "run.t_end",
    "run.cfl_safety",
    "run.dt_max",
    "run.output_interval",
    "run.snapshot_times",
    "output.dir",
    "output.heatmaps",
];

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based line of the offending entry; 0 when it comes from an
    /// override or a default.
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("initial density vanishes on every interior cell")]
    EmptyInitialDensity,
}

/// Truncated Gaussian cluster of the initial population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: [f64; 2],
    /// twice the standard deviation; the bump is cut off at 1.5 radii
    pub radius: f64,
    pub weight: f64,
}

impl Bump {
    pub fn sigma(&self) -> f64 {
        0.5 * self.radius
    }

    /// Unnormalized profile at `(x, y)`.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let s = self.sigma();
        let r2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        if r2 > 9.0 * s * s {
            0.0
        } else {
            self.weight * (-r2 / (2.0 * s * s)).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    /// `None` defers to the caller (CLI flag or environment).
    pub dir: Option<PathBuf>,
    pub heatmaps: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub geometry: GeometrySpec,
    /// explicit direction target; derived from the exit when absent
    pub target: Option<[f64; 2]>,
    /// distance of the derived target beyond the exit midpoint
    pub target_offset: f64,
    pub behavior: BehaviorParams,
    pub transport: TransportParams,
    pub schedule: TransitionSchedule,
    pub bumps: Vec<Bump>,
    pub control: StepControl,
    pub output: OutputConfig,
}

/// Obstacle in front of the exit used by `scenario3`.
pub const SCENARIO3_OBSTACLE: Rect = Rect {
    x0: 1.5,
    y0: 0.34,
    x1: 1.6,
    y1: 0.66,
};

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::scenario1()
    }
}

impl ScenarioConfig {
    /// One cluster in the middle of the room.
    pub fn scenario1() -> Self {
        Self {
            name: "scenario1".into(),
            geometry: GeometrySpec::default(),
            target: None,
            target_offset: 0.25,
            behavior: BehaviorParams::low_risk_culture(),
            transport: TransportParams::reference(),
            schedule: TransitionSchedule::no_return(),
            bumps: vec![Bump {
                center: [1.0, 0.5],
                radius: 0.2,
                weight: 1.0,
            }],
            control: StepControl::default(),
            output: OutputConfig {
                dir: None,
                heatmaps: true,
            },
        }
    }

    /// The same population split into three separated groups.
    pub fn scenario2() -> Self {
        let bump = |x, y| Bump {
            center: [x, y],
            radius: 0.12,
            weight: 1.0,
        };
        Self {
            name: "scenario2".into(),
            bumps: vec![bump(0.6, 0.25), bump(0.6, 0.75), bump(1.2, 0.5)],
            ..Self::scenario1()
        }
    }

    /// One central cluster with an obstacle between it and the exit.
    pub fn scenario3() -> Self {
        let mut cfg = Self::scenario1();
        cfg.name = "scenario3".into();
        cfg.geometry.obstacles.push(SCENARIO3_OBSTACLE);
        cfg
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "scenario1" => Some(Self::scenario1()),
            "scenario2" => Some(Self::scenario2()),
            "scenario3" => Some(Self::scenario3()),
            _ => None,
        }
    }

    /// Parses a config document on top of the `scenario1` defaults and
    /// validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::scenario1();
        let lines = cfg.apply_document(text)?;
        cfg.validate_with_lines(&lines)?;
        Ok(cfg)
    }

    /// Applies every line of `text`; returns the line number of each key.
    pub fn apply_document(&mut self, text: &str) -> Result<HashMap<String, usize>, ConfigError> {
        let mut seen = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                ConfigError::new(
                    line,
                    format!("expected `section.key = value`, got `{content}`"),
                )
            })?;
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(ConfigError::new(
                    line,
                    format!("`{key}` already set on line {prev}"),
                ));
            }
            self.set(key, value.trim())
                .map_err(|m| ConfigError::new(line, m))?;
        }
        Ok(seen)
    }

    /// Applies a single `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            ConfigError::new(
                0,
                format!("override `{assignment}` is not `section.key=value`"),
            )
        })?;
        self.set(key.trim(), value.trim())
            .map_err(|m| ConfigError::new(0, format!("override `{assignment}`: {m}")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with_lines(&HashMap::new())
    }

    fn validate_with_lines(&self, lines: &HashMap<String, usize>) -> Result<(), ConfigError> {
        self.check().map_err(|(keys, message)| {
            let line = keys
                .iter()
                .filter_map(|k| lines.get(*k))
                .copied()
                .max()
                .unwrap_or(0);
            ConfigError::new(line, message)
        })
    }

    /// Cross-field checks; on failure returns the keys involved.
    fn check(&self) -> Result<(), (Vec<&'static str>, String)> {
        let fail = |keys: &[&'static str], m: String| Err((keys.to_vec(), m));
        if let Err(e) = self.behavior.validate() {
            return fail(&behavior_keys(), e.to_string());
        }
        if let Err(e) = self.schedule.validate() {
            return fail(&["schedule.gamma", "schedule.phi"], e.to_string());
        }
        if let Err(e) = self.transport.validate() {
            return fail(&transport_keys(), e.to_string());
        }
        if let Err(e) = self.control.validate() {
            return fail(
                &[
                    "run.t_end",
                    "run.cfl_safety",
                    "run.dt_max",
                    "run.output_interval",
                    "run.snapshot_times",
                ],
                e.to_string(),
            );
        }
        if self.bumps.is_empty() {
            return fail(
                &["initial.bumps"],
                "at least one initial bump is required".into(),
            );
        }
        for b in &self.bumps {
            if !(b.radius > 0.0 && b.radius.is_finite())
                || !(b.weight > 0.0 && b.weight.is_finite())
                || !b.center.iter().all(|c| c.is_finite())
            {
                return fail(
                    &["initial.bumps"],
                    format!(
                        "bump {:?} needs a finite center and positive radius and weight",
                        b
                    ),
                );
            }
        }
        if !(self.target_offset > 0.0 && self.target_offset.is_finite()) {
            return fail(
                &["geometry.target_offset"],
                "target_offset must be positive".into(),
            );
        }
        let grid = match Grid2D::build(&self.geometry) {
            Ok(g) => g,
            Err(e) => {
                let keys: &[&'static str] = match e {
                    GeometryError::TooSmall { .. } | GeometryError::TooLarge { .. } => {
                        &["geometry.nx", "geometry.ny"]
                    }
                    GeometryError::BadExtent { .. } => {
                        &["geometry.width", "geometry.height", "geometry.origin"]
                    }
                    GeometryError::BadObstacle { .. } | GeometryError::EmptyInterior => {
                        &["geometry.obstacles"]
                    }
                    _ => &[
                        "geometry.exit_side",
                        "geometry.exit_start",
                        "geometry.exit_end",
                        "geometry.obstacles",
                    ],
                };
                return fail(keys, e.to_string());
            }
        };
        if let Err(e) = self
            .direction_target(&grid)
            .and_then(|t| DirectionField::toward_target(&grid, t).map(|_| ()))
        {
            return fail(&["geometry.target", "geometry.exit_side"], e.to_string());
        }
        Ok(())
    }

    /// Target point of the desired direction.
    pub fn direction_target(&self, g: &Grid2D) -> Result<[f64; 2], GeometryError> {
        if let Some(t) = self.target {
            return Ok(t);
        }
        let (mid, n) = g.exit_midpoint().ok_or(GeometryError::EmptyExit)?;
        Ok([
            mid[0] + self.target_offset * n[0],
            mid[1] + self.target_offset * n[1],
        ])
    }

    /// Builds the grid, direction field and initial state.
    pub fn build(&self) -> Result<(Problem, DensityField), ScenarioError> {
        self.validate()?;
        let grid = Grid2D::build(&self.geometry)?;
        let direction = DirectionField::toward_target(&grid, self.direction_target(&grid)?)?;
        let blocked = direction.cells_pointing_into_walls(&grid);
        if blocked > 0 {
            log::info!(
                "{}: direction points into a wall in {blocked} cells",
                self.name
            );
        }
        let initial = initial_field(self, &grid)?;
        let problem = Problem {
            grid,
            direction,
            behavior: self.behavior,
            transport: self.transport,
            schedule: self.schedule,
        };
        Ok((problem, initial))
    }

    /// Full config text with every key set; `parse(echo())` reproduces
    /// `self`.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let s = key.split('.').next().unwrap_or("");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "# {s}");
                section = s;
            }
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    fn get(&self, key: &str) -> String {
        let g = &self.geometry;
        let b = &self.behavior;
        let tp = &self.transport;
        let c = &self.control;
        let exit = g.exit;
        match key {
            "geometry.origin" => list(&g.origin),
            "geometry.width" => g.width.to_string(),
            "geometry.height" => g.height.to_string(),
            "geometry.nx" => g.nx.to_string(),
            "geometry.ny" => g.ny.to_string(),
            "geometry.exit_side" => exit.map_or("none".into(), |e| e.side.to_string()),
            "geometry.exit_start" => exit.map_or(String::new(), |e| e.start.to_string()),
            "geometry.exit_end" => exit.map_or(String::new(), |e| e.end.to_string()),
            "geometry.target" => self.target.map_or(String::new(), |t| list(&t)),
            "geometry.target_offset" => self.target_offset.to_string(),
            "geometry.obstacles" => list(
                &g.obstacles
                    .iter()
                    .flat_map(|r| [r.x0, r.y0, r.x1, r.y1])
                    .collect::<Vec<_>>(),
            ),
            "behavior.b1" => b.b1.to_string(),
            "behavior.b2" => b.b2.to_string(),
            "behavior.b3" => b.b3.to_string(),
            "behavior.b4" => b.b4.to_string(),
            "behavior.c1" => b.c1.to_string(),
            "behavior.c2" => b.c2.to_string(),
            "behavior.delta1" => b.delta1.to_string(),
            "behavior.delta2" => b.delta2.to_string(),
            "behavior.delta3" => b.delta3.to_string(),
            "behavior.alpha13" => b.alpha13.to_string(),
            "behavior.alpha12" => b.alpha12.to_string(),
            "behavior.alpha23" => b.alpha23.to_string(),
            "behavior.alpha32" => b.alpha32.to_string(),
            "behavior.epsilon" => b.epsilon.to_string(),
            "transport.clamp_velocity" => tp.clamp_velocity.to_string(),
            "transport.v2_max" => tp.v2_max.to_string(),
            "transport.v3_max" => tp.v3_max.to_string(),
            "schedule.gamma" => ramp_text(&self.schedule.gamma),
            "schedule.phi" => ramp_text(&self.schedule.phi),
            "initial.bumps" => list(
                &self
                    .bumps
                    .iter()
                    .flat_map(|b| [b.center[0], b.center[1], b.radius, b.weight])
                    .collect::<Vec<_>>(),
            ),
            "run.name" => self.name.clone(),
            "run.t_end" => c.t_end.to_string(),
            "run.cfl_safety" => c.cfl_safety.to_string(),
            "run.dt_max" => c.dt_max.to_string(),
            "run.output_interval" => c.output_interval.to_string(),
            "run.snapshot_times" => list(&c.snapshot_times),
            "output.dir" => self
                .output
                .dir
                .as_ref()
                .map_or(String::new(), |d| d.display().to_string()),
            "output.heatmaps" => self.output.heatmaps.to_string(),
            _ => {
                if let Some(i) = species_index(key, "transport.d", "") {
                    tp.diffusion[i].to_string()
                } else if let Some(i) = species_index(key, "transport.v", "_out") {
                    tp.v_out[i].to_string()
                } else {
                    unreachable!("unhandled key {key}")
                }
            }
        }
    }

    /// Sets one key from its textual value; the error is the bare message.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let g = &mut self.geometry;
        let b = &mut self.behavior;
        let tp = &mut self.transport;
        let c = &mut self.control;
        match key {
            "geometry.origin" => g.origin = pair(value)?,
            "geometry.width" => g.width = real(value)?,
            "geometry.height" => g.height = real(value)?,
            "geometry.nx" => g.nx = count(value)?,
            "geometry.ny" => g.ny = count(value)?,
            "geometry.exit_side" => {
                if value == "none" {
                    g.exit = None;
                } else {
                    let side: Side = value.parse()?;
                    let exit = g.exit.get_or_insert(ExitSpec {
                        side,
                        start: 0.3,
                        end: 0.7,
                    });
                    exit.side = side;
                }
            }
            "geometry.exit_start" | "geometry.exit_end" => {
                if value.is_empty() {
                    return Ok(());
                }
                let v = real(value)?;
                let exit = g
                    .exit
                    .as_mut()
                    .ok_or("exit bounds given but geometry.exit_side is none")?;
                if key.ends_with("start") {
                    exit.start = v;
                } else {
                    exit.end = v;
                }
            }
            "geometry.target" => {
                self.target = if value.is_empty() {
                    None
                } else {
                    Some(pair(value)?)
                };
            }
            "geometry.target_offset" => self.target_offset = real(value)?,
            "geometry.obstacles" => {
                g.obstacles = chunks::<4>(value, "x0, y0, x1, y1")?
                    .into_iter()
                    .map(|[x0, y0, x1, y1]| Rect { x0, y0, x1, y1 })
                    .collect();
            }
            "behavior.b1" => b.b1 = real(value)?,
            "behavior.b2" => b.b2 = real(value)?,
            "behavior.b3" => b.b3 = real(value)?,
            "behavior.b4" => b.b4 = real(value)?,
            "behavior.c1" => b.c1 = real(value)?,
            "behavior.c2" => b.c2 = real(value)?,
            "behavior.delta1" => b.delta1 = real(value)?,
            "behavior.delta2" => b.delta2 = real(value)?,
            "behavior.delta3" => b.delta3 = real(value)?,
            "behavior.alpha13" => b.alpha13 = real(value)?,
            "behavior.alpha12" => b.alpha12 = real(value)?,
            "behavior.alpha23" => b.alpha23 = real(value)?,
            "behavior.alpha32" => b.alpha32 = real(value)?,
            "behavior.epsilon" => b.epsilon = real(value)?,
            "transport.v2_max" => tp.v2_max = real(value)?,
            "transport.v3_max" => tp.v3_max = real(value)?,
            "transport.clamp_velocity" => tp.clamp_velocity = boolean(value)?,
            "schedule.gamma" => self.schedule.gamma = ramp(value)?,
            "schedule.phi" => self.schedule.phi = ramp(value)?,
            "initial.bumps" => {
                self.bumps = chunks::<4>(value, "x, y, radius, weight")?
                    .into_iter()
                    .map(|[x, y, radius, weight]| Bump {
                        center: [x, y],
                        radius,
                        weight,
                    })
                    .collect();
            }
            "run.name" => {
                if value.is_empty() {
                    return Err("name must not be empty".into());
                }
                self.name = value.to_string();
            }
            "run.t_end" => c.t_end = real(value)?,
            "run.cfl_safety" => c.cfl_safety = real(value)?,
            "run.dt_max" => c.dt_max = real(value)?,
            "run.output_interval" => c.output_interval = real(value)?,
            "run.snapshot_times" => c.snapshot_times = reals(value)?,
            "output.dir" => {
                self.output.dir = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                };
            }
            "output.heatmaps" => self.output.heatmaps = boolean(value)?,
            _ => {
                if let Some(i) = species_index(key, "transport.d", "") {
                    tp.diffusion[i] = real(value)?;
                } else if let Some(i) = species_index(key, "transport.v", "_out") {
                    tp.v_out[i] = real(value)?;
                } else {
                    return Err(format!("unknown key `{key}`"));
                }
            }
        }
        Ok(())
    }
}

fn behavior_keys() -> Vec<&'static str> {
    KEYS.iter()
        .copied()
        .filter(|k| k.starts_with("behavior."))
        .collect()
}

fn transport_keys() -> Vec<&'static str> {
    KEYS.iter()
        .copied()
        .filter(|k| k.starts_with("transport."))
        .collect()
}

/// Parses `transport.d3` style keys into a 0-based species index.
fn species_index(key: &str, prefix: &str, suffix: &str) -> Option<usize> {
    let digit = key.strip_prefix(prefix)?.strip_suffix(suffix)?;
    match digit {
        "1" | "2" | "3" | "4" | "5" => Some(digit.as_bytes()[0] as usize - b'1' as usize),
        _ => None,
    }
}

fn real(value: &str) -> Result<f64, String> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{value}` is not finite"))
    }
}

fn count(value: &str) -> Result<usize, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("`{value}` is not a non-negative integer"))
}

fn boolean(value: &str) -> Result<bool, String> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("`{other}` is not true or false")),
    }
}

fn reals(value: &str) -> Result<Vec<f64>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(real).collect()
}

fn pair(value: &str) -> Result<[f64; 2], String> {
    let v = reals(value)?;
    <[f64; 2]>::try_from(v.as_slice()).map_err(|_| format!("expected two values, got {}", v.len()))
}

fn chunks<const N: usize>(value: &str, shape: &str) -> Result<Vec<[f64; N]>, String> {
    let v = reals(value)?;
    if v.len() % N != 0 {
        return Err(format!(
            "expected groups of {N} values ({shape}), got {}",
            v.len()
        ));
    }
    Ok(v.chunks_exact(N)
        .map(|c| <[f64; N]>::try_from(c).expect("exact chunk"))
        .collect())
}

fn ramp(value: &str) -> Result<Ramp, String> {
    let mut parts = value.split(',').map(str::trim);
    let kind = parts.next().unwrap_or("");
    let args = parts.map(real).collect::<Result<Vec<_>, _>>()?;
    match (kind, args.as_slice()) {
        ("constant", [v]) => Ok(Ramp::Constant(*v)),
        ("smoothstep", [start, end]) => Ok(Ramp::Smoothstep {
            start: *start,
            end: *end,
        }),
        _ => Err(format!(
            "`{value}` is not `constant, v` or `smoothstep, start, end`"
        )),
    }
}

fn ramp_text(r: &Ramp) -> String {
    match r {
        Ramp::Constant(v) => format!("constant, {v}"),
        Ramp::Smoothstep { start, end } => format!("smoothstep, {start}, {end}"),
    }
}

fn list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Initial state: everyone in daily behavior, distributed as the sum of the
/// configured bumps sampled at cell centers, zero inside obstacles, and
/// scaled to unit discrete mass.
pub fn initial_field(cfg: &ScenarioConfig, g: &Grid2D) -> Result<DensityField, ScenarioError> {
    let theta = rasterize(&cfg.bumps, g);
    let mass: f64 = theta.iter().sum::<f64>() * g.cell_area();
    if mass.is_nan() || mass <= 0.0 {
        return Err(ScenarioError::EmptyInitialDensity);
    }
    let mut field = DensityField::zeros(g);
    field.rho[DAILY_BEFORE] = theta.into_iter().map(|v| v / mass).collect();
    Ok(field)
}

/// Unnormalized bump profile per cell (zero in obstacles).
pub fn rasterize(bumps: &[Bump], g: &Grid2D) -> Vec<f64> {
    let mut theta = vec![0.0; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let idx = g.idx(i, j);
            if !g.is_interior(idx) {
                continue;
            }
            let [x, y] = g.center(i, j);
            theta[idx] = bumps.iter().map(|b| b.value_at(x, y)).sum();
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::diagnostics;

    #[test]
    fn builtins() {
        let s1 = ScenarioConfig::builtin("scenario1").unwrap();
        assert_eq!(s1.behavior, BehaviorParams::low_risk_culture());
        assert_eq!(s1.bumps.len(), 1);
        assert_eq!(ScenarioConfig::builtin("scenario2").unwrap().bumps.len(), 3);
        assert_eq!(
            ScenarioConfig::builtin("scenario3")
                .unwrap()
                .geometry
                .obstacles
                .len(),
            1
        );
        assert!(ScenarioConfig::builtin("scenario4").is_none());
    }

    #[test]
    fn parse_overrides_defaults() {
        let text = "\
# comment line
transport.d2 = 0   # trailing comment

run.snapshot_times = 10, 20
schedule.gamma = smoothstep, 1, 3
geometry.obstacles = 1.5, 0.34, 1.6, 0.66
";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.transport.diffusion[1], 0.0);
        assert_eq!(cfg.control.snapshot_times, vec![10.0, 20.0]);
        assert_eq!(
            cfg.schedule.gamma,
            Ramp::Smoothstep {
                start: 1.0,
                end: 3.0
            }
        );
        assert_eq!(cfg.geometry.obstacles, vec![SCENARIO3_OBSTACLE]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ScenarioConfig::parse("run.t_end = 10\ntransport.d2 = -0.1\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("d2"), "{err}");

        let err = ScenarioConfig::parse("\n\nbehavior.zeta = 1\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("unknown key"));

        let err = ScenarioConfig::parse("geometry.nx 100").unwrap_err();
        assert_eq!(err.line, 1);

        let err = ScenarioConfig::parse("run.t_end = 1\nrun.t_end = 2").unwrap_err();
        assert_eq!(err.line, 2);

        let err = ScenarioConfig::parse("geometry.width = abc").unwrap_err();
        assert_eq!(err.line, 1);

        let text = "run.name = blocked\ngeometry.obstacles = 1.9, 0.4, 2.0, 0.6\n";
        let err = ScenarioConfig::parse(text).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("obstacle"), "{err}");

        let err = ScenarioConfig::parse("initial.bumps = 1, 2, 3").unwrap_err();
        assert!(err.message.contains("groups of 4"));
    }

    #[test]
    fn echo_round_trips() {
        for name in BUILTIN_NAMES {
            let cfg = ScenarioConfig::builtin(name).unwrap();
            assert_eq!(ScenarioConfig::parse(&cfg.echo()).unwrap(), cfg);
        }
        let mut cfg = ScenarioConfig::scenario2();
        cfg.target = Some([2.5, 0.4]);
        cfg.output.dir = Some("runs/a".into());
        cfg.schedule.phi = Ramp::Smoothstep {
            start: 20.0,
            end: 70.0,
        };
        cfg.transport.diffusion[4] = 1.0 / 3.0;
        assert_eq!(ScenarioConfig::parse(&cfg.echo()).unwrap(), cfg);
        // every key is present in the echo
        let echo = cfg.echo();
        for key in KEYS {
            assert!(echo.contains(&format!("{key} =")), "{key}");
        }
    }

    #[test]
    fn override_application() {
        let mut cfg = ScenarioConfig::scenario1();
        cfg.apply_override("transport.d2=0").unwrap();
        assert_eq!(cfg.transport.diffusion[1], 0.0);
        assert!(cfg.apply_override("transport.d9=0").is_err());
        assert!(cfg.apply_override("nonsense").is_err());
    }

    #[test]
    fn builtin_initial_fields_have_unit_mass() {
        for name in BUILTIN_NAMES {
            let (pb, f) = ScenarioConfig::builtin(name).unwrap().build().unwrap();
            let d = diagnostics(&f, &pb.grid);
            assert!(
                (d.total_mass - 1.0).abs() < 1e-12,
                "{name}: {}",
                d.total_mass
            );
            assert_eq!(d.species_mass[DAILY_BEFORE], d.total_mass);
            for s in [0, 1, 2, 4] {
                assert!(f.rho[s].iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn three_equal_bumps_share_mass() {
        let cfg = ScenarioConfig::scenario2();
        let g = Grid2D::build(&cfg.geometry).unwrap();
        let f = initial_field(&cfg, &g).unwrap();
        let total: f64 = f.rho[DAILY_BEFORE].iter().sum::<f64>() * g.cell_area();
        // integrate each rasterized bump on its own
        let masses: Vec<f64> = cfg
            .bumps
            .iter()
            .map(|b| rasterize(std::slice::from_ref(b), &g).iter().sum::<f64>() * g.cell_area())
            .collect();
        let sum: f64 = masses.iter().sum();
        for m in masses {
            assert!((m / sum - 1.0 / 3.0).abs() < 1e-3, "{}", m / sum);
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bump_in_obstacle_is_renormalized() {
        let mut cfg = ScenarioConfig::scenario1();
        cfg.geometry.obstacles.push(Rect {
            x0: 0.9,
            y0: 0.4,
            x1: 1.0,
            y1: 0.6,
        });
        let (pb, f) = cfg.build().unwrap();
        assert!((diagnostics(&f, &pb.grid).total_mass - 1.0).abs() < 1e-12);
        assert!((0..pb.grid.len()).all(|c| pb.grid.is_interior(c) || f.rho[DAILY_BEFORE][c] == 0.0));

        cfg.geometry.obstacles = vec![Rect {
            x0: 0.5,
            y0: 0.0,
            x1: 1.5,
            y1: 1.0,
        }];
        assert!(matches!(
            cfg.build(),
            Err(ScenarioError::EmptyInitialDensity)
        ));
    }

    #[test]
    fn derived_target_sits_beyond_exit() {
        let cfg = ScenarioConfig::scenario1();
        let g = Grid2D::build(&cfg.geometry).unwrap();
        let t = cfg.direction_target(&g).unwrap();
        assert!((t[0] - 2.25).abs() < 1e-12 && (t[1] - 0.5).abs() < 1e-12);

        let mut sealed = cfg.clone();
        sealed.geometry.exit = None;
        assert!(sealed.validate().is_err());
        sealed.target = Some([3.0, 0.5]);
        assert!(sealed.validate().is_ok());
    }
}
