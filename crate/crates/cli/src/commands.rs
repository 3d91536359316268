use std::fs;
use std::path::{Path, PathBuf};

use apc_core::io::{self, SeriesRecord};
use apc_core::kinetics::PANIC;
use apc_core::ode::{integrate, Method, OdeError, OdeRun};
use apc_core::scenario::ScenarioConfig;
use apc_core::solver::{exit_region_peak, EXIT_REGION_DEPTH, SPECIES};
use apc_core::validate::{format_table, run_suite, SuiteOptions};
use apc_core::{simulate, Error};
use rayon::prelude::*;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const CONFIG: u8 = 1;
    pub const SOLVER: u8 = 2;
    pub const VALIDATION: u8 = 3;

    fn config(message: impl Into<String>) -> Self {
        Self {
            code: Self::CONFIG,
            message: message.into(),
        }
    }

    fn solver(message: impl Into<String>) -> Self {
        Self {
            code: Self::SOLVER,
            message: message.into(),
        }
    }
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Self {
        Failure::solver(e.to_string())
    }
}

pub struct RunOptions {
    pub config: String,
    pub set: Vec<String>,
    pub out: Option<PathBuf>,
    pub snapshots: Option<String>,
    pub grid: Option<String>,
}

pub struct OdeOptions {
    pub config: String,
    pub set: Vec<String>,
    pub out: Option<PathBuf>,
    pub t_end: Option<f64>,
    pub dt: f64,
    pub method: String,
    pub store_every: usize,
}

fn load_base(source: &str) -> Result<ScenarioConfig, Failure> {
    if let Some(cfg) = ScenarioConfig::builtin(source) {
        return Ok(cfg);
    }
    let text = fs::read_to_string(source)
        .map_err(|e| Failure::config(format!("cannot read config `{source}`: {e}")))?;
    ScenarioConfig::parse(&text).map_err(|e| Failure::config(format!("{source}: {e}")))
}

fn apply_sets(cfg: &mut ScenarioConfig, sets: &[String]) -> Result<(), Failure> {
    for s in sets {
        cfg.apply_override(s)
            .map_err(|e| Failure::config(e.message))?;
    }
    Ok(())
}

fn load_config(opts: &RunOptions) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load_base(&opts.config)?;
    if let Some(grid) = &opts.grid {
        let (nx, ny) = grid
            .split_once(',')
            .ok_or_else(|| Failure::config(format!("--grid expects NX,NY, got `{grid}`")))?;
        cfg.apply_override(&format!("geometry.nx={nx}"))
            .and_then(|_| cfg.apply_override(&format!("geometry.ny={ny}")))
            .map_err(|e| Failure::config(e.message))?;
    }
    if let Some(times) = &opts.snapshots {
        cfg.apply_override(&format!("run.snapshot_times={times}"))
            .map_err(|e| Failure::config(e.message))?;
    }
    apply_sets(&mut cfg, &opts.set)?;
    cfg.validate().map_err(|e| Failure::config(e.message))?;
    Ok(cfg)
}

fn output_root() -> PathBuf {
    std::env::var_os("APC_OUT_DIR").map_or_else(|| PathBuf::from("apc-out"), PathBuf::from)
}

fn output_dir(cfg: &ScenarioConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| output_root().join(&cfg.name))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::solver(format!("{}: {e}", dir.display())))
}

fn print_echo(cfg: &ScenarioConfig) {
    println!("# effective configuration");
    print!("{}", cfg.echo());
    println!();
}

#[derive(Debug, Clone)]
struct Summary {
    final_mass: f64,
    outflow: f64,
    mortality: f64,
    max_total_density: f64,
    clamped: u64,
    steps: u64,
    closure_defect: f64,
    peak_exit_panic: f64,
}

/// Runs `cfg` and writes every artifact into `dir`.
fn run_and_write(cfg: &ScenarioConfig, dir: &Path) -> Result<Summary, Failure> {
    create_dir(dir)?;
    let echo = cfg.echo();
    let hash = io::params_hash(&echo);
    let config_path = dir.join("config.cfg");
    fs::write(&config_path, &echo)
        .map_err(|e| Failure::solver(format!("{}: {e}", config_path.display())))?;

    let (problem, out) = simulate(cfg).map_err(|e| match e {
        Error::Scenario(e) => Failure::config(e.to_string()),
        Error::Solver(e) => Failure::solver(e.to_string()),
    })?;
    let g = &problem.grid;
    for snap in &out.snapshots {
        io::write_snapshot(snap, g, dir, &hash)?;
        if cfg.output.heatmaps {
            let stem = io::snapshot_stem(snap.t);
            for s in 0..SPECIES {
                io::render_heatmap(snap, s, g, &dir.join(format!("rho{}_{stem}.pgm", s + 1)))?;
            }
        }
    }
    let rows: Vec<SeriesRecord> = out.series.iter().map(SeriesRecord::from).collect();
    io::write_timeseries(&rows, &dir.join("timeseries.csv"))?;
    io::write_ledger(&out.ledger, &dir.join("ledger.txt"))?;

    Ok(Summary {
        final_mass: out.ledger.interior_mass,
        outflow: out.ledger.exit_outflow_cum,
        mortality: out.ledger.mortality_cum,
        max_total_density: out.stats.max_total_density,
        clamped: out.stats.clamped,
        steps: out.stats.steps,
        closure_defect: out.ledger.closure_defect(),
        peak_exit_panic: exit_region_peak(&out.final_field, g, PANIC, EXIT_REGION_DEPTH),
    })
}

pub fn run(opts: &RunOptions) -> Result<(), Failure> {
    let cfg = load_config(opts)?;
    print_echo(&cfg);
    let dir = output_dir(&cfg, &opts.out);
    let s = run_and_write(&cfg, &dir)?;
    println!("output directory   {}", dir.display());
    println!("steps              {}", s.steps);
    println!("final U            {:.12}", s.final_mass);
    println!("exit outflow       {:.12}", s.outflow);
    println!("mortality          {:.12}", s.mortality);
    println!("ledger defect      {:.3e}", s.closure_defect);
    println!("max total density  {:.6}", s.max_total_density);
    println!("clamped cell-steps {}", s.clamped);
    println!("peak exit panic    {:.6e}", s.peak_exit_panic);
    Ok(())
}

pub fn ode(opts: &OdeOptions) -> Result<(), Failure> {
    let mut cfg = load_base(&opts.config)?;
    apply_sets(&mut cfg, &opts.set)?;
    cfg.validate().map_err(|e| Failure::config(e.message))?;
    let method: Method = opts.method.parse().map_err(Failure::config)?;
    let t1 = opts.t_end.unwrap_or(cfg.control.t_end);
    let run = OdeRun {
        t0: 0.0,
        t1,
        dt: opts.dt,
        method,
        initial: [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        store_every: opts.store_every,
    };
    print_echo(&cfg);
    println!(
        "# ode t_end = {t1}, dt = {}, method = {:?}, store_every = {}",
        opts.dt, method, opts.store_every
    );

    let traj = integrate(&run, &cfg.schedule, &cfg.behavior).map_err(|e| match e {
        OdeError::InvalidRun(m) => Failure::config(m),
        other => Failure::solver(other.to_string()),
    })?;
    let dir = output_dir(&cfg, &opts.out);
    create_dir(&dir)?;
    let path = dir.join("trajectory.csv");
    io::write_trajectory(&traj, &path)?;

    let (t, state) = traj.last().expect("trajectory holds the initial state");
    println!("trajectory         {}", path.display());
    println!("stored times       {}", traj.len());
    println!("max conservation drift {:.3e}", traj.conservation_report());
    println!(
        "state at t = {t}: {}",
        state
            .iter()
            .map(|v| format!("{v:.10}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

pub fn validate(cfl_safety: f64, seed: u64, flip_h_sign: bool) -> Result<(), Failure> {
    let opts = SuiteOptions {
        flip_h_sign,
        cfl_safety,
        seed,
        ..SuiteOptions::default()
    };
    println!("# effective configuration");
    println!("validate.cfl_safety = {}", opts.cfl_safety);
    println!("validate.grid = {}, {}", opts.grid.0, opts.grid.1);
    println!("validate.t_end = {}", opts.t_end);
    println!("validate.seed = {}", opts.seed);
    println!("validate.flip_h_sign = {}", opts.flip_h_sign);
    println!();
    let results = run_suite(&opts);
    print!("{}", format_table(&results));
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure {
            code: Failure::VALIDATION,
            message: format!("{failed} of {} checks failed", results.len()),
        })
    }
}

/// `key=v1,v2,...` into the key and its values.
fn parse_axis(spec: &str) -> Result<(String, Vec<String>), Failure> {
    let (key, values) = spec.split_once('=').ok_or_else(|| {
        Failure::config(format!("--param `{spec}` is not `section.key=v1,v2,...`"))
    })?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Failure::config(format!("--param `{spec}` lists no values")));
    }
    Ok((key.trim().to_string(), values))
}

/// Every combination of the axis values, first axis slowest.
fn cartesian(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |points, (key, values)| {
        points
            .iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect()
    })
}

pub fn sweep(opts: &RunOptions, params: &[String], jobs: usize) -> Result<(), Failure> {
    if params.is_empty() {
        return Err(Failure::config("sweep needs at least one --param"));
    }
    if jobs == 0 {
        return Err(Failure::config("--jobs must be at least 1"));
    }
    let base = load_config(opts)?;
    let axes = params
        .iter()
        .map(|p| parse_axis(p))
        .collect::<Result<Vec<_>, _>>()?;
    let root = output_dir(&base, &opts.out);

    let mut points = Vec::new();
    for (k, assignment) in cartesian(&axes).into_iter().enumerate() {
        let mut cfg = base.clone();
        for (key, value) in &assignment {
            cfg.apply_override(&format!("{key}={value}"))
                .map_err(|e| Failure::config(e.message))?;
        }
        cfg.validate()
            .map_err(|e| Failure::config(format!("point {k}: {}", e.message)))?;
        points.push((root.join(format!("point-{k:03}")), assignment, cfg));
    }

    print_echo(&base);
    for (key, values) in &axes {
        println!("# sweep {key} = {}", values.join(", "));
    }
    println!("# {} points, {jobs} at a time", points.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::solver(e.to_string()))?;
    let results: Vec<Result<Summary, Failure>> = pool.install(|| {
        points
            .par_iter()
            .map(|(dir, _, cfg)| run_and_write(cfg, dir))
            .collect()
    });

    create_dir(&root)?;
    let mut csv = String::from("point");
    for (key, _) in &axes {
        csv.push(',');
        csv.push_str(key);
    }
    csv.push_str(",final_U,outflow_cum,peak_exit_panic\n");
    let mut first_error = None;
    for (k, ((_, assignment, _), result)) in points.iter().zip(results).enumerate() {
        match result {
            Ok(s) => {
                csv.push_str(&format!("{k}"));
                for (_, v) in assignment {
                    csv.push(',');
                    csv.push_str(v);
                }
                csv.push_str(&format!(
                    ",{:.16e},{:.16e},{:.16e}\n",
                    s.final_mass, s.outflow, s.peak_exit_panic
                ));
                println!(
                    "point {k:3}  {}  U {:.6}  outflow {:.6}  peak exit panic {:.6e}",
                    assignment
                        .iter()
                        .map(|(key, v)| format!("{key}={v}"))
                        .collect::<Vec<_>>()
                        .join(" "),
                    s.final_mass,
                    s.outflow,
                    s.peak_exit_panic
                );
            }
            Err(e) => {
                eprintln!("point {k}: {}", e.message);
                first_error.get_or_insert(e);
            }
        }
    }
    let summary = root.join("summary.csv");
    fs::write(&summary, csv).map_err(|e| Failure::solver(format!("{}: {e}", summary.display())))?;
    println!("summary            {}", summary.display());
    match first_error {
        None => Ok(()),
        Some(e) => Err(e),
    }
}
