//! Text serialization of fields, time series and trajectories, plus PGM
//! heatmaps.
//!
//! Every number is written with `{:.16e}` (17 significant digits), which
//! reads back bit-exact. Readers take `&str` so they can be driven directly
//! by fuzzers; the `*_file` helpers wrap them with path-aware errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::Grid2D;
use crate::ode::{BehaviorState, OdeTrajectory};
use crate::solver::{DensityField, Diagnostics, MassLedger, SeriesRow, SPECIES};

pub const TIMESERIES_HEADER: &str =
    "t,U,U1,U2,U3,U4,U5,minval,max_rhotilde,outflow_cum,mortality_cum";
pub const TRAJECTORY_HEADER: &str = "t,rho1,rho2,rho3,rho4,rho5,rho6";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<IoError>,
    },
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn in_file<T>(path: &Path, r: Result<T, IoError>) -> Result<T, IoError> {
    r.map_err(|e| IoError::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// Hex SHA-256 of a config echo, used to tie outputs to their parameters.
pub fn params_hash(config_text: &str) -> String {
    Sha256::digest(config_text.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_num(field: &str, line: usize) -> Result<f64, IoError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("`{field}` is not a number")))?;
    if v.is_nan() {
        return Err(parse_err(line, "NaN value"));
    }
    Ok(v)
}

/// Dense matrix as stored on disk: `ny` rows of `nx` values, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub nx: usize,
    pub ny: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Matrix {
    /// Cell values in grid order (`j * nx + i`, `j = 0` at the bottom).
    pub fn to_cells(&self) -> Vec<f64> {
        self.rows.iter().rev().flatten().copied().collect()
    }
}

/// One species as a CSV matrix.
pub fn matrix_csv(values: &[f64], g: &Grid2D) -> String {
    let mut out = String::with_capacity(values.len() * 24);
    for j in (0..g.ny).rev() {
        let row = &values[j * g.nx..(j + 1) * g.nx];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<Matrix, IoError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| parse_num(f, line_no))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    line_no,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "empty matrix"));
    }
    Ok(Matrix {
        nx: rows[0].len(),
        ny: rows.len(),
        rows,
    })
}

/// Contents of a snapshot sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub t: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: [f64; 2],
    pub params_sha256: String,
    /// per-species maximum, also the black level of the heatmaps
    pub max: [f64; SPECIES],
}

impl SnapshotMeta {
    pub fn new(f: &DensityField, g: &Grid2D, params_sha256: &str) -> Self {
        Self {
            t: f.t,
            nx: g.nx,
            ny: g.ny,
            dx: g.dx,
            dy: g.dy,
            origin: g.origin,
            params_sha256: params_sha256.to_string(),
            max: std::array::from_fn(|s| f.rho[s].iter().copied().fold(0.0, f64::max)),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "t = {}", num(self.t));
        let _ = writeln!(out, "nx = {}", self.nx);
        let _ = writeln!(out, "ny = {}", self.ny);
        let _ = writeln!(out, "dx = {}", num(self.dx));
        let _ = writeln!(out, "dy = {}", num(self.dy));
        let _ = writeln!(
            out,
            "origin = {},{}",
            num(self.origin[0]),
            num(self.origin[1])
        );
        let _ = writeln!(out, "params_sha256 = {}", self.params_sha256);
        for (s, m) in self.max.iter().enumerate() {
            let _ = writeln!(out, "max_rho{} = {}", s + 1, num(*m));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut t = None;
        let mut nx = None;
        let mut ny = None;
        let mut dx = None;
        let mut dy = None;
        let mut origin = None;
        let mut hash = None;
        let mut max = [None; SPECIES];
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            let count = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| parse_err(line_no, format!("`{v}` is not a count")))
            };
            match k {
                "t" => t = Some(parse_num(v, line_no)?),
                "nx" => nx = Some(count(v)?),
                "ny" => ny = Some(count(v)?),
                "dx" => dx = Some(parse_num(v, line_no)?),
                "dy" => dy = Some(parse_num(v, line_no)?),
                "origin" => {
                    let (a, b) = v
                        .split_once(',')
                        .ok_or_else(|| parse_err(line_no, "origin needs two values"))?;
                    origin = Some([parse_num(a, line_no)?, parse_num(b, line_no)?]);
                }
                "params_sha256" => hash = Some(v.to_string()),
                _ => {
                    let s = k
                        .strip_prefix("max_rho")
                        .and_then(|d| d.parse::<usize>().ok())
                        .filter(|d| (1..=SPECIES).contains(d))
                        .ok_or_else(|| parse_err(line_no, format!("unknown key `{k}`")))?;
                    max[s - 1] = Some(parse_num(v, line_no)?);
                }
            }
        }
        let need = |name: &str| parse_err(0, format!("missing `{name}`"));
        let mut max_out = [0.0; SPECIES];
        for (s, m) in max.iter().enumerate() {
            max_out[s] = m.ok_or_else(|| need(&format!("max_rho{}", s + 1)))?;
        }
        Ok(Self {
            t: t.ok_or_else(|| need("t"))?,
            nx: nx.ok_or_else(|| need("nx"))?,
            ny: ny.ok_or_else(|| need("ny"))?,
            dx: dx.ok_or_else(|| need("dx"))?,
            dy: dy.ok_or_else(|| need("dy"))?,
            origin: origin.ok_or_else(|| need("origin"))?,
            params_sha256: hash.ok_or_else(|| need("params_sha256"))?,
            max: max_out,
        })
    }
}

/// File stem shared by the files of one snapshot, e.g. `t50` or `t12.5`.
pub fn snapshot_stem(t: f64) -> String {
    format!("t{t}")
}

/// Writes `rho1_<stem>.csv` .. `rho5_<stem>.csv` and `<stem>.meta` into
/// `dir`; returns the paths written.
pub fn write_snapshot(
    f: &DensityField,
    g: &Grid2D,
    dir: &Path,
    params_sha256: &str,
) -> Result<Vec<PathBuf>, IoError> {
    let stem = snapshot_stem(f.t);
    let mut written = Vec::with_capacity(SPECIES + 1);
    for s in 0..SPECIES {
        let path = dir.join(format!("rho{}_{stem}.csv", s + 1));
        write_file(&path, matrix_csv(&f.rho[s], g).as_bytes())?;
        written.push(path);
    }
    let meta = dir.join(format!("{stem}.meta"));
    write_file(
        &meta,
        SnapshotMeta::new(f, g, params_sha256).to_text().as_bytes(),
    )?;
    written.push(meta);
    Ok(written)
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot(dir: &Path, t: f64) -> Result<(DensityField, SnapshotMeta), IoError> {
    let stem = snapshot_stem(t);
    let meta_path = dir.join(format!("{stem}.meta"));
    let meta = in_file(&meta_path, SnapshotMeta::parse(&read_file(&meta_path)?))?;
    let mut rho: [Vec<f64>; SPECIES] = Default::default();
    for (s, slot) in rho.iter_mut().enumerate() {
        let path = dir.join(format!("rho{}_{stem}.csv", s + 1));
        let m = in_file(&path, parse_matrix(&read_file(&path)?))?;
        if (m.nx, m.ny) != (meta.nx, meta.ny) {
            return Err(IoError::File {
                path,
                source: Box::new(parse_err(
                    0,
                    format!(
                        "matrix is {}x{}, metadata says {}x{}",
                        m.nx, m.ny, meta.nx, meta.ny
                    ),
                )),
            });
        }
        *slot = m.to_cells();
    }
    Ok((DensityField { t: meta.t, rho }, meta))
}

/// One row of the time-series file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRecord {
    pub t: f64,
    pub total_mass: f64,
    pub species_mass: [f64; SPECIES],
    pub min_value: f64,
    pub max_total_density: f64,
    pub outflow_cum: f64,
    pub mortality_cum: f64,
}

impl From<&SeriesRow> for SeriesRecord {
    fn from(r: &SeriesRow) -> Self {
        let d: &Diagnostics = &r.diagnostics;
        Self {
            t: d.t,
            total_mass: d.total_mass,
            species_mass: d.species_mass,
            min_value: d.min_value,
            max_total_density: d.max_total_density,
            outflow_cum: r.outflow_cum,
            mortality_cum: r.mortality_cum,
        }
    }
}

impl SeriesRecord {
    fn fields(&self) -> [f64; 11] {
        let m = self.species_mass;
        [
            self.t,
            self.total_mass,
            m[0],
            m[1],
            m[2],
            m[3],
            m[4],
            self.min_value,
            self.max_total_density,
            self.outflow_cum,
            self.mortality_cum,
        ]
    }
}

pub fn timeseries_csv(rows: &[SeriesRecord]) -> String {
    let mut out = String::from(TIMESERIES_HEADER);
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.fields().iter().map(|v| num(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_timeseries(rows: &[SeriesRecord], path: &Path) -> Result<(), IoError> {
    write_file(path, timeseries_csv(rows).as_bytes())
}

/// Parses a header line and numeric rows of fixed width; enforces strictly
/// increasing first column.
fn parse_table<const N: usize>(text: &str, header: &str) -> Result<Vec<[f64; N]>, IoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((n, h)) => {
            return Err(parse_err(
                n + 1,
                format!("expected header `{header}`, got `{h}`"),
            ))
        }
        None => return Err(parse_err(0, "empty file")),
    }
    let mut rows: Vec<[f64; N]> = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| parse_num(f, line_no))
            .collect::<Result<_, _>>()?;
        let row = <[f64; N]>::try_from(fields.as_slice()).map_err(|_| {
            parse_err(
                line_no,
                format!("expected {N} values, got {}", fields.len()),
            )
        })?;
        if let Some(prev) = rows.last() {
            if row[0].partial_cmp(&prev[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(parse_err(
                    line_no,
                    format!("time {} does not increase", row[0]),
                ));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_timeseries(text: &str) -> Result<Vec<SeriesRecord>, IoError> {
    Ok(parse_table::<11>(text, TIMESERIES_HEADER)?
        .into_iter()
        .map(|f| SeriesRecord {
            t: f[0],
            total_mass: f[1],
            species_mass: [f[2], f[3], f[4], f[5], f[6]],
            min_value: f[7],
            max_total_density: f[8],
            outflow_cum: f[9],
            mortality_cum: f[10],
        })
        .collect())
}

pub fn read_timeseries(path: &Path) -> Result<Vec<SeriesRecord>, IoError> {
    in_file(path, parse_timeseries(&read_file(path)?))
}

pub fn trajectory_csv(traj: &OdeTrajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for (t, s) in traj.times.iter().zip(&traj.states) {
        out.push_str(&num(*t));
        for v in s {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(traj: &OdeTrajectory, path: &Path) -> Result<(), IoError> {
    write_file(path, trajectory_csv(traj).as_bytes())
}

pub fn parse_trajectory(text: &str) -> Result<OdeTrajectory, IoError> {
    let rows = parse_table::<7>(text, TRAJECTORY_HEADER)?;
    let mut traj = OdeTrajectory::default();
    for r in rows {
        traj.times.push(r[0]);
        let s: BehaviorState = [r[1], r[2], r[3], r[4], r[5], r[6]];
        traj.states.push(s);
    }
    Ok(traj)
}

pub fn read_trajectory(path: &Path) -> Result<OdeTrajectory, IoError> {
    in_file(path, parse_trajectory(&read_file(path)?))
}

pub fn ledger_text(l: &MassLedger) -> String {
    format!(
        "initial_mass = {}\ninterior_mass = {}\nexit_outflow_cum = {}\nmortality_cum = {}\nclipped_cum = {}\nclosure_defect = {}\n",
        num(l.initial_mass),
        num(l.interior_mass),
        num(l.exit_outflow_cum),
        num(l.mortality_cum),
        num(l.clipped_cum),
        num(l.closure_defect()),
    )
}

pub fn write_ledger(l: &MassLedger, path: &Path) -> Result<(), IoError> {
    write_file(path, ledger_text(l).as_bytes())
}

/// Binary PGM of one species: zero is white, the field maximum is black.
/// The maximum is stored in a `# max` header comment.
pub fn heatmap_pgm(values: &[f64], g: &Grid2D) -> Vec<u8> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n# max {}\n{} {}\n255\n", num(max), g.nx, g.ny).into_bytes();
    out.reserve(g.len());
    for j in (0..g.ny).rev() {
        for v in &values[j * g.nx..(j + 1) * g.nx] {
            let level = if max > 0.0 {
                (v.max(0.0) / max).min(1.0)
            } else {
                0.0
            };
            out.push(255 - (255.0 * level).round() as u8);
        }
    }
    out
}

pub fn render_heatmap(
    f: &DensityField,
    species: usize,
    g: &Grid2D,
    path: &Path,
) -> Result<(), IoError> {
    write_file(path, &heatmap_pgm(&f.rho[species], g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GeometrySpec;
    use crate::solver::diagnostics;

    fn small_grid() -> Grid2D {
        Grid2D::build(&GeometrySpec {
            nx: 6,
            ny: 4,
            ..GeometrySpec::default()
        })
        .unwrap()
    }

    fn sample_field(g: &Grid2D) -> DensityField {
        let mut f = DensityField::zeros(g);
        f.t = 12.5;
        for s in 0..SPECIES {
            for (c, v) in f.rho[s].iter_mut().enumerate() {
                *v = ((c * 7 + s * 3) as f64).sin().abs() / 3.0 + 1e-300 * c as f64;
            }
        }
        f
    }

    #[test]
    fn zero_field_gives_zero_matrix() {
        let g = small_grid();
        let csv = matrix_csv(&DensityField::zeros(&g).rho[0], &g);
        let m = parse_matrix(&csv).unwrap();
        assert_eq!((m.nx, m.ny), (6, 4));
        assert!(m.rows.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn top_row_comes_first() {
        let g = small_grid();
        let values: Vec<f64> = (0..g.len()).map(|c| c as f64).collect();
        let m = parse_matrix(&matrix_csv(&values, &g)).unwrap();
        assert_eq!(m.rows[0][0], g.idx(0, g.ny - 1) as f64);
        assert_eq!(m.to_cells(), values);
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let g = small_grid();
        let f = sample_field(&g);
        let dir = tempfile::tempdir().unwrap();
        let files = write_snapshot(&f, &g, dir.path(), "abc").unwrap();
        assert_eq!(files.len(), SPECIES + 1);
        let (back, meta) = read_snapshot(dir.path(), 12.5).unwrap();
        assert_eq!(back, f);
        assert_eq!(meta.params_sha256, "abc");
        assert_eq!((meta.nx, meta.ny), (6, 4));
        let d0 = diagnostics(&f, &g);
        let d1 = diagnostics(&back, &g);
        assert_eq!(d0.total_mass, d1.total_mass);
    }

    #[test]
    fn missing_snapshot_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_snapshot(dir.path(), 3.0).unwrap_err().to_string();
        assert!(err.contains("t3.meta"), "{err}");
    }

    #[test]
    fn timeseries_round_trip() {
        let rows: Vec<SeriesRecord> = (0..4)
            .map(|k| SeriesRecord {
                t: k as f64,
                total_mass: 1.0 - 0.1 * k as f64,
                species_mass: [0.1, 0.2, 0.3, 0.4 / 3.0, 0.0],
                min_value: 0.0,
                max_total_density: 7.25,
                outflow_cum: 0.1 * k as f64,
                mortality_cum: 1e-17,
            })
            .collect();
        let text = timeseries_csv(&rows);
        assert!(text.starts_with(TIMESERIES_HEADER));
        assert_eq!(parse_timeseries(&text).unwrap(), rows);
    }

    #[test]
    fn table_parse_errors() {
        assert!(parse_timeseries("").is_err());
        assert!(parse_timeseries("t,U\n").is_err());
        let dup = format!("{TRAJECTORY_HEADER}\n0,0,0,0,1,0,0\n0,0,0,0,1,0,0\n");
        let err = parse_trajectory(&dup).unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 3, .. }), "{err}");
        let short = format!("{TRAJECTORY_HEADER}\n0,0,0\n");
        assert!(parse_trajectory(&short).is_err());
        let nan = format!("{TRAJECTORY_HEADER}\n0,NaN,0,0,1,0,0\n");
        assert!(parse_trajectory(&nan).is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let traj = OdeTrajectory {
            times: vec![0.0, 0.1, 0.2],
            states: vec![
                [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
                [0.1, 0.0, 0.0, 0.9, 0.0, 0.0],
                [0.2, 1.0 / 7.0, 0.0, 0.8 - 1.0 / 7.0, 0.0, 0.0],
            ],
        };
        let text = trajectory_csv(&traj);
        assert!(text.starts_with("t,rho1,rho2,rho3,rho4,rho5,rho6\n"));
        assert_eq!(parse_trajectory(&text).unwrap(), traj);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let err = parse_matrix("1,2,3\n4,5\n").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }));
    }

    #[test]
    fn meta_round_trip() {
        let g = small_grid();
        let m = SnapshotMeta::new(&sample_field(&g), &g, "ff00");
        assert_eq!(SnapshotMeta::parse(&m.to_text()).unwrap(), m);
        assert!(SnapshotMeta::parse("t = 1\n").is_err());
        assert!(SnapshotMeta::parse("max_rho9 = 1\n").is_err());
    }

    #[test]
    fn heatmap_levels() {
        let g = small_grid();
        let zero = heatmap_pgm(&vec![0.0; g.len()], &g);
        let header_len = zero.len() - g.len();
        assert!(zero[header_len..].iter().all(|b| *b == 255));

        let mut values = vec![0.0; g.len()];
        values[g.idx(5, 0)] = 2.0;
        values[g.idx(0, 3)] = 1.0;
        let img = heatmap_pgm(&values, &g);
        let text = String::from_utf8_lossy(&img[..header_len]).to_string();
        assert!(
            text.starts_with("P5\n# max 2.0000000000000000e0\n6 4\n255\n"),
            "{text}"
        );
        let px = &img[img.len() - g.len()..];
        // bottom-right cell is the last byte, top-left the first
        assert_eq!(px[g.len() - 1], 0);
        assert_eq!(px[0], 127);
        assert_eq!(heatmap_pgm(&values, &g), img);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            params_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
