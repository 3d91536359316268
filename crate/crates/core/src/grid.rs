//! Uniform cell-centered grid over a rectangle, with wall/exit boundary
//! classification, rasterized rectangular obstacles and the desired
//! direction field.
//!
//! Cells are stored row-major from the bottom row: `idx = j * nx + i`.
//! Face arrays follow the same convention: `x` faces are indexed
//! `j * (nx + 1) + i` (face `i` is the left face of cell `i`) and `y` faces
//! `j * nx + i` (face `j` is the bottom face of row `j`).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const MIN_CELLS: usize = 3;
/// Upper bound on `nx * ny`.
pub const MAX_CELLS: usize = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("grid needs at least {MIN_CELLS}x{MIN_CELLS} cells, got {nx}x{ny}")]
    TooSmall { nx: usize, ny: usize },
    #[error("grid of {nx}x{ny} cells exceeds the limit of {MAX_CELLS}")]
    TooLarge { nx: usize, ny: usize },
    #[error("domain extents must be positive and finite, got {width} x {height}")]
    BadExtent { width: f64, height: f64 },
    #[error("exit segment [{start}, {end}] is not a proper sub-interval of the {side} side (length {len})")]
    BadExit {
        side: Side,
        start: f64,
        end: f64,
        len: f64,
    },
    #[error("exit segment covers no boundary face")]
    EmptyExit,
    #[error("exit overlaps obstacle cells")]
    ExitBlocked,
    #[error("obstacle [{x0}, {x1}] x [{y0}, {y1}] is degenerate")]
    BadObstacle { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("every cell is covered by obstacles")]
    EmptyInterior,
    #[error("direction target ({0}, {1}) lies inside the closed domain")]
    TargetInside(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "bottom" => Ok(Side::Bottom),
            "top" => Ok(Side::Top),
            other => Err(format!(
                "unknown side `{other}` (expected left, right, bottom or top)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Exit segment on one side of the outer boundary. `start`/`end` are
/// measured along the side from the origin corner (x for bottom/top, y for
/// left/right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitSpec {
    pub side: Side,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpec {
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub exit: Option<ExitSpec>,
    pub obstacles: Vec<Rect>,
}

impl Default for GeometrySpec {
    /// `[0,2] x [0,1]` at `h = 0.02`, exit on the middle 40% of the right wall.
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0],
            width: 2.0,
            height: 1.0,
            nx: 100,
            ny: 50,
            exit: Some(ExitSpec {
                side: Side::Right,
                start: 0.3,
                end: 0.7,
            }),
            obstacles: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Interior,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Wall,
    Exit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: [f64; 2],
    cells: Vec<CellKind>,
    left: Vec<FaceKind>,
    right: Vec<FaceKind>,
    bottom: Vec<FaceKind>,
    top: Vec<FaceKind>,
}

/// Face through which a boundary flux leaves a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitFace {
    pub cell: usize,
    pub side: Side,
    /// face length
    pub length: f64,
}

impl Grid2D {
    pub fn build(spec: &GeometrySpec) -> Result<Self, GeometryError> {
        let (nx, ny) = (spec.nx, spec.ny);
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(GeometryError::TooSmall { nx, ny });
        }
        if nx.checked_mul(ny).is_none_or(|n| n > MAX_CELLS) {
            return Err(GeometryError::TooLarge { nx, ny });
        }
        let (w, h) = (spec.width, spec.height);
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite())
            || !(spec.origin[0].is_finite() && spec.origin[1].is_finite())
        {
            return Err(GeometryError::BadExtent {
                width: w,
                height: h,
            });
        }
        let dx = w / nx as f64;
        let dy = h / ny as f64;
        let mut grid = Grid2D {
            nx,
            ny,
            dx,
            dy,
            origin: spec.origin,
            cells: vec![CellKind::Interior; nx * ny],
            left: vec![FaceKind::Wall; ny],
            right: vec![FaceKind::Wall; ny],
            bottom: vec![FaceKind::Wall; nx],
            top: vec![FaceKind::Wall; nx],
        };

        for r in &spec.obstacles {
            if !(r.x0 < r.x1 && r.y0 < r.y1) {
                return Err(GeometryError::BadObstacle {
                    x0: r.x0,
                    y0: r.y0,
                    x1: r.x1,
                    y1: r.y1,
                });
            }
            for j in 0..ny {
                for i in 0..nx {
                    let [x, y] = grid.center(i, j);
                    if r.contains(x, y) {
                        grid.cells[j * nx + i] = CellKind::Obstacle;
                    }
                }
            }
        }
        if grid.cells.iter().all(|c| *c == CellKind::Obstacle) {
            return Err(GeometryError::EmptyInterior);
        }

        if let Some(exit) = spec.exit {
            let len = match exit.side {
                Side::Left | Side::Right => h,
                Side::Bottom | Side::Top => w,
            };
            if !(exit.start >= 0.0 && exit.end <= len && exit.start < exit.end) {
                return Err(GeometryError::BadExit {
                    side: exit.side,
                    start: exit.start,
                    end: exit.end,
                    len,
                });
            }
            let (count, step) = match exit.side {
                Side::Left | Side::Right => (ny, dy),
                Side::Bottom | Side::Top => (nx, dx),
            };
            let mut any = false;
            for k in 0..count {
                let s = (k as f64 + 0.5) * step;
                if s < exit.start || s > exit.end {
                    continue;
                }
                let cell = match exit.side {
                    Side::Left => k * nx,
                    Side::Right => k * nx + nx - 1,
                    Side::Bottom => k,
                    Side::Top => (ny - 1) * nx + k,
                };
                if grid.cells[cell] == CellKind::Obstacle {
                    return Err(GeometryError::ExitBlocked);
                }
                grid.side_faces_mut(exit.side)[k] = FaceKind::Exit;
                any = true;
            }
            if !any {
                return Err(GeometryError::EmptyExit);
            }
        }
        Ok(grid)
    }

    fn side_faces_mut(&mut self, side: Side) -> &mut Vec<FaceKind> {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
            Side::Bottom => &mut self.bottom,
            Side::Top => &mut self.top,
        }
    }

    /// Boundary faces along `side`, ordered by increasing coordinate.
    pub fn side_faces(&self, side: Side) -> &[FaceKind] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.dx,
            self.origin[1] + (j as f64 + 0.5) * self.dy,
        ]
    }

    #[inline]
    pub fn kind(&self, idx: usize) -> CellKind {
        self.cells[idx]
    }

    #[inline]
    pub fn is_interior(&self, idx: usize) -> bool {
        self.cells[idx] == CellKind::Interior
    }

    pub fn cell_kinds(&self) -> &[CellKind] {
        &self.cells
    }

    pub fn interior_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| **c == CellKind::Interior)
            .count()
    }

    pub fn has_exit(&self) -> bool {
        self.exit_faces().next().is_some()
    }

    /// All exit faces with the interior cell they drain.
    pub fn exit_faces(&self) -> impl Iterator<Item = ExitFace> + '_ {
        let (nx, ny) = (self.nx, self.ny);
        [Side::Left, Side::Right, Side::Bottom, Side::Top]
            .into_iter()
            .flat_map(move |side| {
                self.side_faces(side)
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| **f == FaceKind::Exit)
                    .map(move |(k, _)| match side {
                        Side::Left => ExitFace {
                            cell: k * nx,
                            side,
                            length: self.dy,
                        },
                        Side::Right => ExitFace {
                            cell: k * nx + nx - 1,
                            side,
                            length: self.dy,
                        },
                        Side::Bottom => ExitFace {
                            cell: k,
                            side,
                            length: self.dx,
                        },
                        Side::Top => ExitFace {
                            cell: (ny - 1) * nx + k,
                            side,
                            length: self.dx,
                        },
                    })
            })
    }

    /// Interior cells within `depth` cells of an exit face, measured inward
    /// along the exit normal.
    pub fn exit_region(&self, depth: usize) -> Vec<usize> {
        let mut cells = Vec::new();
        for face in self.exit_faces() {
            let (i0, j0) = (face.cell % self.nx, face.cell / self.nx);
            for k in 0..depth {
                let (i, j) = match face.side {
                    Side::Left if i0 + k < self.nx => (i0 + k, j0),
                    Side::Right if k <= i0 => (i0 - k, j0),
                    Side::Bottom if j0 + k < self.ny => (i0, j0 + k),
                    Side::Top if k <= j0 => (i0, j0 - k),
                    _ => break,
                };
                let idx = self.idx(i, j);
                if self.is_interior(idx) {
                    cells.push(idx);
                }
            }
        }
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Whether the closed rectangle `[origin, origin + extent]` contains `p`.
    pub fn closed_domain_contains(&self, p: [f64; 2]) -> bool {
        let [x0, y0] = self.origin;
        let x1 = x0 + self.nx as f64 * self.dx;
        let y1 = y0 + self.ny as f64 * self.dy;
        p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1
    }

    /// Midpoint of the exit segment and its outward normal, if any.
    pub fn exit_midpoint(&self) -> Option<([f64; 2], [f64; 2])> {
        let faces: Vec<ExitFace> = self.exit_faces().collect();
        let first = faces.first()?;
        let side = first.side;
        let mut sum = [0.0, 0.0];
        let mut n = 0.0;
        for f in faces.iter().filter(|f| f.side == side) {
            let (i, j) = (f.cell % self.nx, f.cell / self.nx);
            let [cx, cy] = self.center(i, j);
            let p = match side {
                Side::Left => [cx - 0.5 * self.dx, cy],
                Side::Right => [cx + 0.5 * self.dx, cy],
                Side::Bottom => [cx, cy - 0.5 * self.dy],
                Side::Top => [cx, cy + 0.5 * self.dy],
            };
            sum[0] += p[0];
            sum[1] += p[1];
            n += 1.0;
        }
        Some(([sum[0] / n, sum[1] / n], outward_normal(side)))
    }
}

pub fn outward_normal(side: Side) -> [f64; 2] {
    match side {
        Side::Left => [-1.0, 0.0],
        Side::Right => [1.0, 0.0],
        Side::Bottom => [0.0, -1.0],
        Side::Top => [0.0, 1.0],
    }
}

/// Desired direction of motion.
///
/// `cell` holds the unit vector at each interior cell center (zero inside
/// obstacles). `x_face` / `y_face` hold the face-normal component in the
/// +x / +y direction: the average of the two adjacent cells on interior
/// faces, zero on walls, and the outward normal on exit faces.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField {
    pub target: Option<[f64; 2]>,
    pub cell: Vec<[f64; 2]>,
    pub x_face: Vec<f64>,
    pub y_face: Vec<f64>,
}

impl DirectionField {
    /// Unit vectors toward `target` from every interior cell center.
    pub fn toward_target(g: &Grid2D, target: [f64; 2]) -> Result<Self, GeometryError> {
        if !target[0].is_finite() || !target[1].is_finite() || g.closed_domain_contains(target) {
            return Err(GeometryError::TargetInside(target[0], target[1]));
        }
        let mut df = Self::from_cell_fn(g, |x, y| {
            let (rx, ry) = (target[0] - x, target[1] - y);
            let r = rx.hypot(ry);
            [rx / r, ry / r]
        });
        df.target = Some(target);
        Ok(df)
    }

    /// Field with arbitrary cell-center values; faces are derived the same
    /// way as for the target field.
    pub fn from_cell_fn(g: &Grid2D, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let (nx, ny) = (g.nx, g.ny);
        let mut cell = vec![[0.0, 0.0]; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let idx = g.idx(i, j);
                if g.is_interior(idx) {
                    let [x, y] = g.center(i, j);
                    cell[idx] = f(x, y);
                }
            }
        }

        let mut x_face = vec![0.0; (nx + 1) * ny];
        for j in 0..ny {
            for i in 0..=nx {
                let v = if i == 0 {
                    exit_component(g.left[j], -1.0)
                } else if i == nx {
                    exit_component(g.right[j], 1.0)
                } else {
                    let (l, r) = (g.idx(i - 1, j), g.idx(i, j));
                    if g.is_interior(l) && g.is_interior(r) {
                        0.5 * (cell[l][0] + cell[r][0])
                    } else {
                        0.0
                    }
                };
                x_face[j * (nx + 1) + i] = v;
            }
        }

        let mut y_face = vec![0.0; nx * (ny + 1)];
        for j in 0..=ny {
            for i in 0..nx {
                let v = if j == 0 {
                    exit_component(g.bottom[i], -1.0)
                } else if j == ny {
                    exit_component(g.top[i], 1.0)
                } else {
                    let (b, t) = (g.idx(i, j - 1), g.idx(i, j));
                    if g.is_interior(b) && g.is_interior(t) {
                        0.5 * (cell[b][1] + cell[t][1])
                    } else {
                        0.0
                    }
                };
                y_face[j * nx + i] = v;
            }
        }

        Self {
            target: None,
            cell,
            x_face,
            y_face,
        }
    }

    /// Interior cells whose direction has a positive component into an
    /// adjacent wall (outer wall or obstacle face).
    pub fn cells_pointing_into_walls(&self, g: &Grid2D) -> usize {
        let (nx, ny) = (g.nx, g.ny);
        let tol = 1e-12;
        let mut count = 0;
        for j in 0..ny {
            for i in 0..nx {
                let idx = g.idx(i, j);
                if !g.is_interior(idx) {
                    continue;
                }
                let [vx, vy] = self.cell[idx];
                let blocked = |ii: Option<usize>, jj: Option<usize>, wall: bool| match (ii, jj) {
                    (Some(ii), Some(jj)) if ii < nx && jj < ny => !g.is_interior(g.idx(ii, jj)),
                    _ => wall,
                };
                let west = blocked(i.checked_sub(1), Some(j), g.left[j] == FaceKind::Wall);
                let east = blocked(Some(i + 1), Some(j), g.right[j] == FaceKind::Wall);
                let south = blocked(Some(i), j.checked_sub(1), g.bottom[i] == FaceKind::Wall);
                let north = blocked(Some(i), Some(j + 1), g.top[i] == FaceKind::Wall);
                if (west && vx < -tol)
                    || (east && vx > tol)
                    || (south && vy < -tol)
                    || (north && vy > tol)
                {
                    count += 1;
                }
            }
        }
        count
    }

    pub fn max_norm_defect(&self, g: &Grid2D) -> f64 {
        (0..g.len())
            .filter(|&k| g.is_interior(k))
            .map(|k| (self.cell[k][0].hypot(self.cell[k][1]) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn exit_component(kind: FaceKind, outward: f64) -> f64 {
    match kind {
        FaceKind::Exit => outward,
        FaceKind::Wall => 0.0,
    }
}

/// Maximum central-difference divergence of the cell-center field over
/// interior cells whose four neighbors are interior. Returns
/// `f64::NEG_INFINITY` when no cell qualifies.
pub fn check_divergence(df: &DirectionField, g: &Grid2D) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for j in 1..g.ny.saturating_sub(1) {
        for i in 1..g.nx.saturating_sub(1) {
            let c = g.idx(i, j);
            let (w, e, s, n) = (
                g.idx(i - 1, j),
                g.idx(i + 1, j),
                g.idx(i, j - 1),
                g.idx(i, j + 1),
            );
            if ![c, w, e, s, n].iter().all(|&k| g.is_interior(k)) {
                continue;
            }
            let div = (df.cell[e][0] - df.cell[w][0]) / (2.0 * g.dx)
                + (df.cell[n][1] - df.cell[s][1]) / (2.0 * g.dy);
            max = max.max(div);
        }
    }
    max
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nx: usize, ny: usize, w: f64, h: f64) -> GeometrySpec {
        GeometrySpec {
            origin: [0.0, 0.0],
            width: w,
            height: h,
            nx,
            ny,
            exit: None,
            obstacles: Vec::new(),
        }
    }

    #[test]
    fn full_right_wall_exit() {
        let mut s = spec(10, 5, 10.0, 5.0);
        s.exit = Some(ExitSpec {
            side: Side::Right,
            start: 0.0,
            end: 5.0,
        });
        let g = Grid2D::build(&s).unwrap();
        assert!(g
            .side_faces(Side::Right)
            .iter()
            .all(|f| *f == FaceKind::Exit));
        for side in [Side::Left, Side::Bottom, Side::Top] {
            assert!(g.side_faces(side).iter().all(|f| *f == FaceKind::Wall));
        }
        let cells: Vec<usize> = g.exit_faces().map(|f| f.cell).collect();
        assert_eq!(cells, vec![9, 19, 29, 39, 49]);
    }

    #[test]
    fn obstacle_rasterization() {
        let mut s = GeometrySpec::default();
        s.obstacles.push(Rect {
            x0: 1.5,
            y0: 0.34,
            x1: 1.6,
            y1: 0.66,
        });
        let g = Grid2D::build(&s).unwrap();
        let blocked = g.len() - g.interior_count();
        // 5 columns x 16 rows of 0.02-cells have centers inside the rectangle.
        assert_eq!(blocked, 5 * 16);
        let c = g.idx(77, 25);
        assert_eq!(g.kind(c), CellKind::Obstacle);
        assert_eq!(g.kind(g.idx(74, 25)), CellKind::Interior);
    }

    #[test]
    fn degenerate_and_invalid_geometry() {
        assert!(matches!(
            Grid2D::build(&spec(2, 2, 1.0, 1.0)),
            Err(GeometryError::TooSmall { .. })
        ));
        assert!(matches!(
            Grid2D::build(&spec(4, 4, 0.0, 1.0)),
            Err(GeometryError::BadExtent { .. })
        ));

        let mut s = spec(4, 4, 1.0, 1.0);
        s.obstacles.push(Rect {
            x0: -1.0,
            y0: -1.0,
            x1: 2.0,
            y1: 2.0,
        });
        assert_eq!(Grid2D::build(&s), Err(GeometryError::EmptyInterior));

        let mut s = GeometrySpec::default();
        s.obstacles.push(Rect {
            x0: 1.9,
            y0: 0.4,
            x1: 2.0,
            y1: 0.6,
        });
        assert_eq!(Grid2D::build(&s), Err(GeometryError::ExitBlocked));

        let s = GeometrySpec {
            exit: Some(ExitSpec {
                side: Side::Right,
                start: 0.5,
                end: 1.5,
            }),
            ..GeometrySpec::default()
        };
        assert!(matches!(
            Grid2D::build(&s),
            Err(GeometryError::BadExit { .. })
        ));

        let s = GeometrySpec {
            exit: Some(ExitSpec {
                side: Side::Right,
                start: 0.501,
                end: 0.509,
            }),
            ..GeometrySpec::default()
        };
        assert_eq!(Grid2D::build(&s), Err(GeometryError::EmptyExit));
    }

    #[test]
    fn every_boundary_face_has_exactly_one_kind() {
        let g = Grid2D::build(&GeometrySpec::default()).unwrap();
        let exits = g
            .side_faces(Side::Right)
            .iter()
            .filter(|f| **f == FaceKind::Exit)
            .count();
        assert_eq!(exits, 20);
        assert_eq!(g.exit_faces().count(), 20);
        let total: usize = [Side::Left, Side::Right, Side::Bottom, Side::Top]
            .iter()
            .map(|s| g.side_faces(*s).len())
            .sum();
        assert_eq!(total, 2 * (100 + 50));
    }

    #[test]
    fn exit_region_depth() {
        let g = Grid2D::build(&GeometrySpec::default()).unwrap();
        let region = g.exit_region(3);
        assert_eq!(region.len(), 60);
        assert!(region.iter().all(|&c| c % 100 >= 97));
    }

    #[test]
    fn direction_examples() {
        let g = Grid2D::build(&spec(4, 4, 4.0, 4.0)).unwrap();
        // cell (1, 0) has center (1.5, 0.5)
        let df = DirectionField::toward_target(&g, [5.5, 0.5]).unwrap();
        assert_eq!(df.cell[g.idx(1, 0)], [1.0, 0.0]);
        let df = DirectionField::toward_target(&g, [0.5, -2.5]).unwrap();
        assert_eq!(df.cell[g.idx(0, 0)], [0.0, -1.0]);
        assert!(df.max_norm_defect(&g) < 1e-12);
        assert!(DirectionField::toward_target(&g, [2.0, 2.0]).is_err());
        assert!(DirectionField::toward_target(&g, [4.0, 1.0]).is_err());
    }

    #[test]
    fn face_values() {
        let g = Grid2D::build(&GeometrySpec::default()).unwrap();
        let df = DirectionField::toward_target(&g, [2.25, 0.5]).unwrap();
        let nx = g.nx;
        // exit faces carry the outward normal, walls carry nothing
        assert_eq!(df.x_face[25 * (nx + 1) + nx], 1.0);
        assert_eq!(df.x_face[5 * (nx + 1) + nx], 0.0);
        assert_eq!(df.x_face[25 * (nx + 1)], 0.0);
        assert!(df.y_face[..nx].iter().all(|v| *v == 0.0));
        let (l, r) = (g.idx(10, 10), g.idx(11, 10));
        let avg = 0.5 * (df.cell[l][0] + df.cell[r][0]);
        assert_eq!(df.x_face[10 * (nx + 1) + 11], avg);
    }

    #[test]
    fn radial_field_is_converging() {
        let g = Grid2D::build(&GeometrySpec::default()).unwrap();
        let df = DirectionField::toward_target(&g, [2.25, 0.5]).unwrap();
        let max = check_divergence(&df, &g);
        // continuum value is -1/r, so every cell is strictly negative
        assert!(max <= 1e-8, "{max}");
        assert!(max < 0.0);
    }

    #[test]
    fn constant_and_diverging_fields() {
        let g = Grid2D::build(&spec(40, 20, 2.0, 1.0)).unwrap();
        let df = DirectionField::from_cell_fn(&g, |_, _| [1.0, 0.0]);
        assert_eq!(check_divergence(&df, &g), 0.0);

        // points away from (-0.5, 0.5); analytic divergence is +1/r > 0
        let df = DirectionField::from_cell_fn(&g, |x, y| {
            let (rx, ry) = (x + 0.5, y - 0.5);
            let r = rx.hypot(ry);
            [rx / r, ry / r]
        });
        let max = check_divergence(&df, &g);
        assert!(max > 1e-8);
        // largest near the source: 1/r at the closest qualifying center
        let [x, y] = g.center(1, 10);
        let expected = 1.0 / (x + 0.5).hypot(y - 0.5);
        assert!(
            (max - expected).abs() / expected < 0.01,
            "{max} vs {expected}"
        );
    }

    #[test]
    fn walls_flagged_around_obstacle() {
        let mut s = GeometrySpec::default();
        s.obstacles.push(Rect {
            x0: 1.5,
            y0: 0.35,
            x1: 1.6,
            y1: 0.65,
        });
        let g = Grid2D::build(&s).unwrap();
        let df = DirectionField::toward_target(&g, [2.25, 0.5]).unwrap();
        assert!(df.cells_pointing_into_walls(&g) > 0);
    }

    #[test]
    fn side_parsing() {
        assert_eq!("right".parse::<Side>().unwrap(), Side::Right);
        assert!("north".parse::<Side>().is_err());
    }
}
