//! Robocentric occupancy grids: Cartesian local maps, raytraced
//! visibility, and the tri-state polar grid the spatial model observes.
//!
//! Polar cells are indexed `angular_bin * radial_bins + radial_bin`, with
//! angle 0 along +x and angles increasing counter-clockwise. Radial rings
//! get deeper with distance from the robot.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::spn::{Evidence, VariableId};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("robot origin lies in an occupied cell")]
    RobotInWall,
    #[error("robot origin ({0}, {1}) is outside the grid")]
    OriginOutOfBounds(f64, f64),
    #[error("grid does not cover the {radius} m disc around the robot")]
    InsufficientCoverage { radius: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid polar grid spec: {0}")]
    InvalidSpec(String),
    #[error("grid file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Occupancy state of one cell. The discriminant is the category index
/// used for the cell's variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Empty = 0,
    Occupied = 1,
    Unknown = 2,
}

impl Cell {
    pub const ALL: [Cell; 3] = [Cell::Empty, Cell::Occupied, Cell::Unknown];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Cell> {
        Cell::ALL.get(i).copied()
    }

    pub fn to_char(self) -> char {
        match self {
            Cell::Empty => 'e',
            Cell::Occupied => 'o',
            Cell::Unknown => 'u',
        }
    }

    pub fn from_char(c: char) -> Option<Cell> {
        match c {
            'e' => Some(Cell::Empty),
            'o' => Some(Cell::Occupied),
            'u' => Some(Cell::Unknown),
            _ => None,
        }
    }

    pub fn gray(self) -> u8 {
        match self {
            Cell::Empty => 255,
            Cell::Occupied => 0,
            Cell::Unknown => 128,
        }
    }
}

/// Local metric map around the robot. Cell `(x, y)` covers
/// `[x, x+1) × [y, y+1)` in grid units; `origin` is the robot position in
/// the same units.
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: (f64, f64),
    pub cells: Vec<Cell>,
}

impl CartesianGrid {
    /// Grid filled with `fill`, robot at the geometric center.
    pub fn new(width: usize, height: usize, resolution: f64, fill: Cell) -> Self {
        CartesianGrid {
            width,
            height,
            resolution,
            origin: (width as f64 / 2.0, height as f64 / 2.0),
            cells: vec![fill; width * height],
        }
    }

    /// Square grid just covering `radius` meters around a centered robot.
    pub fn centered(radius: f64, resolution: f64, fill: Cell) -> Self {
        let half = (radius / resolution).ceil() as usize + 1;
        let side = 2 * half + 1;
        CartesianGrid::new(side, side, resolution, fill)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Cell) {
        self.cells[y * self.width + x] = c;
    }

    pub fn robot_cell(&self) -> Option<(usize, usize)> {
        let (ox, oy) = self.origin;
        if ox < 0.0 || oy < 0.0 || ox >= self.width as f64 || oy >= self.height as f64 {
            return None;
        }
        Some((ox as usize, oy as usize))
    }

    /// Cell containing the point `(dx, dy)` meters from the robot.
    pub fn cell_at(&self, dx: f64, dy: f64) -> Option<(usize, usize)> {
        let x = self.origin.0 + dx / self.resolution;
        let y = self.origin.1 + dy / self.resolution;
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some((x as usize, y as usize))
    }

    /// Offset in meters from the robot to the center of cell `(x, y)`.
    pub fn cell_offset(&self, x: usize, y: usize) -> (f64, f64) {
        (
            (x as f64 + 0.5 - self.origin.0) * self.resolution,
            (y as f64 + 0.5 - self.origin.1) * self.resolution,
        )
    }
}

/// Geometry of the polar grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarGridSpec {
    pub radius: f64,
    pub angular_bins: usize,
    pub radial_bins: usize,
    /// Outer boundary of each ring in meters; strictly increasing, the last
    /// equals `radius`.
    pub radial_edges: Vec<f64>,
}

impl Default for PolarGridSpec {
    /// 5 m radius, 56 × 21 = 1176 cells, innermost ring 0.1 m deep.
    fn default() -> Self {
        PolarGridSpec::geometric(5.0, 56, 21, 0.1).expect("default polar spec")
    }
}

impl PolarGridSpec {
    /// Rings with geometrically growing depth: `r_k = radius·(g^k − 1)/(g^n − 1)`,
    /// `g` solved so that the first ring is `inner_depth` deep.
    pub fn geometric(radius: f64, angular_bins: usize, radial_bins: usize, inner_depth: f64) -> Result<Self, GridError> {
        if radial_bins == 0 || angular_bins == 0 || radius <= 0.0 {
            return Err(GridError::InvalidSpec("bin counts and radius must be positive".into()));
        }
        let n = radial_bins as i32;
        let linear = radius / radial_bins as f64;
        if inner_depth <= 0.0 || inner_depth > linear {
            return Err(GridError::InvalidSpec(format!(
                "inner depth {inner_depth} must lie in (0, {linear}] for growing rings"
            )));
        }
        let first = |g: f64| radius * (g - 1.0) / (g.powi(n) - 1.0);
        let g = if (inner_depth - linear).abs() < 1e-12 {
            1.0
        } else {
            let (mut lo, mut hi) = (1.0 + 1e-12, 2.0);
            while first(hi) > inner_depth {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if first(mid) > inner_depth {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let mut edges: Vec<f64> = (1..=n)
            .map(|k| if g == 1.0 { linear * k as f64 } else { radius * (g.powi(k) - 1.0) / (g.powi(n) - 1.0) })
            .collect();
        *edges.last_mut().unwrap() = radius;
        PolarGridSpec::with_edges(radius, angular_bins, edges)
    }

    pub fn with_edges(radius: f64, angular_bins: usize, radial_edges: Vec<f64>) -> Result<Self, GridError> {
        let spec = PolarGridSpec { radius, angular_bins, radial_bins: radial_edges.len(), radial_edges };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), GridError> {
        if self.angular_bins == 0 || self.radial_bins == 0 || self.radial_edges.len() != self.radial_bins {
            return Err(GridError::InvalidSpec("bin counts must be positive and match the edge list".into()));
        }
        if self.radial_edges[0] <= 0.0 || self.radial_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GridError::InvalidSpec("radial edges must be positive and strictly increasing".into()));
        }
        if *self.radial_edges.last().unwrap() != self.radius {
            return Err(GridError::InvalidSpec("last radial edge must equal the radius".into()));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.angular_bins * self.radial_bins
    }

    pub fn angle_step(&self) -> f64 {
        TAU / self.angular_bins as f64
    }

    #[inline]
    pub fn variable(&self, angular: usize, radial: usize) -> VariableId {
        VariableId(angular * self.radial_bins + radial)
    }

    /// Polar bin of a point given in meters relative to the robot, or
    /// `None` outside the disc.
    pub fn bin_of(&self, dx: f64, dy: f64) -> Option<(usize, usize)> {
        let r = dx.hypot(dy);
        if r >= self.radius {
            return None;
        }
        let theta = dy.atan2(dx).rem_euclid(TAU);
        let a = ((theta / self.angle_step()) as usize).min(self.angular_bins - 1);
        let k = self.radial_edges.partition_point(|&e| e <= r).min(self.radial_bins - 1);
        Some((a, k))
    }

    /// Inner and outer radius of ring `k`.
    pub fn ring(&self, k: usize) -> (f64, f64) {
        let inner = if k == 0 { 0.0 } else { self.radial_edges[k - 1] };
        (inner, self.radial_edges[k])
    }

    /// Short tag identifying the ring layout, used in grid file headers.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.radius.to_bits().to_le_bytes());
        h.update((self.angular_bins as u64).to_le_bytes());
        for e in &self.radial_edges {
            h.update(e.to_bits().to_le_bytes());
        }
        format!("polar-{}", &hex::encode(h.finalize())[..12])
    }
}

/// Tri-state polar occupancy grid, `cells[a * radial_bins + r]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolarGrid {
    pub angular_bins: usize,
    pub radial_bins: usize,
    pub cells: Vec<Cell>,
}

impl PolarGrid {
    pub fn filled(spec: &PolarGridSpec, c: Cell) -> Self {
        PolarGrid { angular_bins: spec.angular_bins, radial_bins: spec.radial_bins, cells: vec![c; spec.num_cells()] }
    }

    #[inline]
    pub fn get(&self, angular: usize, radial: usize) -> Cell {
        self.cells[angular * self.radial_bins + radial]
    }

    pub fn set(&mut self, angular: usize, radial: usize, c: Cell) {
        self.cells[angular * self.radial_bins + radial] = c;
    }

    pub fn matches(&self, spec: &PolarGridSpec) -> bool {
        self.angular_bins == spec.angular_bins
            && self.radial_bins == spec.radial_bins
            && self.cells.len() == spec.num_cells()
    }

    /// Decode the first `angular·radial` entries of fully observed evidence.
    pub fn from_evidence(evidence: &Evidence, spec: &PolarGridSpec) -> Result<Self, GridError> {
        let n = spec.num_cells();
        if evidence.len() < n {
            return Err(GridError::ShapeMismatch(format!("evidence has {} entries, grid needs {n}", evidence.len())));
        }
        let cells = evidence.values()[..n]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.and_then(Cell::from_index)
                    .ok_or_else(|| GridError::ShapeMismatch(format!("cell {i} is not observed as a valid state")))
            })
            .collect::<Result<_, _>>()?;
        Ok(PolarGrid { angular_bins: spec.angular_bins, radial_bins: spec.radial_bins, cells })
    }
}

/// Shorter chords through an occupied cell do not block a ray, in cells.
const CORNER_CLIP: f64 = 0.5;

/// Keep only what is visible from the robot. A dense sweep of rays walks
/// the grid cell by cell and records where each ray first enters an
/// occupied cell. An occupied cell is visible when some ray stops in it,
/// any other cell when the ray nearest its center gets past the center.
/// Every other cell becomes unknown.
pub fn raytrace_visibility(grid: &CartesianGrid) -> Result<CartesianGrid, GridError> {
    let (rx, ry) = grid.robot_cell().ok_or(GridError::OriginOutOfBounds(grid.origin.0, grid.origin.1))?;
    if grid.get(rx, ry) == Cell::Occupied {
        return Err(GridError::RobotInWall);
    }
    let (ox, oy) = grid.origin;
    let (w, h) = (grid.width as f64, grid.height as f64);
    let reach = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
        .iter()
        .map(|&(cx, cy): &(f64, f64)| (cx - ox).hypot(cy - oy))
        .fold(0.0, f64::max);
    // angular spacing keeps neighbouring rays under half a cell apart at full reach
    let rays = ((TAU * reach * 2.0).ceil() as usize).max(8);

    // per ray: distance at which it enters its first occupied cell, and that cell
    let mut range = vec![f64::INFINITY; rays];
    let mut hit = vec![usize::MAX; rays];
    for k in 0..rays {
        let theta = TAU * k as f64 / rays as f64;
        let (dx, dy) = (theta.cos(), theta.sin());
        let (mut x, mut y) = (rx as i64, ry as i64);
        let step_x = if dx > 0.0 { 1 } else { -1 };
        let step_y = if dy > 0.0 { 1 } else { -1 };
        let t_delta_x = if dx != 0.0 { (1.0 / dx).abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { (1.0 / dy).abs() } else { f64::INFINITY };
        let mut t_max_x = if dx > 0.0 {
            (x as f64 + 1.0 - ox) / dx
        } else if dx < 0.0 {
            (ox - x as f64) / -dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy > 0.0 {
            (y as f64 + 1.0 - oy) / dy
        } else if dy < 0.0 {
            (oy - y as f64) / -dy
        } else {
            f64::INFINITY
        };
        let mut t_enter = 0.0;
        loop {
            let i = y as usize * grid.width + x as usize;
            // a ray that only clips the corner of an occupied cell passes on
            if grid.cells[i] == Cell::Occupied && t_max_x.min(t_max_y) - t_enter > CORNER_CLIP {
                range[k] = t_enter;
                hit[k] = i;
                break;
            }
            if t_max_x < t_max_y {
                t_enter = t_max_x;
                x += step_x;
                t_max_x += t_delta_x;
            } else {
                t_enter = t_max_y;
                y += step_y;
                t_max_y += t_delta_y;
            }
            if x < 0 || y < 0 || x >= grid.width as i64 || y >= grid.height as i64 {
                break;
            }
        }
    }

    let mut struck = vec![false; grid.cells.len()];
    for &i in hit.iter().filter(|&&i| i != usize::MAX) {
        struck[i] = true;
    }
    let robot = ry * grid.width + rx;
    let mut cells = grid.cells.clone();
    for y in 0..grid.height {
        for x in 0..grid.width {
            let i = y * grid.width + x;
            if i == robot {
                continue;
            }
            let (cx, cy) = (x as f64 + 0.5 - ox, y as f64 + 0.5 - oy);
            let k = ((cy.atan2(cx).rem_euclid(TAU) / TAU * rays as f64).round() as usize) % rays;
            if !(cx.hypot(cy) < range[k] || struck[i]) {
                cells[i] = Cell::Unknown;
            }
        }
    }
    Ok(CartesianGrid { cells, ..grid.clone() })
}

/// Aggregate Cartesian cells into polar bins by their centers, with
/// priority occupied > empty > unknown. A bin too small to contain any
/// cell center (near the robot) takes the state of the cell under its own
/// center point.
pub fn cartesian_to_polar(grid: &CartesianGrid, spec: &PolarGridSpec) -> Result<PolarGrid, GridError> {
    let reach = spec.radius / grid.resolution;
    let (ox, oy) = grid.origin;
    if ox - reach < 0.0 || oy - reach < 0.0 || ox + reach > grid.width as f64 || oy + reach > grid.height as f64 {
        return Err(GridError::InsufficientCoverage { radius: spec.radius });
    }
    let mut out = PolarGrid::filled(spec, Cell::Unknown);
    let mut covered = vec![false; spec.num_cells()];
    let x_lo = (ox - reach).floor().max(0.0) as usize;
    let y_lo = (oy - reach).floor().max(0.0) as usize;
    let x_hi = ((ox + reach).ceil() as usize).min(grid.width);
    let y_hi = ((oy + reach).ceil() as usize).min(grid.height);
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let (dx, dy) = grid.cell_offset(x, y);
            let Some((a, r)) = spec.bin_of(dx, dy) else { continue };
            let i = a * spec.radial_bins + r;
            covered[i] = true;
            out.cells[i] = merge(out.cells[i], grid.get(x, y));
        }
    }
    for a in 0..spec.angular_bins {
        for r in 0..spec.radial_bins {
            let i = a * spec.radial_bins + r;
            if covered[i] {
                continue;
            }
            let theta = (a as f64 + 0.5) * spec.angle_step();
            let (inner, outer) = spec.ring(r);
            let rho = 0.5 * (inner + outer);
            if let Some((x, y)) = grid.cell_at(rho * theta.cos(), rho * theta.sin()) {
                out.cells[i] = grid.get(x, y);
            }
        }
    }
    Ok(out)
}

#[inline]
fn merge(acc: Cell, c: Cell) -> Cell {
    match (acc, c) {
        (Cell::Occupied, _) | (_, Cell::Occupied) => Cell::Occupied,
        (Cell::Empty, _) | (_, Cell::Empty) => Cell::Empty,
        _ => Cell::Unknown,
    }
}

/// Every cell observed; unknown is an observed category, not missing data.
pub fn polar_to_evidence(polar: &PolarGrid, spec: &PolarGridSpec) -> Result<Evidence, GridError> {
    if !polar.matches(spec) {
        return Err(GridError::ShapeMismatch(format!(
            "grid is {}x{}, spec is {}x{}",
            polar.angular_bins, polar.radial_bins, spec.angular_bins, spec.radial_bins
        )));
    }
    let values: Vec<usize> = polar.cells.iter().map(|c| c.index()).collect();
    Ok(Evidence::complete(&values))
}

/// Marginalize every radius of `span` angular bins starting at `start`,
/// wrapping past the last bin. Returns the masked evidence and the masked
/// variables in ascending order.
pub fn mask_view(
    evidence: &Evidence,
    spec: &PolarGridSpec,
    start: usize,
    span: usize,
) -> (Evidence, Vec<VariableId>) {
    let mut out = evidence.clone();
    let mut masked = Vec::with_capacity(span * spec.radial_bins);
    for k in 0..span.min(spec.angular_bins) {
        let a = (start + k) % spec.angular_bins;
        for r in 0..spec.radial_bins {
            let v = spec.variable(a, r);
            out.marginalize(v);
            masked.push(v);
        }
    }
    masked.sort();
    (out, masked)
}

/// Grid file contents.
#[derive(Clone, Debug, PartialEq)]
pub enum GridFile {
    Cartesian(CartesianGrid),
    Polar { spec_ref: String, grid: PolarGrid },
}

/// Header `grid <kind> <rows> <cols> <resolution-or-spec-ref>`, then one
/// line of `u`/`e`/`o` per row. Cartesian rows run along y; the robot is
/// taken to sit at the grid center. Polar rows are angular bins.
pub fn write_grid<W: Write>(file: &GridFile, mut out: W) -> Result<(), GridError> {
    let (kind, rows, cols, tag, cells): (&str, usize, usize, String, &[Cell]) = match file {
        GridFile::Cartesian(g) => ("cartesian", g.height, g.width, format!("{}", g.resolution), &g.cells),
        GridFile::Polar { spec_ref, grid } => ("polar", grid.angular_bins, grid.radial_bins, spec_ref.clone(), &grid.cells),
    };
    writeln!(out, "grid {kind} {rows} {cols} {tag}")?;
    let mut line = String::with_capacity(cols + 1);
    for row in cells.chunks(cols) {
        line.clear();
        line.extend(row.iter().map(|c| c.to_char()));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_grid<R: BufRead>(input: R) -> Result<GridFile, GridError> {
    let err = |line: usize, m: &str| GridError::Parse { line, message: m.to_string() };
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| err(1, "empty file"))??;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != "grid" {
        return Err(err(1, "expected `grid <kind> <rows> <cols> <tag>`"));
    }
    let rows: usize = toks[2].parse().map_err(|_| err(1, "bad row count"))?;
    let cols: usize = toks[3].parse().map_err(|_| err(1, "bad column count"))?;
    let mut cells = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let l = lines.next().ok_or_else(|| err(i + 2, "missing row"))??;
        let row = l.trim_end();
        if row.chars().count() != cols {
            return Err(err(i + 2, "row length does not match header"));
        }
        for c in row.chars() {
            cells.push(Cell::from_char(c).ok_or_else(|| err(i + 2, "cell must be u, e or o"))?);
        }
    }
    match toks[1] {
        "cartesian" => {
            let resolution: f64 = toks[4].parse().map_err(|_| err(1, "bad resolution"))?;
            let mut g = CartesianGrid::new(cols, rows, resolution, Cell::Unknown);
            g.cells = cells;
            Ok(GridFile::Cartesian(g))
        }
        "polar" => Ok(GridFile::Polar {
            spec_ref: toks[4].to_string(),
            grid: PolarGrid { angular_bins: rows, radial_bins: cols, cells },
        }),
        other => Err(err(1, &format!("unknown grid kind `{other}`"))),
    }
}

/// Reads a polar grid file and checks it against `spec`.
pub fn read_polar<R: BufRead>(input: R, spec: &PolarGridSpec) -> Result<PolarGrid, GridError> {
    match read_grid(input)? {
        GridFile::Polar { spec_ref, grid } => {
            if spec_ref != spec.fingerprint() || !grid.matches(spec) {
                return Err(GridError::ShapeMismatch(format!(
                    "grid was written for {spec_ref}, model uses {}",
                    spec.fingerprint()
                )));
            }
            Ok(grid)
        }
        GridFile::Cartesian(_) => Err(GridError::ShapeMismatch("expected a polar grid".into())),
    }
}

pub fn write_polar<W: Write>(grid: &PolarGrid, spec: &PolarGridSpec, out: W) -> Result<(), GridError> {
    write_grid(&GridFile::Polar { spec_ref: spec.fingerprint(), grid: grid.clone() }, out)
}

/// Binary PGM (P5) bytes for a row-major gray image.
pub fn pgm_bytes(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Draw a polar grid as a disc, `size` pixels across, +y up. Pixels
/// outside the disc are unknown gray.
pub fn render_polar(grid: &PolarGrid, spec: &PolarGridSpec, size: usize) -> Vec<u8> {
    let mut px = vec![Cell::Unknown.gray(); size * size];
    let scale = 2.0 * spec.radius / size as f64;
    for row in 0..size {
        for col in 0..size {
            let dx = (col as f64 + 0.5) * scale - spec.radius;
            let dy = spec.radius - (row as f64 + 0.5) * scale;
            if let Some((a, r)) = spec.bin_of(dx, dy) {
                px[row * size + col] = grid.get(a, r).gray();
            }
        }
    }
    px
}

/// Cartesian grid pixels with +y up.
pub fn render_cartesian(grid: &CartesianGrid) -> Vec<u8> {
    let mut px = Vec::with_capacity(grid.cells.len());
    for y in (0..grid.height).rev() {
        px.extend((0..grid.width).map(|x| grid.get(x, y).gray()));
    }
    px
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_has_1176_cells() {
        let spec = PolarGridSpec::default();
        assert_eq!(spec.num_cells(), 56 * 21);
        assert_eq!(spec.num_cells(), 1176);
        assert!((spec.radial_edges[0] - 0.1).abs() < 1e-9);
        assert_eq!(*spec.radial_edges.last().unwrap(), 5.0);
        assert!((spec.angle_step().to_degrees() - 6.428571).abs() < 1e-5);
    }

    #[test]
    fn ring_areas_grow_outwards() {
        let spec = PolarGridSpec::default();
        let areas: Vec<f64> = (0..spec.radial_bins)
            .map(|k| {
                let (a, b) = spec.ring(k);
                b * b - a * a
            })
            .collect();
        assert!(areas.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn variable_indexing() {
        let spec = PolarGridSpec::default();
        assert_eq!(spec.variable(3, 7), VariableId(70));
        let mut g = PolarGrid::filled(&spec, Cell::Empty);
        g.set(3, 7, Cell::Occupied);
        let ev = polar_to_evidence(&g, &spec).unwrap();
        let occupied: Vec<usize> = (0..ev.len()).filter(|&i| ev.get(VariableId(i)) == Some(1)).collect();
        assert_eq!(occupied, vec![70]);
    }

    #[test]
    fn unknown_cells_are_observed() {
        let spec = PolarGridSpec::default();
        let g = PolarGrid::filled(&spec, Cell::Unknown);
        let ev = polar_to_evidence(&g, &spec).unwrap();
        assert!(ev.values().iter().all(|v| *v == Some(Cell::Unknown.index())));
        assert_eq!(PolarGrid::from_evidence(&ev, &spec).unwrap(), g);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let spec = PolarGridSpec::default();
        let small = PolarGridSpec::geometric(5.0, 8, 4, 0.5).unwrap();
        let g = PolarGrid::filled(&small, Cell::Empty);
        assert!(matches!(polar_to_evidence(&g, &spec), Err(GridError::ShapeMismatch(_))));
    }

    #[test]
    fn quarter_mask() {
        let spec = PolarGridSpec::default();
        let ev = Evidence::complete(&vec![0; 1176]);
        let (masked, vars) = mask_view(&ev, &spec, 10, 14);
        assert_eq!(vars.len(), 294);
        assert!((vars.len() as f64 / 1176.0 - 0.25).abs() < 1e-12);
        assert_eq!(masked.values().iter().filter(|v| v.is_none()).count(), 294);

        let (same, none) = mask_view(&ev, &spec, 5, 0);
        assert_eq!(same, ev);
        assert!(none.is_empty());
    }

    #[test]
    fn mask_wraps_around_zero() {
        let spec = PolarGridSpec::default();
        let ev = Evidence::complete(&vec![0; 1176]);
        let (_, vars) = mask_view(&ev, &spec, 50, 14);
        let mut bins: Vec<usize> = vars.iter().map(|v| v.0 / 21).collect();
        bins.dedup();
        let expected: Vec<usize> = (0..=7).chain(50..=55).collect();
        assert_eq!(bins, expected);
    }

    #[test]
    fn empty_disc_is_all_empty() {
        let spec = PolarGridSpec::default();
        let g = CartesianGrid::centered(5.0, 0.05, Cell::Empty);
        let p = cartesian_to_polar(&g, &spec).unwrap();
        assert!(p.cells.iter().all(|&c| c == Cell::Empty));
    }

    #[test]
    fn small_grid_lacks_coverage() {
        let spec = PolarGridSpec::default();
        let g = CartesianGrid::centered(3.0, 0.05, Cell::Empty);
        assert!(matches!(cartesian_to_polar(&g, &spec), Err(GridError::InsufficientCoverage { .. })));
    }

    #[test]
    fn open_grid_is_fully_visible() {
        let g = CartesianGrid::centered(2.0, 0.1, Cell::Empty);
        assert_eq!(raytrace_visibility(&g).unwrap(), g);
    }

    #[test]
    fn robot_in_wall() {
        let mut g = CartesianGrid::centered(1.0, 0.1, Cell::Empty);
        let (x, y) = g.robot_cell().unwrap();
        g.set(x, y, Cell::Occupied);
        assert!(matches!(raytrace_visibility(&g), Err(GridError::RobotInWall)));
    }

    #[test]
    fn wall_occludes_region_behind_it() {
        let mut g = CartesianGrid::centered(2.0, 0.1, Cell::Empty);
        let (rx, ry) = g.robot_cell().unwrap();
        for y in ry - 5..=ry + 5 {
            g.set(rx + 5, y, Cell::Occupied);
        }
        let v = raytrace_visibility(&g).unwrap();
        assert_eq!(v.get(rx + 5, ry), Cell::Occupied);
        for x in rx + 6..g.width {
            assert_eq!(v.get(x, ry), Cell::Unknown);
        }
        assert_eq!(v.get(rx + 4, ry), Cell::Empty);
        assert_eq!(v.get(rx - 5, ry), Cell::Empty);
    }

    #[test]
    fn grid_file_round_trip() {
        let spec = PolarGridSpec::default();
        let mut g = PolarGrid::filled(&spec, Cell::Unknown);
        g.set(0, 0, Cell::Empty);
        g.set(55, 20, Cell::Occupied);
        let mut buf = Vec::new();
        write_polar(&g, &spec, &mut buf).unwrap();
        assert_eq!(read_polar(&buf[..], &spec).unwrap(), g);
        let other = PolarGridSpec::geometric(5.0, 56, 21, 0.2).unwrap();
        assert!(read_polar(&buf[..], &other).is_err());

        let mut c = CartesianGrid::new(4, 3, 0.05, Cell::Empty);
        c.set(1, 2, Cell::Occupied);
        let mut buf = Vec::new();
        write_grid(&GridFile::Cartesian(c.clone()), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "grid cartesian 3 4 0.05\neeee\neeee\neoee\n");
        assert_eq!(read_grid(&buf[..]).unwrap(), GridFile::Cartesian(c));
    }

    #[test]
    fn render_sizes() {
        let spec = PolarGridSpec::default();
        let g = PolarGrid::filled(&spec, Cell::Occupied);
        let px = render_polar(&g, &spec, 64);
        assert_eq!(px.len(), 64 * 64);
        assert_eq!(px[32 * 64 + 32], 0);
        assert_eq!(px[0], 128);
        assert!(pgm_bytes(64, 64, &px).starts_with(b"P5\n64 64\n255\n"));
    }
}
