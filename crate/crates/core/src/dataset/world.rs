//! Synthetic indoor scenes: axis-aligned walls and furniture rectangles
//! for corridors, doorways, small and large offices, plus two categories
//! held out as novel (a closed elevator-like cell and a cluttered
//! kitchen-like room). Each sample is a robot pose in one scene,
//! rasterized into a robocentric Cartesian map, raytraced, perturbed with
//! sensor noise and converted to a polar grid.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetError, PlaceSample};
use crate::polar::{cartesian_to_polar, raytrace_visibility, CartesianGrid, Cell, PolarGrid, PolarGridSpec};
use crate::structure::derived_rng;

pub const INLIER_CLASSES: [&str; 4] = ["corridor", "doorway", "small_office", "large_office"];
pub const NOVEL_CLASSES: [&str; 2] = ["elevator", "kitchen"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldParams {
    pub seed: u64,
    pub floors: usize,
    /// Inlier samples per class and floor.
    pub samples_per_class: usize,
    /// Novel-class samples per class and floor.
    pub novel_samples_per_class: usize,
    /// Distinct room instances per class and floor.
    pub rooms_per_floor: usize,
    /// Cartesian map resolution in meters per cell.
    pub resolution: f64,
    pub corridor_width: (f64, f64),
    pub corridor_length: (f64, f64),
    pub door_width: (f64, f64),
    pub wall_thickness: (f64, f64),
    pub small_office_area: (f64, f64),
    pub large_office_area: (f64, f64),
    pub elevator_side: (f64, f64),
    pub kitchen_area: (f64, f64),
    /// Furniture pieces per 4 m² of office floor.
    pub clutter_density: f64,
    /// Probability of flipping a visible cell between empty and occupied.
    pub noise_rate: f64,
    /// Standard deviation of the heading error, degrees.
    pub heading_jitter_deg: f64,
    /// Maximum offset of the robot from its nominal position, meters.
    pub position_jitter: f64,
    /// Room poses are drawn from this central fraction of each room axis.
    pub pose_spread: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            seed: 7,
            floors: 4,
            samples_per_class: 100,
            novel_samples_per_class: 50,
            rooms_per_floor: 3,
            resolution: 0.05,
            corridor_width: (1.5, 2.5),
            corridor_length: (12.0, 20.0),
            door_width: (0.8, 1.2),
            wall_thickness: (0.1, 0.25),
            small_office_area: (6.0, 12.0),
            large_office_area: (14.0, 30.0),
            elevator_side: (1.1, 1.6),
            kitchen_area: (10.0, 16.0),
            clutter_density: 1.0,
            noise_rate: 0.0005,
            heading_jitter_deg: 5.0,
            position_jitter: 0.15,
            pose_spread: 0.6,
        }
    }
}

impl WorldParams {
    pub fn check(&self) -> Result<(), DatasetError> {
        let ranges = [
            ("corridor_width", self.corridor_width),
            ("corridor_length", self.corridor_length),
            ("door_width", self.door_width),
            ("wall_thickness", self.wall_thickness),
            ("small_office_area", self.small_office_area),
            ("large_office_area", self.large_office_area),
            ("elevator_side", self.elevator_side),
            ("kitchen_area", self.kitchen_area),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo > 0.0 && hi >= lo) {
                return Err(DatasetError::InvalidParams(format!("{name} must be a positive range")));
            }
        }
        if self.small_office_area.1 >= self.large_office_area.0 {
            return Err(DatasetError::InvalidParams("office area ranges overlap".into()));
        }
        if self.floors == 0 || self.rooms_per_floor == 0 || self.resolution <= 0.0 {
            return Err(DatasetError::InvalidParams("floors, rooms and resolution must be positive".into()));
        }
        if !(self.pose_spread > 0.0 && self.pose_spread <= 1.0) {
            return Err(DatasetError::InvalidParams("pose_spread must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) || self.clutter_density < 0.0 {
            return Err(DatasetError::InvalidParams("noise rate must be in [0, 1], clutter ≥ 0".into()));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in world meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(xa: f64, ya: f64, xb: f64, yb: f64) -> Self {
        Rect { x0: xa.min(xb), y0: ya.min(yb), x1: xa.max(xb), y1: ya.max(yb) }
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x0 - x).max(x - self.x1).max(0.0);
        let dy = (self.y0 - y).max(y - self.y1).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    South,
    North,
    West,
    East,
}

const SIDES: [Side; 4] = [Side::South, Side::North, Side::West, Side::East];

/// Obstacles plus the region where the robot may stand.
#[derive(Clone, Debug, Default)]
pub struct Scene {
    pub obstacles: Vec<Rect>,
    pub interior: Option<Rect>,
}

impl Scene {
    fn clearance(&self, x: f64, y: f64) -> f64 {
        self.obstacles.iter().map(|r| r.distance(x, y)).fold(f64::INFINITY, f64::min)
    }

    pub fn occupied(&self, x: f64, y: f64) -> bool {
        self.obstacles.iter().any(|r| r.contains(x, y))
    }

    /// Walls of thickness `t` around `room`, each side split by its door
    /// openings `(side, center along the side, width)`.
    fn walls(&mut self, room: Rect, t: f64, doors: &[(Side, f64, f64)]) {
        for side in SIDES {
            let (lo, hi) = match side {
                Side::South | Side::North => (room.x0 - t, room.x1 + t),
                Side::West | Side::East => (room.y0 - t, room.y1 + t),
            };
            let mut gaps: Vec<(f64, f64)> = doors
                .iter()
                .filter(|d| d.0 == side)
                .map(|&(_, c, w)| (c - w / 2.0, c + w / 2.0))
                .collect();
            gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut start = lo;
            let mut pieces = Vec::new();
            for (g0, g1) in gaps {
                if g0 > start {
                    pieces.push((start, g0));
                }
                start = start.max(g1);
            }
            if hi > start {
                pieces.push((start, hi));
            }
            for (a, b) in pieces {
                self.obstacles.push(match side {
                    Side::South => Rect::new(a, room.y0 - t, b, room.y0),
                    Side::North => Rect::new(a, room.y1, b, room.y1 + t),
                    Side::West => Rect::new(room.x0 - t, a, room.x0, b),
                    Side::East => Rect::new(room.x1, a, room.x1 + t, b),
                });
            }
        }
    }

    /// A room of `depth` × `span` on the far side of a door, open toward it.
    fn annex(&mut self, room: Rect, t: f64, side: Side, center: f64, span: f64, depth: f64) {
        let (a, b) = (center - span / 2.0, center + span / 2.0);
        let r = match side {
            Side::South => Rect::new(a, room.y0 - t - depth, b, room.y0 - t),
            Side::North => Rect::new(a, room.y1 + t, b, room.y1 + t + depth),
            Side::West => Rect::new(room.x0 - t - depth, a, room.x0 - t, b),
            Side::East => Rect::new(room.x1 + t, a, room.x1 + t + depth, b),
        };
        let open = match side {
            Side::South => Side::North,
            Side::North => Side::South,
            Side::West => Side::East,
            Side::East => Side::West,
        };
        let len = match open {
            Side::South | Side::North => r.x1 - r.x0,
            _ => r.y1 - r.y0,
        };
        let mid = match open {
            Side::South | Side::North => (r.x0 + r.x1) / 2.0,
            _ => (r.y0 + r.y1) / 2.0,
        };
        self.walls(r, t, &[(open, mid, len + 2.0 * t)]);
    }

    /// Furniture block of `depth` against `side` of `room`.
    fn against(&mut self, room: Rect, side: Side, from: f64, to: f64, depth: f64) {
        self.obstacles.push(match side {
            Side::South => Rect::new(from, room.y0, to, room.y0 + depth),
            Side::North => Rect::new(from, room.y1 - depth, to, room.y1),
            Side::West => Rect::new(room.x0, from, room.x0 + depth, to),
            Side::East => Rect::new(room.x1 - depth, from, room.x1, to),
        });
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn side_extent(room: Rect, side: Side) -> (f64, f64) {
    match side {
        Side::South | Side::North => (room.x0, room.x1),
        Side::West | Side::East => (room.y0, room.y1),
    }
}

/// Rectangular room of the given area, with one door leading to a hallway.
fn office(rng: &mut ChaCha8Rng, p: &WorldParams, area: (f64, f64), clutter: f64) -> Scene {
    let a = uniform(rng, area);
    let aspect = rng.gen_range(1.0..1.8);
    let w = (a * aspect).sqrt();
    let h = a / w;
    let room = Rect::new(0.0, 0.0, w, h);
    let t = uniform(rng, p.wall_thickness);
    let door_side = SIDES[rng.gen_range(0..4)];
    let (lo, hi) = side_extent(room, door_side);
    let dw = uniform(rng, p.door_width);
    let dc = rng.gen_range(lo + dw / 2.0 + 0.1..hi - dw / 2.0 - 0.1);
    let mut scene = Scene { interior: Some(room), ..Default::default() };
    scene.walls(room, t, &[(door_side, dc, dw)]);
    scene.annex(room, t, door_side, dc, 8.0, rng.gen_range(1.6..2.6));

    let pieces = (clutter * p.clutter_density * a / 4.0).round() as usize;
    for _ in 0..pieces {
        let side = SIDES[rng.gen_range(0..4)];
        let (lo, hi) = side_extent(room, side);
        let len = rng.gen_range(0.8f64..1.6).min(hi - lo - 0.2);
        let start = rng.gen_range(lo..hi - len);
        // keep the doorway clear
        if side == door_side && start < dc + dw && start + len > dc - dw {
            continue;
        }
        scene.against(room, side, start, start + len, rng.gen_range(0.5..0.8));
    }
    scene
}

fn corridor(rng: &mut ChaCha8Rng, p: &WorldParams) -> Scene {
    let w = uniform(rng, p.corridor_width);
    let l = uniform(rng, p.corridor_length);
    let room = Rect::new(0.0, 0.0, l, w);
    let t = uniform(rng, p.wall_thickness);
    let mut doors = Vec::new();
    let n = rng.gen_range(2..=5);
    for _ in 0..n {
        let side = if rng.gen_bool(0.5) { Side::South } else { Side::North };
        let dw = uniform(rng, p.door_width);
        let c = rng.gen_range(1.5..l - 1.5);
        if doors.iter().any(|&(s, x, _): &(Side, f64, f64)| s == side && (x - c).abs() < 3.2) {
            continue;
        }
        doors.push((side, c, dw));
    }
    let mut scene = Scene { interior: Some(room), ..Default::default() };
    scene.walls(room, t, &doors);
    for &(side, c, _) in &doors {
        scene.annex(room, t, side, c, 3.0, rng.gen_range(2.5..4.0));
    }
    scene
}

/// Wall along y = 0 with an opening at x = 0; a room on one side and a
/// hallway on the other.
fn doorway(rng: &mut ChaCha8Rng, p: &WorldParams) -> (Scene, f64) {
    let t = uniform(rng, p.wall_thickness);
    let dw = uniform(rng, p.door_width);
    let room = Rect::new(-rng.gen_range(1.0..3.5), t / 2.0, rng.gen_range(1.0..3.5), t / 2.0 + rng.gen_range(2.5..4.5));
    let hall_w = uniform(rng, p.corridor_width);
    let hall = Rect::new(-9.0, -t / 2.0 - hall_w, 9.0, -t / 2.0);
    let mut scene = Scene::default();
    scene.walls(room, t, &[(Side::South, 0.0, dw)]);
    scene.obstacles.push(Rect::new(-9.0, -t / 2.0 - hall_w - t, 9.0, -t / 2.0 - hall_w));
    scene.obstacles.push(Rect::new(-9.0, -t / 2.0, room.x0 - t, t / 2.0));
    scene.obstacles.push(Rect::new(room.x1 + t, -t / 2.0, 9.0, t / 2.0));
    scene.interior = Some(hall);
    (scene, dw)
}

fn elevator(rng: &mut ChaCha8Rng, p: &WorldParams) -> Scene {
    let w = uniform(rng, p.elevator_side);
    let h = uniform(rng, p.elevator_side);
    let room = Rect::new(0.0, 0.0, w, h);
    let t = uniform(rng, p.wall_thickness);
    let side = SIDES[rng.gen_range(0..4)];
    let (lo, hi) = side_extent(room, side);
    let dw = (hi - lo - 0.2).min(0.9);
    let mut scene = Scene { interior: Some(room), ..Default::default() };
    scene.walls(room, t, &[(side, (lo + hi) / 2.0, dw)]);
    scene.annex(room, t, side, (lo + hi) / 2.0, 6.0, rng.gen_range(2.0..3.0));
    scene
}

fn kitchen(rng: &mut ChaCha8Rng, p: &WorldParams) -> Scene {
    let a = uniform(rng, p.kitchen_area);
    let w = (a * rng.gen_range(1.0..1.5)).sqrt();
    let h = a / w;
    let room = Rect::new(0.0, 0.0, w, h);
    let t = uniform(rng, p.wall_thickness);
    let door_side = SIDES[rng.gen_range(0..4)];
    let (lo, hi) = side_extent(room, door_side);
    let dw = uniform(rng, p.door_width);
    let dc = (lo + hi) / 2.0;
    let mut scene = Scene { interior: Some(room), ..Default::default() };
    scene.walls(room, t, &[(door_side, dc, dw)]);
    scene.annex(room, t, door_side, dc, 8.0, 2.0);
    // counters along every wall except the door wall, plus a central table
    for side in SIDES.into_iter().filter(|&s| s != door_side) {
        let (lo, hi) = side_extent(room, side);
        scene.against(room, side, lo, hi, 0.6);
    }
    let (cx, cy) = (w / 2.0 + rng.gen_range(-0.3..0.3), h / 2.0 + rng.gen_range(-0.3..0.3));
    scene.obstacles.push(Rect::new(cx - 0.4, cy - 0.3, cx + 0.4, cy + 0.3));
    scene
}

/// A generated room plus how poses are drawn inside it.
#[derive(Clone, Debug)]
pub struct Room {
    pub label: String,
    pub scene: Scene,
    kind: PoseKind,
}

#[derive(Clone, Copy, Debug)]
enum PoseKind {
    /// In the central part of the interior, heading along a room axis.
    Free,
    /// Along the corridor axis, heading along it.
    Corridor,
    /// In the opening at the origin, heading across it.
    Doorway { width: f64 },
    /// Near the center of the interior, heading along a room axis.
    Centered,
}

pub fn generate_room(label: &str, rng: &mut ChaCha8Rng, p: &WorldParams) -> Result<Room, DatasetError> {
    let (scene, kind) = match label {
        "corridor" => (corridor(rng, p), PoseKind::Corridor),
        "doorway" => {
            let (s, w) = doorway(rng, p);
            (s, PoseKind::Doorway { width: w })
        }
        "small_office" => (office(rng, p, p.small_office_area, 1.0), PoseKind::Free),
        "large_office" => (office(rng, p, p.large_office_area, 1.0), PoseKind::Free),
        "elevator" => (elevator(rng, p), PoseKind::Centered),
        "kitchen" => (kitchen(rng, p), PoseKind::Free),
        other => return Err(DatasetError::InvalidParams(format!("no generator for class `{other}`"))),
    };
    Ok(Room { label: label.to_string(), scene, kind })
}

const ROBOT_CLEARANCE: f64 = 0.3;

/// Robot position and heading inside `room`.
pub fn sample_pose(room: &Room, rng: &mut ChaCha8Rng, p: &WorldParams) -> Result<(f64, f64, f64), DatasetError> {
    let jitter = p.heading_jitter_deg.to_radians();
    let heading_noise = |rng: &mut ChaCha8Rng| {
        // sum of uniforms: cheap bell-shaped jitter with the requested spread
        let u: f64 = (0..3).map(|_| rng.gen_range(-1.0..1.0)).sum();
        u * jitter
    };
    for _ in 0..500 {
        let (x, y, heading) = match room.kind {
            PoseKind::Free => {
                let r = room.scene.interior.unwrap();
                let axis = rng.gen_range(0..4) as f64 * FRAC_PI_2;
                let (hx, hy) = (p.pose_spread * (r.x1 - r.x0) / 2.0, p.pose_spread * (r.y1 - r.y0) / 2.0);
                let (cx, cy) = ((r.x0 + r.x1) / 2.0, (r.y0 + r.y1) / 2.0);
                (rng.gen_range(cx - hx..=cx + hx), rng.gen_range(cy - hy..=cy + hy), axis + heading_noise(rng))
            }
            PoseKind::Centered => {
                let r = room.scene.interior.unwrap();
                let j = p.position_jitter;
                (
                    (r.x0 + r.x1) / 2.0 + rng.gen_range(-j..=j),
                    (r.y0 + r.y1) / 2.0 + rng.gen_range(-j..=j),
                    rng.gen_range(0..4) as f64 * FRAC_PI_2 + heading_noise(rng),
                )
            }
            PoseKind::Corridor => {
                let r = room.scene.interior.unwrap();
                let margin = ((r.y1 - r.y0) / 2.0 - ROBOT_CLEARANCE).max(0.0);
                let lateral = rng.gen_range(-1.0..=1.0) * p.position_jitter.min(margin);
                let base = if rng.gen_bool(0.5) { 0.0 } else { PI };
                (rng.gen_range(r.x0 + 1.0..r.x1 - 1.0), (r.y0 + r.y1) / 2.0 + lateral, base + heading_noise(rng))
            }
            PoseKind::Doorway { width } => {
                let j = p.position_jitter.min((width / 2.0 - ROBOT_CLEARANCE).max(0.0));
                let base = if rng.gen_bool(0.5) { FRAC_PI_2 } else { -FRAC_PI_2 };
                (rng.gen_range(-j..=j), rng.gen_range(-0.1..=0.1), base + heading_noise(rng))
            }
        };
        let min_clear = match room.kind {
            PoseKind::Doorway { .. } => 0.05,
            _ => ROBOT_CLEARANCE,
        };
        if room.scene.clearance(x, y) >= min_clear && !room.scene.occupied(x, y) {
            return Ok((x, y, heading));
        }
    }
    Err(DatasetError::InfeasibleGeometry(room.label.clone()))
}

/// Robocentric map of `scene` seen from `pose`: +x along the heading.
pub fn rasterize(scene: &Scene, pose: (f64, f64, f64), radius: f64, resolution: f64) -> CartesianGrid {
    let mut grid = CartesianGrid::centered(radius, resolution, Cell::Empty);
    let (px, py, h) = pose;
    let (c, s) = (h.cos(), h.sin());
    for y in 0..grid.height {
        for x in 0..grid.width {
            let (dx, dy) = grid.cell_offset(x, y);
            let wx = px + c * dx - s * dy;
            let wy = py + s * dx + c * dy;
            if scene.occupied(wx, wy) {
                grid.set(x, y, Cell::Occupied);
            }
        }
    }
    grid
}

/// Flip cells of `raw` that are visible in `visible` between empty and
/// occupied with probability `rate`.
pub fn add_noise(raw: &mut CartesianGrid, visible: &CartesianGrid, rate: f64, rng: &mut ChaCha8Rng) {
    if rate <= 0.0 {
        return;
    }
    let robot = raw.robot_cell().map(|(x, y)| y * raw.width + x);
    for (i, (c, v)) in raw.cells.iter_mut().zip(&visible.cells).enumerate() {
        if *v == Cell::Unknown || Some(i) == robot {
            continue;
        }
        if rng.gen_bool(rate) {
            *c = if *c == Cell::Empty { Cell::Occupied } else { Cell::Empty };
        }
    }
}

fn class_code(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Render one sample of `room`: the noisy robocentric map and its polar
/// view after raytracing.
pub fn render_sample(
    room: &Room,
    spec: &PolarGridSpec,
    params: &WorldParams,
    rng: &mut ChaCha8Rng,
) -> Result<(CartesianGrid, PolarGrid), DatasetError> {
    let pose = sample_pose(room, rng, params)?;
    let mut map = rasterize(&room.scene, pose, spec.radius, params.resolution);
    let visible = raytrace_visibility(&map)?;
    add_noise(&mut map, &visible, params.noise_rate, rng);
    let polar = cartesian_to_polar(&raytrace_visibility(&map)?, spec)?;
    Ok((map, polar))
}

/// Samples for every inlier class on every floor, and novel-class samples
/// on every floor. Each sample draws from its own stream derived from
/// `(seed, class, floor, index)`, so the result does not depend on thread
/// scheduling.
pub fn generate_world(params: &WorldParams, spec: &PolarGridSpec) -> Result<Vec<PlaceSample>, DatasetError> {
    params.check()?;
    let mut jobs = Vec::new();
    for floor in 0..params.floors {
        for (label, count) in INLIER_CLASSES
            .iter()
            .map(|l| (*l, params.samples_per_class))
            .chain(NOVEL_CLASSES.iter().map(|l| (*l, params.novel_samples_per_class)))
        {
            if count == 0 {
                continue;
            }
            let mut rooms = Vec::with_capacity(params.rooms_per_floor);
            for r in 0..params.rooms_per_floor {
                let mut rng = derived_rng(params.seed, &[class_code(label), floor as u64, r as u64, 1]);
                rooms.push(std::sync::Arc::new(generate_room(label, &mut rng, params)?));
            }
            for i in 0..count {
                jobs.push((label, floor, i, rooms[i % rooms.len()].clone()));
            }
        }
    }
    jobs.par_iter()
        .map(|(label, floor, i, room)| {
            let mut rng = derived_rng(params.seed, &[class_code(label), *floor as u64, *i as u64, 2]);
            let (cartesian, polar) = render_sample(room, spec, params, &mut rng)?;
            Ok(PlaceSample {
                id: format!("{label}-f{floor}-{i:04}"),
                label: label.to_string(),
                floor: *floor,
                cartesian: Some(cartesian),
                polar,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walls_leave_door_gaps() {
        let mut s = Scene::default();
        let room = Rect::new(0.0, 0.0, 4.0, 3.0);
        s.walls(room, 0.1, &[(Side::South, 2.0, 1.0)]);
        assert!(s.occupied(1.0, -0.05));
        assert!(!s.occupied(2.0, -0.05));
        assert!(s.occupied(3.0, -0.05));
        assert!(s.occupied(-0.05, 1.5));
        assert!(!s.occupied(2.0, 1.5));
    }

    #[test]
    fn rooms_admit_the_robot() {
        let p = WorldParams::default();
        for label in INLIER_CLASSES.iter().chain(NOVEL_CLASSES.iter()) {
            for k in 0..20 {
                let mut rng = derived_rng(1, &[k]);
                let room = generate_room(label, &mut rng, &p).unwrap();
                let pose = sample_pose(&room, &mut rng, &p).unwrap();
                assert!(!room.scene.occupied(pose.0, pose.1), "{label}");
            }
        }
    }

    #[test]
    fn infeasible_room_is_reported() {
        let p = WorldParams { elevator_side: (0.3, 0.3), ..Default::default() };
        let mut rng = derived_rng(3, &[]);
        let room = generate_room("elevator", &mut rng, &p).unwrap();
        assert!(matches!(sample_pose(&room, &mut rng, &p), Err(DatasetError::InfeasibleGeometry(_))));
    }

    #[test]
    fn centered_corridor_walls_land_at_analytic_range() {
        let spec = PolarGridSpec::default();
        let (half, t) = (1.0, 0.2);
        let room = Rect::new(-30.0, -half, 30.0, half);
        let mut scene = Scene::default();
        scene.walls(room, t, &[]);
        let map = rasterize(&scene, (0.0, 0.0, 0.0), spec.radius, 0.05);
        let polar = cartesian_to_polar(&raytrace_visibility(&map).unwrap(), &spec).unwrap();
        let slack = 0.05 * std::f64::consts::SQRT_2;
        for a in 0..spec.angular_bins {
            let (lo, hi) = (a as f64 * spec.angle_step(), (a + 1) as f64 * spec.angle_step());
            let max_sin = if (lo..=hi).contains(&FRAC_PI_2) || (lo..=hi).contains(&(3.0 * FRAC_PI_2)) {
                1.0
            } else {
                lo.sin().abs().max(hi.sin().abs())
            };
            let min_sin = lo.sin().abs().min(hi.sin().abs());
            let near = half / max_sin;
            let far = if min_sin > 0.0 { (half + t) / min_sin } else { f64::INFINITY };
            for r in 0..spec.radial_bins {
                let (inner, outer) = spec.ring(r);
                let c = polar.get(a, r);
                if outer < near - slack {
                    assert_eq!(c, Cell::Empty, "bin {a} ring {r} in front of the wall");
                }
                if inner > far + slack {
                    assert_eq!(c, Cell::Unknown, "bin {a} ring {r} behind the wall");
                }
            }
            if near + 0.3 < spec.radius {
                let first = (0..spec.radial_bins).find(|&r| polar.get(a, r) != Cell::Empty).expect("wall in range");
                let (inner, outer) = spec.ring(first);
                assert_eq!(polar.get(a, first), Cell::Occupied, "bin {a} first obstacle");
                assert!(outer >= near - slack && inner <= far + slack, "bin {a} wall at {inner}..{outer}");
            }
        }
        // along the axis every ring is free
        for a in [0, spec.angular_bins / 2 - 1, spec.angular_bins / 2, spec.angular_bins - 1] {
            assert!((0..spec.radial_bins).all(|r| polar.get(a, r) == Cell::Empty));
        }
    }

    #[test]
    fn generation_is_deterministic_and_consistent() {
        let spec = PolarGridSpec::default();
        let p = WorldParams { floors: 1, samples_per_class: 2, novel_samples_per_class: 1, noise_rate: 0.01, ..Default::default() };
        let a = generate_world(&p, &spec).unwrap();
        let b = generate_world(&p, &spec).unwrap();
        assert_eq!(a.len(), 4 * 2 + 2);
        assert_eq!(a, b);
        for s in &a {
            let cart = s.cartesian.as_ref().unwrap();
            assert_eq!(cartesian_to_polar(&raytrace_visibility(cart).unwrap(), &spec).unwrap(), s.polar);
        }
        let empty = WorldParams { samples_per_class: 0, novel_samples_per_class: 0, ..p };
        assert!(generate_world(&empty, &spec).unwrap().is_empty());
    }

    #[test]
    fn derived_streams_differ() {
        let a: u64 = derived_rng(1, &[2, 3]).gen();
        let b: u64 = derived_rng(1, &[3, 2]).gen();
        let c: u64 = derived_rng(1, &[2, 3]).gen();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
