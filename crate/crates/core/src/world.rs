//! Occupancy grids, planar poses and scenario files.
//!
//! Map files are plain ASCII: a header line `W H RES` followed by `H` rows of
//! `W` characters, `.` for free and `#` for occupied. The first text row is
//! the top of the map (largest `y`). Scenario files are JSON and reference a
//! map file relative to their own location.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    if !angle.is_finite() {
        return angle;
    }
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Planar pose. The heading is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn from_point(p: Point2, heading: f64) -> Self {
        Self::new(p.x, p.y, heading)
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn set_heading(&mut self, heading: f64) {
        self.heading = normalize_angle(heading);
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Unit vector along the heading.
    pub fn direction(&self) -> Point2 {
        Point2::from_angle(self.heading)
    }

    /// Composition `self ⊕ local`: `local` is expressed in this pose's frame.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let (s, c) = self.heading.sin_cos();
        Pose2D::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
            self.heading + local.heading,
        )
    }

    /// Expresses a world point in this pose's body frame.
    pub fn to_local(&self, p: Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        let d = p - self.position();
        Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        self.position().distance(other.position())
    }
}

impl fmt::Display for Pose2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3}, {:.3})", self.x, self.y, self.heading)
    }
}

// Poses serialize as `[x, y, heading]` triples.
impl Serialize for Pose2D {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y, self.heading].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose2D {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [x, y, h] = <[f64; 3]>::deserialize(deserializer)?;
        Ok(Pose2D::new(x, y, h))
    }
}

/// Column/row address of a grid cell; row 0 is the bottom row (smallest `y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
}

impl CellIndex {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2D,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    /// An all-free grid with its origin at `(0, 0)`.
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self> {
        Self::with_origin(width, height, resolution, Pose2D::default())
    }

    pub fn with_origin(width: usize, height: usize, resolution: f64, origin: Pose2D) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format("grid dimensions must be at least 1x1".into()));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Format(format!("invalid resolution {resolution}")));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin: Pose2D::new(origin.x, origin.y, 0.0),
            cells: vec![false; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2D {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn linear(&self, cell: CellIndex) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_of(&self, linear: usize) -> CellIndex {
        CellIndex::new(linear % self.width, linear / self.width)
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    pub fn is_occupied(&self, cell: CellIndex) -> bool {
        self.cells[self.linear(cell)]
    }

    pub fn set_occupied(&mut self, cell: CellIndex, occupied: bool) {
        let i = self.linear(cell);
        self.cells[i] = occupied;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &occ)| occ)
            .map(|(i, _)| self.cell_of(i))
    }

    /// Fractional cell coordinates of a world point; may be out of range.
    pub fn continuous_cell(&self, p: Point2) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.resolution,
            (p.y - self.origin.y) / self.resolution,
        )
    }

    pub fn world_to_grid(&self, p: Point2) -> Result<CellIndex> {
        let (cx, cy) = self.continuous_cell(p);
        let (col, row) = (cx.floor(), cy.floor());
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 || !col.is_finite() || !row.is_finite() {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        Ok(CellIndex::new(col as usize, row as usize))
    }

    pub fn pose_to_grid(&self, pose: &Pose2D) -> Result<CellIndex> {
        self.world_to_grid(pose.position())
    }

    /// World coordinates of the cell center.
    pub fn grid_to_world(&self, cell: CellIndex) -> Point2 {
        Point2::new(
            self.origin.x + (cell.col as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn is_free_at(&self, p: Point2) -> bool {
        self.world_to_grid(p).map(|c| !self.is_occupied(c)).unwrap_or(false)
    }

    /// True when a disc of `radius` around `p` touches no occupied cell and
    /// lies inside the map.
    pub fn disc_is_free(&self, p: Point2, radius: f64) -> bool {
        let r_cells = (radius / self.resolution).ceil() as i64 + 1;
        let Ok(center) = self.world_to_grid(p) else {
            return false;
        };
        for dr in -r_cells..=r_cells {
            for dc in -r_cells..=r_cells {
                let col = center.col as i64 + dc;
                let row = center.row as i64 + dr;
                if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
                    if self.square_distance_raw(p, col, row) < radius {
                        return false;
                    }
                    continue;
                }
                let cell = CellIndex::new(col as usize, row as usize);
                if self.is_occupied(cell) && self.square_distance(p, cell) < radius {
                    return false;
                }
            }
        }
        true
    }

    /// Distance from a point to the closest point of a cell's square.
    pub fn square_distance(&self, p: Point2, cell: CellIndex) -> f64 {
        self.square_distance_raw(p, cell.col as i64, cell.row as i64)
    }

    fn square_distance_raw(&self, p: Point2, col: i64, row: i64) -> f64 {
        let x0 = self.origin.x + col as f64 * self.resolution;
        let y0 = self.origin.y + row as f64 * self.resolution;
        let dx = (x0 - p.x).max(0.0).max(p.x - (x0 + self.resolution));
        let dy = (y0 - p.y).max(0.0).max(p.y - (y0 + self.resolution));
        dx.hypot(dy)
    }

    /// Serializes back into the ASCII map format.
    pub fn to_map_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.resolution);
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                out.push(if self.is_occupied(CellIndex::new(col, row)) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the ASCII map format.
pub fn load_map(text: &str) -> Result<OccupancyGrid> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty map".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::Format(format!("header must be `W H RES`, got `{header}`")));
    }
    let width: usize = fields[0]
        .parse()
        .map_err(|_| Error::Format(format!("bad width `{}`", fields[0])))?;
    let height: usize = fields[1]
        .parse()
        .map_err(|_| Error::Format(format!("bad height `{}`", fields[1])))?;
    let resolution: f64 = fields[2]
        .parse()
        .map_err(|_| Error::Format(format!("bad resolution `{}`", fields[2])))?;
    let mut grid = OccupancyGrid::new(width, height, resolution)?;

    let rows: Vec<&str> = lines.map(|l| l.trim_end_matches('\r')).collect();
    if rows.len() != height {
        return Err(Error::Format(format!("expected {height} rows, found {}", rows.len())));
    }
    for (i, line) in rows.iter().enumerate() {
        let n = line.chars().count();
        if n != width {
            return Err(Error::Format(format!(
                "ragged row {}: expected {width} characters, found {n}",
                i + 1
            )));
        }
        let row = height - 1 - i;
        for (col, ch) in line.chars().enumerate() {
            match ch {
                '.' => {}
                '#' => grid.set_occupied(CellIndex::new(col, row), true),
                other => {
                    return Err(Error::Format(format!(
                        "unknown character `{other}` at row {}, column {}",
                        i + 1,
                        col + 1
                    )))
                }
            }
        }
    }
    Ok(grid)
}

/// Scripted behavior of a simulated human.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Linear,
    MoveAndStop,
    Circular,
    RunToPoint,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    #[serde(default)]
    pub speed: f64,
    #[serde(default)]
    pub stop_time: f64,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub radius: f64,
    /// Travel direction on the circle: +1 counter-clockwise, -1 clockwise.
    #[serde(default = "default_direction")]
    pub direction: f64,
    #[serde(default)]
    pub target: Option<Pose2D>,
    #[serde(default)]
    pub trigger_time: f64,
}

fn default_direction() -> f64 {
    1.0
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            speed: 0.0,
            stop_time: 0.0,
            center: None,
            radius: 0.0,
            direction: 1.0,
            target: None,
            trigger_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSpec {
    pub id: u32,
    pub start: Pose2D,
    pub controller: ControllerKind,
    #[serde(default)]
    pub params: ControllerParams,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Path handed to the external prediction overlay, if any.
    #[serde(default)]
    pub external_path: Option<Vec<Pose2D>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub start: Pose2D,
    pub goal: Pose2D,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    0.3
}

/// Which prediction service is configured for DualBand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualBandService {
    PredictBehind,
    PredictGoal,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSpec {
    #[serde(default)]
    pub service: DualBandService,
    #[serde(default)]
    pub external: bool,
    #[serde(default)]
    pub goals: Vec<Pose2D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuccessRule {
    ReachGoal,
    DetectBlockageAndAbort,
}

/// Per-seed perturbation of the human scripts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Uniform position jitter half-width, meters.
    #[serde(default)]
    pub position: f64,
    /// Relative speed jitter half-width.
    #[serde(default)]
    pub speed: f64,
    /// Jitter half-width on stop/trigger times, seconds.
    #[serde(default)]
    pub timing: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            position: 0.05,
            speed: 0.05,
            timing: 0.2,
        }
    }
}

/// On-disk scenario layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    map: String,
    robot: RobotSpec,
    #[serde(default)]
    humans: Vec<HumanSpec>,
    #[serde(default)]
    prediction: PredictionSpec,
    time_limit_s: f64,
    success_rule: SuccessRule,
    #[serde(default)]
    noise: NoiseSpec,
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub map_ref: String,
    pub map: OccupancyGrid,
    pub robot: RobotSpec,
    pub humans: Vec<HumanSpec>,
    pub prediction: PredictionSpec,
    pub time_limit_s: f64,
    pub success_rule: SuccessRule,
    pub noise: NoiseSpec,
    /// Canonical JSON of the scenario, used for hashing.
    pub canonical: String,
}

impl ScenarioSpec {
    /// Hex SHA-256 of the canonical scenario text plus the map text.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.canonical.as_bytes());
        h.update(self.map.to_map_text().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn human_ids(&self) -> Vec<u32> {
        self.humans.iter().map(|h| h.id).collect()
    }
}

/// Parses a scenario; `resolve_map` maps the `map` reference to map text.
pub fn load_scenario_with<F>(text: &str, resolve_map: F) -> Result<ScenarioSpec>
where
    F: FnOnce(&str) -> Result<String>,
{
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("scenario: {e}")))?;
    let map_text = resolve_map(&file.map)?;
    let map = load_map(&map_text)?;
    validate(&file, &map)?;
    let canonical = serde_json::to_string(&file).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(ScenarioSpec {
        name: file.name.clone().unwrap_or_else(|| "unnamed".into()),
        map_ref: file.map,
        map,
        robot: file.robot,
        humans: file.humans,
        prediction: file.prediction,
        time_limit_s: file.time_limit_s,
        success_rule: file.success_rule,
        noise: file.noise,
        canonical,
    })
}

/// Parses a scenario whose map path is relative to `base_dir`.
pub fn load_scenario(text: &str, base_dir: &Path) -> Result<ScenarioSpec> {
    load_scenario_with(text, |map_ref| {
        let path = base_dir.join(map_ref);
        std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    })
}

/// Reads a scenario file from disk.
pub fn load_scenario_file(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut spec = load_scenario(&text, path.parent().unwrap_or(Path::new(".")))?;
    if spec.name == "unnamed" {
        if let Some(stem) = path.file_stem() {
            spec.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(spec)
}

fn validate(file: &ScenarioFile, map: &OccupancyGrid) -> Result<()> {
    let check_free = |what: &str, pose: &Pose2D| -> Result<()> {
        let cell = map
            .pose_to_grid(pose)
            .map_err(|_| Error::Validation(format!("{what} {pose} is outside the map")))?;
        if map.is_occupied(cell) {
            return Err(Error::Validation(format!("{what} {pose} lies in an occupied cell")));
        }
        Ok(())
    };
    check_free("robot start", &file.robot.start)?;
    check_free("robot goal", &file.robot.goal)?;
    if !(file.time_limit_s > 0.0) {
        return Err(Error::Validation("time_limit_s must be positive".into()));
    }
    if !(file.robot.radius > 0.0) {
        return Err(Error::Validation("robot radius must be positive".into()));
    }
    let mut ids: Vec<u32> = file.humans.iter().map(|h| h.id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Validation(format!("duplicate human id {}", w[0])));
    }
    for h in &file.humans {
        if h.params.speed > 2.0 || h.params.speed < 0.0 {
            return Err(Error::Validation(format!("human {} speed must lie in [0, 2] m/s", h.id)));
        }
        if h.controller == ControllerKind::Circular && !(h.params.radius > 0.0) {
            return Err(Error::Validation(format!("human {} circular controller needs radius > 0", h.id)));
        }
        if h.controller == ControllerKind::RunToPoint && h.params.target.is_none() {
            return Err(Error::Validation(format!("human {} run_to_point needs a target", h.id)));
        }
    }
    if file.prediction.service == DualBandService::PredictGoal && file.prediction.goals.is_empty() {
        return Err(Error::Validation("PredictGoal needs at least one candidate goal".into()));
    }
    Ok(())
}
