//! Layered cost field: static obstacles, inflation and the two human layers.
//!
//! Every layer is stored as a `u8` grid aligned with the occupancy grid; the
//! combined field is the cell-wise maximum of all layers. The human layers
//! additionally remember the poses they were rasterized from so that
//! optimizers can sample them analytically instead of reading the quantized
//! grid.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hateb::{Classification, HumanRecord};
use crate::world::{CellIndex, OccupancyGrid, Point2, Pose2D};

pub const LETHAL: u8 = 255;
/// Cost of cells whose center is within the robot radius of an obstacle.
pub const INSCRIBED: u8 = LETHAL - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    Static,
    Inflation,
    HumanSafety,
    HumanVisibility,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Static, Layer::Inflation, Layer::HumanSafety, Layer::HumanVisibility];

    fn slot(self) -> usize {
        match self {
            Layer::Static => 0,
            Layer::Inflation => 1,
            Layer::HumanSafety => 2,
            Layer::HumanVisibility => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanLayerParams {
    pub safety_amplitude: f64,
    pub safety_sigma: f64,
    pub safety_cutoff: f64,
    pub visibility_amplitude: f64,
    pub visibility_sigma: f64,
    pub visibility_cutoff: f64,
}

impl Default for HumanLayerParams {
    fn default() -> Self {
        Self {
            safety_amplitude: 200.0,
            safety_sigma: 0.5,
            safety_cutoff: 1.5,
            visibility_amplitude: 200.0,
            visibility_sigma: 0.8,
            visibility_cutoff: 3.0,
        }
    }
}

impl HumanLayerParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.safety_amplitude,
            self.safety_sigma,
            self.safety_cutoff,
            self.visibility_amplitude,
            self.visibility_sigma,
            self.visibility_cutoff,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("human layer parameters must be strictly positive".into()));
        }
        if self.safety_cutoff < self.safety_sigma || self.visibility_cutoff < self.visibility_sigma {
            return Err(Error::Config("human layer cutoffs must be at least their sigmas".into()));
        }
        if self.safety_amplitude > LETHAL as f64 || self.visibility_amplitude > LETHAL as f64 {
            return Err(Error::Config("human layer amplitudes must not exceed LETHAL".into()));
        }
        Ok(())
    }
}

/// Gaussian around the human, zero beyond the cutoff. Heading-independent.
pub fn human_safety_cost(human: &Pose2D, query: Point2, params: &HumanLayerParams) -> f64 {
    let d2 = (query - human.position()).dot(query - human.position());
    if d2 > params.safety_cutoff * params.safety_cutoff {
        return 0.0;
    }
    params.safety_amplitude * (-d2 / (2.0 * params.safety_sigma * params.safety_sigma)).exp()
}

/// Half Gaussian behind the human; zero in the front half-plane and beyond
/// the cutoff.
pub fn human_visibility_cost(human: &Pose2D, query: Point2, params: &HumanLayerParams) -> f64 {
    let local = human.to_local(query);
    if local.x >= 0.0 {
        return 0.0;
    }
    let d2 = local.dot(local);
    if d2 > params.visibility_cutoff * params.visibility_cutoff {
        return 0.0;
    }
    params.visibility_amplitude * (-d2 / (2.0 * params.visibility_sigma * params.visibility_sigma)).exp()
}

fn quantize(cost: f64) -> u8 {
    cost.round().clamp(0.0, LETHAL as f64) as u8
}

#[derive(Debug, Clone)]
pub struct CostmapStack {
    grid: Arc<OccupancyGrid>,
    layers: [Vec<u8>; 4],
    combined: Vec<u8>,
    human_sources: Vec<Pose2D>,
    human_params: HumanLayerParams,
}

impl CostmapStack {
    /// Stack with only the static layer populated.
    pub fn from_grid(grid: OccupancyGrid) -> Self {
        let n = grid.len();
        let static_layer: Vec<u8> = (0..n)
            .map(|i| if grid.is_occupied(grid.cell_of(i)) { LETHAL } else { 0 })
            .collect();
        Self {
            combined: static_layer.clone(),
            layers: [static_layer, vec![0; n], vec![0; n], vec![0; n]],
            grid: Arc::new(grid),
            human_sources: Vec::new(),
            human_params: HumanLayerParams::default(),
        }
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn shared_grid(&self) -> Arc<OccupancyGrid> {
        Arc::clone(&self.grid)
    }

    pub fn cost(&self, cell: CellIndex) -> u8 {
        self.combined[self.grid.linear(cell)]
    }

    pub fn layer_cost(&self, layer: Layer, cell: CellIndex) -> u8 {
        self.layers[layer.slot()][self.grid.linear(cell)]
    }

    pub fn layer(&self, layer: Layer) -> &[u8] {
        &self.layers[layer.slot()]
    }

    pub fn costs(&self) -> &[u8] {
        &self.combined
    }

    /// Combined cost at a world point; `LETHAL` outside the map.
    pub fn cost_at(&self, p: Point2) -> u8 {
        match self.grid.world_to_grid(p) {
            Ok(c) => self.cost(c),
            Err(_) => LETHAL,
        }
    }

    pub fn human_sources(&self) -> &[Pose2D] {
        &self.human_sources
    }

    pub fn human_params(&self) -> &HumanLayerParams {
        &self.human_params
    }

    fn raise(&mut self, layer: Layer, idx: usize, value: u8) {
        let slot = &mut self.layers[layer.slot()][idx];
        if value > *slot {
            *slot = value;
        }
        if value > self.combined[idx] {
            self.combined[idx] = value;
        }
    }

    /// Adds the obstacle inflation layer.
    pub fn inflate(&self, robot_radius: f64, decay: f64) -> CostmapStack {
        let mut out = self.clone();
        let grid = Arc::clone(&self.grid);
        let res = grid.resolution();
        let reach = if decay > 0.0 {
            robot_radius + ((INSCRIBED as f64) / 0.5).ln() / decay
        } else {
            robot_radius
        };
        let window = (reach / res).ceil() as i64 + 1;
        let (w, h) = (grid.width() as i64, grid.height() as i64);
        let mut best = vec![f64::INFINITY; grid.len()];
        for cell in grid.occupied_cells() {
            if !is_boundary(&grid, cell) {
                best[grid.linear(cell)] = 0.0;
                continue;
            }
            for dr in -window..=window {
                for dc in -window..=window {
                    let (col, row) = (cell.col as i64 + dc, cell.row as i64 + dr);
                    if col < 0 || row < 0 || col >= w || row >= h {
                        continue;
                    }
                    let d2 = ((dc * dc + dr * dr) as f64) * res * res;
                    let i = (row * w + col) as usize;
                    if d2 < best[i] {
                        best[i] = d2;
                    }
                }
            }
        }
        for (i, d2) in best.into_iter().enumerate() {
            if d2.is_finite() {
                let v = inflation_cost(d2.sqrt(), robot_radius, decay);
                if v > 0 {
                    out.raise(Layer::Inflation, i, v);
                }
            }
        }
        out
    }

    /// Rasterizes the human layers around every static, observable human.
    pub fn apply_human_layers(&self, humans: &[HumanRecord], params: &HumanLayerParams) -> CostmapStack {
        let poses: Vec<Pose2D> = humans
            .iter()
            .filter(|h| h.observable && h.classification == Classification::Static)
            .map(|h| h.pose)
            .collect();
        self.with_human_sources(&poses, params)
    }

    /// Rasterizes human layers around the given poses.
    pub fn with_human_sources(&self, poses: &[Pose2D], params: &HumanLayerParams) -> CostmapStack {
        let mut out = self.clone();
        out.human_params = *params;
        let grid = Arc::clone(&self.grid);
        for pose in poses {
            out.human_sources.push(*pose);
            let reach = params.safety_cutoff.max(params.visibility_cutoff);
            let Some((c0, r0, c1, r1)) = window_around(&grid, pose.position(), reach) else {
                continue;
            };
            for row in r0..=r1 {
                for col in c0..=c1 {
                    let cell = CellIndex::new(col, row);
                    let center = grid.grid_to_world(cell);
                    let i = grid.linear(cell);
                    let s = quantize(human_safety_cost(pose, center, params));
                    if s > 0 {
                        out.raise(Layer::HumanSafety, i, s);
                    }
                    let v = quantize(human_visibility_cost(pose, center, params));
                    if v > 0 {
                        out.raise(Layer::HumanVisibility, i, v);
                    }
                }
            }
        }
        out
    }

    /// Marks discs grown by the robot radius as lethal, with the usual
    /// inflation decay beyond. Used where humans are plain obstacles.
    pub fn with_obstacle_discs(&self, centers: &[Point2], disc_radius: f64, robot_radius: f64, decay: f64) -> CostmapStack {
        let mut out = self.clone();
        let grid = Arc::clone(&self.grid);
        let reach = disc_radius + robot_radius + if decay > 0.0 { ((INSCRIBED as f64) / 0.5).ln() / decay } else { 0.0 };
        for c in centers {
            let Some((c0, r0, c1, r1)) = window_around(&grid, *c, reach) else {
                continue;
            };
            for row in r0..=r1 {
                for col in c0..=c1 {
                    let cell = CellIndex::new(col, row);
                    let d = grid.grid_to_world(cell).distance(*c);
                    let i = grid.linear(cell);
                    if d <= disc_radius + robot_radius {
                        out.raise(Layer::Static, i, LETHAL);
                    } else {
                        let v = inflation_cost(d - disc_radius, robot_radius, decay);
                        if v > 0 {
                            out.raise(Layer::Inflation, i, v);
                        }
                    }
                }
            }
        }
        out
    }

    /// Copy of this stack without the human layer source closest to `p`
    /// (within `tol`); the remaining sources are rasterized again.
    pub fn without_human_near(&self, p: Point2, tol: f64) -> CostmapStack {
        let Some(skip) = self
            .human_sources
            .iter()
            .position(|s| s.position().distance(p) <= tol)
        else {
            return self.clone();
        };
        let mut base = self.clone();
        base.human_sources.clear();
        base.layers[Layer::HumanSafety.slot()].iter_mut().for_each(|v| *v = 0);
        base.layers[Layer::HumanVisibility.slot()].iter_mut().for_each(|v| *v = 0);
        for i in 0..base.combined.len() {
            base.combined[i] = base.layers[0][i].max(base.layers[1][i]);
        }
        let rest: Vec<Pose2D> = self
            .human_sources
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, s)| *s)
            .collect();
        base.with_human_sources(&rest, &self.human_params)
    }

    /// Analytic human layer values at `p` (max over sources, like the raster).
    pub fn human_layer_values(&self, p: Point2) -> (f64, f64) {
        let mut safety: f64 = 0.0;
        let mut visibility: f64 = 0.0;
        for pose in &self.human_sources {
            safety = safety.max(human_safety_cost(pose, p, &self.human_params));
            visibility = visibility.max(human_visibility_cost(pose, p, &self.human_params));
        }
        (safety, visibility)
    }

    /// Plain-text PGM (P2) dump of one layer, or of the combined field.
    pub fn to_pgm(&self, layer: Option<Layer>) -> String {
        let data = match layer {
            Some(l) => &self.layers[l.slot()],
            None => &self.combined,
        };
        let (w, h) = (self.grid.width(), self.grid.height());
        let mut out = format!("P2\n{w} {h}\n{LETHAL}\n");
        for row in (0..h).rev() {
            let line: Vec<String> = (0..w).map(|col| data[row * w + col].to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Inflation cost at obstacle distance `d`.
pub fn inflation_cost(d: f64, robot_radius: f64, decay: f64) -> u8 {
    if d <= robot_radius + 1e-9 {
        INSCRIBED
    } else {
        quantize(INSCRIBED as f64 * (-decay * (d - robot_radius)).exp())
    }
}

fn is_boundary(grid: &OccupancyGrid, cell: CellIndex) -> bool {
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    for dr in -1..=1i64 {
        for dc in -1..=1i64 {
            let (col, row) = (cell.col as i64 + dc, cell.row as i64 + dr);
            if col < 0 || row < 0 || col >= w || row >= h {
                continue;
            }
            if !grid.is_occupied(CellIndex::new(col as usize, row as usize)) {
                return true;
            }
        }
    }
    false
}

fn window_around(grid: &OccupancyGrid, p: Point2, reach: f64) -> Option<(usize, usize, usize, usize)> {
    let (cx, cy) = grid.continuous_cell(p);
    let r = reach / grid.resolution();
    let c0 = (cx - r).floor().max(0.0);
    let r0 = (cy - r).floor().max(0.0);
    let c1 = (cx + r).ceil().min(grid.width() as f64 - 1.0);
    let r1 = (cy + r).ceil().min(grid.height() as f64 - 1.0);
    if c0 > c1 || r0 > r1 {
        return None;
    }
    Some((c0 as usize, r0 as usize, c1 as usize, r1 as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hateb::HumanRecord;
    use std::f64::consts::PI;

    fn params() -> HumanLayerParams {
        HumanLayerParams::default()
    }

    fn open(w: usize, h: usize) -> CostmapStack {
        CostmapStack::from_grid(OccupancyGrid::new(w, h, 0.1).unwrap())
    }

    fn record(pose: Pose2D, classification: Classification, observable: bool) -> HumanRecord {
        HumanRecord {
            id: 1,
            pose,
            velocity: Point2::default(),
            classification,
            visible: observable,
            observable,
            band: None,
        }
    }

    #[test]
    fn safety_peak_cutoff_and_symmetry() {
        let p = params();
        let h = Pose2D::new(1.0, 1.0, 0.3);
        assert_eq!(human_safety_cost(&h, h.position(), &p), p.safety_amplitude);
        assert_eq!(human_safety_cost(&h, Point2::new(2.6, 1.0), &p), 0.0);
        let a = human_safety_cost(&h, Point2::new(1.7, 1.0), &p);
        let b = human_safety_cost(&h, Point2::new(0.3, 1.0), &p);
        assert_eq!(a, b);
    }

    #[test]
    fn visibility_front_zero_back_gaussian() {
        let p = params();
        let h = Pose2D::new(0.0, 0.0, 0.0);
        assert_eq!(human_visibility_cost(&h, Point2::new(1.0, 0.0), &p), 0.0);
        assert_eq!(human_visibility_cost(&h, Point2::new(-1.7, 0.0), &HumanLayerParams { visibility_cutoff: 1.5, ..p }), 0.0);
        let at_sigma = human_visibility_cost(&h, Point2::new(-p.visibility_sigma, 0.0), &p);
        assert!((at_sigma - p.visibility_amplitude * (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn static_observable_human_peaks_at_cell() {
        let base = open(40, 40);
        let h = Pose2D::new(2.05, 2.05, 0.0);
        let out = base.apply_human_layers(&[record(h, Classification::Static, true)], &params());
        let cell = out.grid().world_to_grid(h.position()).unwrap();
        assert_eq!(out.cost(cell), 200);
        assert_eq!(out.costs().iter().copied().max(), Some(200));
    }

    #[test]
    fn dynamic_or_unobservable_humans_add_nothing() {
        let base = open(40, 40);
        let h = Pose2D::new(2.0, 2.0, 0.0);
        let dynamic = base.apply_human_layers(&[record(h, Classification::Dynamic, true)], &params());
        assert_eq!(dynamic.costs(), base.costs());
        let far = base.apply_human_layers(&[record(h, Classification::Static, false)], &params());
        assert_eq!(far.costs(), base.costs());
    }

    #[test]
    fn inflation_boundary_values() {
        let mut g = OccupancyGrid::new(41, 41, 0.1).unwrap();
        g.set_occupied(CellIndex::new(20, 20), true);
        let s = CostmapStack::from_grid(g).inflate(0.3, 3.0);
        assert_eq!(s.cost(CellIndex::new(20, 20)), LETHAL);
        assert_eq!(s.cost(CellIndex::new(23, 20)), INSCRIBED);
        assert!(s.cost(CellIndex::new(24, 20)) < INSCRIBED);
    }

    #[test]
    fn inflation_matches_brute_force_distance_transform() {
        let mut g = OccupancyGrid::new(30, 20, 0.1).unwrap();
        for (c, r) in [(5, 5), (6, 5), (7, 5), (20, 12), (20, 13), (0, 19), (29, 0)] {
            g.set_occupied(CellIndex::new(c, r), true);
        }
        let s = CostmapStack::from_grid(g.clone()).inflate(0.25, 4.0);
        let occ: Vec<Point2> = g.occupied_cells().map(|c| g.grid_to_world(c)).collect();
        for row in 0..20 {
            for col in 0..30 {
                let cell = CellIndex::new(col, row);
                let p = g.grid_to_world(cell);
                let d = occ.iter().map(|o| o.distance(p)).fold(f64::INFINITY, f64::min);
                let expected = if g.is_occupied(cell) { LETHAL } else { inflation_cost(d, 0.25, 4.0) };
                assert_eq!(s.cost(cell), expected, "cell {cell:?}");
            }
        }
        // costs along a ray leaving the isolated obstacle never increase
        let ray: Vec<u8> = (20..30).map(|c| s.cost(CellIndex::new(c, 13))).collect();
        assert!(ray.windows(2).all(|w| w[1] <= w[0]), "{ray:?}");
    }

    #[test]
    fn pgm_export_shape() {
        let s = open(4, 3);
        let pgm = s.to_pgm(None);
        let lines: Vec<&str> = pgm.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], "4 3");
        assert_eq!(lines.len(), 3 + 3);
        assert!(s.to_pgm(Some(Layer::HumanSafety)).starts_with("P2"));
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        assert!(HumanLayerParams { safety_cutoff: 0.1, ..params() }.validate().is_err());
        assert!(HumanLayerParams { visibility_sigma: 0.0, ..params() }.validate().is_err());
    }

    #[test]
    fn obstacle_disc_grows_by_robot_radius() {
        let g = OccupancyGrid::new(40, 40, 0.1).unwrap();
        let s = CostmapStack::from_grid(g).with_obstacle_discs(&[Point2::new(2.0, 2.0)], 0.3, 0.3, 5.0);
        assert_eq!(s.cost_at(Point2::new(2.55, 2.05)), LETHAL);
        let beyond = s.cost_at(Point2::new(2.75, 2.05));
        assert!(beyond > 0 && beyond < INSCRIBED, "{beyond}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn safety_heading_invariant(x in 1.0f64..5.0, y in 1.0f64..5.0, a in -PI..PI, b in -PI..PI) {
                let base = open(60, 60);
                let s1 = base.with_human_sources(&[Pose2D::new(x, y, a)], &params());
                let s2 = base.with_human_sources(&[Pose2D::new(x, y, b)], &params());
                prop_assert_eq!(s1.layer(Layer::HumanSafety), s2.layer(Layer::HumanSafety));
            }

            #[test]
            fn max_combination_never_lowers(x in 0.0f64..4.0, y in 0.0f64..4.0, a in -PI..PI) {
                let mut g = OccupancyGrid::new(40, 40, 0.1).unwrap();
                g.set_occupied(CellIndex::new(10, 10), true);
                let base = CostmapStack::from_grid(g).inflate(0.3, 3.0);
                let out = base.with_human_sources(&[Pose2D::new(x, y, a)], &params());
                prop_assert!(out.costs().iter().zip(base.costs()).all(|(o, b)| o >= b));
            }
        }

        #[test]
        fn visibility_mirror_symmetric_about_heading() {
            let base = open(61, 61);
            let h = Pose2D::new(3.05, 3.05, 0.0);
            let s = base.with_human_sources(&[h], &params());
            for row in 0..61 {
                for col in 0..61 {
                    let mirrored = CellIndex::new(col, 60 - row);
                    assert_eq!(
                        s.layer_cost(Layer::HumanVisibility, CellIndex::new(col, row)),
                        s.layer_cost(Layer::HumanVisibility, mirrored)
                    );
                }
            }
        }
    }
}
