use crate::world::{OccupancyGrid, Point2};

/// Point obstacles bucketed on a uniform hash grid for radius queries.
#[derive(Debug, Clone, Default)]
pub struct ObstacleSet {
    points: Vec<Point2>,
    bucket: f64,
    min: Point2,
    cols: usize,
    rows: usize,
    // bucket -> range into `order`
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl ObstacleSet {
    pub fn new(points: Vec<Point2>, bucket: f64) -> Self {
        let bucket = bucket.max(1e-3);
        if points.is_empty() {
            return Self {
                bucket,
                ..Default::default()
            };
        }
        let min = points.iter().fold(Point2::new(f64::INFINITY, f64::INFINITY), |m, p| {
            Point2::new(m.x.min(p.x), m.y.min(p.y))
        });
        let max = points.iter().fold(Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| {
            Point2::new(m.x.max(p.x), m.y.max(p.y))
        });
        let cols = ((max.x - min.x) / bucket).floor() as usize + 1;
        let rows = ((max.y - min.y) / bucket).floor() as usize + 1;
        let key = |p: &Point2| {
            let c = ((p.x - min.x) / bucket).floor() as usize;
            let r = ((p.y - min.y) / bucket).floor() as usize;
            r.min(rows - 1) * cols + c.min(cols - 1)
        };
        let mut counts = vec![0u32; cols * rows + 1];
        for p in &points {
            counts[key(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let k = key(p);
            order[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        Self {
            points,
            bucket,
            min,
            cols,
            rows,
            starts: counts,
            order,
        }
    }

    /// Obstacle points at the centers of occupied cells that touch free space.
    pub fn from_grid(grid: &OccupancyGrid, bucket: f64) -> Self {
        let (w, h) = (grid.width() as i64, grid.height() as i64);
        let points = grid
            .occupied_cells()
            .filter(|c| {
                (-1..=1i64).any(|dr| {
                    (-1..=1i64).any(|dc| {
                        let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
                        col >= 0
                            && row >= 0
                            && col < w
                            && row < h
                            && !grid.is_occupied(crate::world::CellIndex::new(col as usize, row as usize))
                    })
                })
            })
            .map(|c| grid.grid_to_world(c))
            .collect();
        Self::new(points, bucket)
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest obstacle within `radius` of `p`; ties keep the lower index.
    pub fn nearest_within(&self, p: Point2, radius: f64) -> Option<(Point2, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c0 = ((p.x - radius - self.min.x) / self.bucket).floor();
        let c1 = ((p.x + radius - self.min.x) / self.bucket).floor();
        let r0 = ((p.y - radius - self.min.y) / self.bucket).floor();
        let r1 = ((p.y + radius - self.min.y) / self.bucket).floor();
        if c1 < 0.0 || r1 < 0.0 || c0 >= self.cols as f64 || r0 >= self.rows as f64 {
            return None;
        }
        let (c0, c1) = (c0.max(0.0) as usize, (c1 as usize).min(self.cols - 1));
        let (r0, r1) = (r0.max(0.0) as usize, (r1 as usize).min(self.rows - 1));
        let mut best: Option<(u32, f64)> = None;
        for r in r0..=r1 {
            for c in c0..=c1 {
                let k = r * self.cols + c;
                for &idx in &self.order[self.starts[k] as usize..self.starts[k + 1] as usize] {
                    let d = self.points[idx as usize].distance(p);
                    if d <= radius {
                        match best {
                            Some((bi, bd)) if d > bd || (d == bd && idx > bi) => {}
                            _ => best = Some((idx, d)),
                        }
                    }
                }
            }
        }
        best.map(|(i, d)| (self.points[i as usize], d))
    }

    /// Distance to the nearest obstacle (brute force over all points).
    pub fn min_distance(&self, p: Point2) -> f64 {
        self.points.iter().map(|o| o.distance(p)).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_matches_brute_force() {
        let pts: Vec<Point2> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.731;
                Point2::new((t * 3.1).sin() * 4.0, (t * 1.7).cos() * 3.0)
            })
            .collect();
        let set = ObstacleSet::new(pts.clone(), 0.5);
        for k in 0..100 {
            let q = Point2::new((k as f64 * 0.37).sin() * 5.0, (k as f64 * 0.11).cos() * 4.0);
            let brute = pts
                .iter()
                .map(|p| p.distance(q))
                .filter(|d| *d <= 0.8)
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
            assert_eq!(set.nearest_within(q, 0.8).map(|x| x.1), brute);
        }
    }
}
