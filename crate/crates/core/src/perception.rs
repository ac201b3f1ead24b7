//! Synthetic bird's-eye-view occupancy perception.
//!
//! Stands in for the camera and segmentation stack: ground truth is rendered
//! by rasterising vehicle footprints, each connected vehicle observes the
//! cells inside its own field of view with a distance-decaying detection
//! probability, and fusion is a cell-wise OR. The contribution metrics are
//! computed on these binary grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{rect_corners, OrientedRect, Point};
use crate::world::{ObjectState, WorldState};
use crate::{Error, Result};

pub const DEFAULT_CELL_SIZE: f64 = 0.5;

/// Binary occupancy grid anchored to a frame rectangle.
///
/// Column index runs along the frame heading, row index across it. Cell
/// `(r, c)` has its centre at local coordinates
/// `((c + 0.5) * cell - L/2, (r + 0.5) * cell - W/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    frame: OrientedRect,
    cell_size: f64,
    width: usize,
    height: usize,
    bits: Vec<u64>,
}

impl BevGrid {
    pub fn new(frame: OrientedRect, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cell size must be > 0, got {cell_size}"
            )));
        }
        let width = (frame.length / cell_size).round() as usize;
        let height = (frame.width / cell_size).round() as usize;
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("grid has zero cells".into()));
        }
        let words = (width * height).div_ceil(64);
        Ok(BevGrid {
            frame,
            cell_size,
            width,
            height,
            bits: vec![0; words],
        })
    }

    /// Empty grid with the same frame and dimensions.
    pub fn blank_like(&self) -> Self {
        BevGrid {
            bits: vec![0; self.bits.len()],
            ..self.clone()
        }
    }

    pub fn frame(&self) -> &OrientedRect {
        &self.frame
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn width_cells(&self) -> usize {
        self.width
    }

    pub fn height_cells(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        let i = row * self.width + col;
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = row * self.width + col;
        if value {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn popcount(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Indices `(row, col)` of occupied cells in row-major order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let b = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(wi * 64 + b)
            })
            .map(move |i| (i / w, i % w))
        })
    }

    /// Cell centre in grid-local coordinates.
    pub fn cell_center_local(&self, row: usize, col: usize) -> Point {
        Point::new(
            (col as f64 + 0.5) * self.cell_size - self.frame.length / 2.0,
            (row as f64 + 0.5) * self.cell_size - self.frame.width / 2.0,
        )
    }

    pub fn cell_center_world(&self, row: usize, col: usize) -> Point {
        self.frame.center.to_world(self.cell_center_local(row, col))
    }

    fn check_same_frame(&self, other: &BevGrid) -> Result<()> {
        if self.width != other.width
            || self.height != other.height
            || self.cell_size != other.cell_size
            || self.frame != other.frame
        {
            return Err(Error::FrameMismatch {
                left: self.describe(),
                right: other.describe(),
            });
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let c = &self.frame.center;
        format!(
            "{}x{} cells of {} m at ({}, {}, {})",
            self.width, self.height, self.cell_size, c.x, c.y, c.heading
        )
    }

    fn or_assign(&mut self, other: &BevGrid) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    /// Marks every cell whose square overlaps `rect` with positive area.
    pub fn rasterize(&mut self, rect: &OrientedRect) {
        let cs = self.cell_size;
        let hl = self.frame.length / 2.0;
        let hw = self.frame.width / 2.0;
        let local: Vec<Point> = rect_corners(rect)
            .vertices()
            .iter()
            .map(|&p| self.frame.center.to_local(p))
            .collect();
        let (mut minx, mut maxx, mut miny, mut maxy) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &local {
            minx = minx.min(p.x);
            maxx = maxx.max(p.x);
            miny = miny.min(p.y);
            maxy = maxy.max(p.y);
        }
        let col_lo = ((minx + hl) / cs).floor().max(0.0) as usize;
        let col_hi = (((maxx + hl) / cs).ceil().max(0.0) as usize).min(self.width);
        let row_lo = ((miny + hw) / cs).floor().max(0.0) as usize;
        let row_hi = (((maxy + hw) / cs).ceil().max(0.0) as usize).min(self.height);
        for row in row_lo..row_hi {
            let y0 = row as f64 * cs - hw;
            for col in col_lo..col_hi {
                let x0 = col as f64 * cs - hl;
                let cell = [
                    Point::new(x0, y0),
                    Point::new(x0 + cs, y0),
                    Point::new(x0 + cs, y0 + cs),
                    Point::new(x0, y0 + cs),
                ];
                if crate::geometry::overlaps_with_area(&cell, &local) {
                    self.set(row, col, true);
                }
            }
        }
    }

    /// ASCII bitmap in plain PGM (`P2`, max value 1), one row per line.
    pub fn to_pgm(&self) -> String {
        let mut out = String::with_capacity(self.width * self.height * 2 + 32);
        let _ = writeln!(out, "P2\n{} {}\n1", self.width, self.height);
        for row in (0..self.height).rev() {
            let line: Vec<&str> = (0..self.width)
                .map(|c| if self.get(row, c) { "1" } else { "0" })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Per-cell detection model for a connected vehicle's own sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionModel {
    pub base_prob: f64,
    /// Decay rate per metre of distance from the observer.
    pub distance_decay: f64,
    /// Probability that a free in-view cell is reported occupied.
    pub false_positive: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        DetectionModel {
            base_prob: 0.9,
            distance_decay: 0.02,
            false_positive: 0.0,
        }
    }
}

impl DetectionModel {
    pub fn perfect() -> Self {
        DetectionModel {
            base_prob: 1.0,
            distance_decay: 0.0,
            false_positive: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.base_prob) {
            return Err(Error::Config(format!(
                "detection.base_prob must be in [0,1], got {}",
                self.base_prob
            )));
        }
        if !(self.distance_decay >= 0.0 && self.distance_decay.is_finite()) {
            return Err(Error::Config("detection.distance_decay must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.false_positive) {
            return Err(Error::Config("detection.false_positive must be in [0,1]".into()));
        }
        Ok(())
    }

    pub fn detection_prob(&self, distance: f64) -> f64 {
        (self.base_prob * (-self.distance_decay * distance.max(0.0)).exp()).clamp(0.0, 1.0)
    }
}

/// Constants of the compression degradation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationParams {
    pub beta: f64,
    pub gamma: f64,
    pub rho0: f64,
}

impl Default for CompensationParams {
    fn default() -> Self {
        CompensationParams {
            beta: 0.34,
            gamma: 0.15,
            rho0: 1.0,
        }
    }
}

/// Occupancy grid of every vehicle footprint in the frame.
pub fn render_ground_truth(world: &WorldState, frame: &OrientedRect, cell_size: f64) -> Result<BevGrid> {
    let mut grid = BevGrid::new(*frame, cell_size)?;
    // objects whose footprint cannot reach the frame are skipped early
    let reach = (frame.length.hypot(frame.width) + 1.0) / 2.0;
    for o in world.all() {
        let fp = o.footprint();
        let d = (o.pose.x - frame.center.x).hypot(o.pose.y - frame.center.y);
        if d > reach + fp.length.hypot(fp.width) / 2.0 {
            continue;
        }
        grid.rasterize(&fp);
    }
    Ok(grid)
}

/// What `observer` reports of `ground_truth`: in-view occupied cells survive
/// with the distance-dependent detection probability; out-of-view cells are
/// empty. Draws one uniform per occupied in-view cell in row-major order
/// (plus one per free in-view cell when false positives are enabled).
pub fn observe(
    ground_truth: &BevGrid,
    observer: &ObjectState,
    fov: &OrientedRect,
    det: &DetectionModel,
    rng: &mut ChaCha8Rng,
) -> BevGrid {
    let mut out = ground_truth.blank_like();
    let origin = observer.pose.position();
    if det.false_positive > 0.0 {
        for row in 0..ground_truth.height {
            for col in 0..ground_truth.width {
                let c = ground_truth.cell_center_world(row, col);
                if !fov.contains(c) {
                    continue;
                }
                let u: f64 = rng.gen();
                let hit = if ground_truth.get(row, col) {
                    u < det.detection_prob((c.x - origin.x).hypot(c.y - origin.y))
                } else {
                    u < det.false_positive
                };
                if hit {
                    out.set(row, col, true);
                }
            }
        }
        return out;
    }
    for (row, col) in ground_truth.occupied() {
        let c = ground_truth.cell_center_world(row, col);
        if !fov.contains(c) {
            continue;
        }
        let p = det.detection_prob((c.x - origin.x).hypot(c.y - origin.y));
        let u: f64 = rng.gen();
        if u < p {
            out.set(row, col, true);
        }
    }
    out
}

/// Local BEV map of `observer`, rendered in `frame`.
pub fn render_local_bev(
    observer: &ObjectState,
    world: &WorldState,
    det: &DetectionModel,
    frame: &OrientedRect,
    fov_side: f64,
    cell_size: f64,
    rng: &mut ChaCha8Rng,
) -> Result<BevGrid> {
    let gt = render_ground_truth(world, frame, cell_size)?;
    let fov = OrientedRect::square(observer.pose, fov_side)?;
    Ok(observe(&gt, observer, &fov, det, rng))
}

/// Drops each occupied cell independently with probability `drop_prob`.
pub fn degrade(grid: &BevGrid, drop_prob: f64, rng: &mut ChaCha8Rng) -> BevGrid {
    if drop_prob <= 0.0 {
        return grid.clone();
    }
    let mut out = grid.blank_like();
    for (row, col) in grid.occupied() {
        let u: f64 = rng.gen();
        if u >= drop_prob {
            out.set(row, col, true);
        }
    }
    out
}

/// Cell-wise OR of one or more grids sharing a frame.
pub fn fuse_bev<'a, I>(grids: I) -> Result<BevGrid>
where
    I: IntoIterator<Item = &'a BevGrid>,
{
    let mut iter = grids.into_iter();
    let mut out = iter
        .next()
        .ok_or_else(|| Error::InvalidArgument("fusion needs at least one grid".into()))?
        .clone();
    for g in iter {
        out.check_same_frame(g)?;
        out.or_assign(g);
    }
    Ok(out)
}

/// `|a ∧ b| / |a ∨ b|`, defined as 1 when both grids are empty.
pub fn iou(a: &BevGrid, b: &BevGrid) -> Result<f64> {
    a.check_same_frame(b)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (x & y).count_ones() as u64;
        union += (x | y).count_ones() as u64;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Drop in fused-map IoU when `target` is removed from the selected set.
///
/// The ego's own grid participates in both fusions.
pub fn marginal_segmentation_accuracy(
    selected: &[u32],
    target: u32,
    ego: &BevGrid,
    grids: &BTreeMap<u32, BevGrid>,
) -> Result<f64> {
    if !selected.contains(&target) {
        return Err(Error::InvalidArgument(format!(
            "CAV {target} is not in the selected set {selected:?}"
        )));
    }
    let lookup = |id: u32| {
        grids
            .get(&id)
            .ok_or_else(|| Error::InvalidArgument(format!("no grid for CAV {id}")))
    };
    let mut with = ego.clone();
    let mut without = ego.clone();
    for &id in selected {
        let g = lookup(id)?;
        with.check_same_frame(g)?;
        with.or_assign(g);
        if id != target {
            without.or_assign(g);
        }
    }
    Ok(1.0 - iou(&with, &without)?)
}

/// Weighted sum of segmentation gain and coverage gain.
pub fn marginal_bev_contribution(m: f64, a: f64, omega: f64) -> f64 {
    m + omega * a
}

/// Loss of contribution caused by compressing a feature by `rho`.
pub fn compression_degradation(rho: f64, params: &CompensationParams) -> Result<f64> {
    if !(rho >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "compression ratio must be >= 1, got {rho}"
        )));
    }
    Ok(params.beta * ((-params.gamma * params.rho0).exp() - (-params.gamma * rho).exp()))
}

/// `(realized, compensated)` contribution of a feature compressed by `rho`:
/// the degraded value actually delivered, and that value with the
/// degradation added back for the learner.
pub fn apply_compression_effect(g: f64, rho: f64, params: &CompensationParams) -> Result<(f64, f64)> {
    let dg = compression_degradation(rho, params)?;
    let realized = (g - dg).max(0.0);
    Ok((realized, realized + dg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use rand::SeedableRng;

    fn frame() -> OrientedRect {
        OrientedRect::square(Pose2D::new(0.0, 0.0, 0.0), 100.0).unwrap()
    }

    fn vehicle(id: u32, x: f64, y: f64, h: f64) -> ObjectState {
        ObjectState {
            id,
            pose: Pose2D::new(x, y, h),
            longitudinal_velocity: 0.0,
            length: 4.0,
            width: 2.0,
        }
    }

    fn world_with(objects: Vec<ObjectState>) -> WorldState {
        WorldState {
            slot: 0,
            ego: vehicle(0, 1000.0, 1000.0, 0.0),
            collaborators: vec![],
            objects,
        }
    }

    #[test]
    fn default_grid_is_200_square() {
        let g = BevGrid::new(frame(), DEFAULT_CELL_SIZE).unwrap();
        assert_eq!((g.width_cells(), g.height_cells()), (200, 200));
        assert_eq!(g.popcount(), 0);
    }

    #[test]
    fn empty_world_renders_empty() {
        let g = render_ground_truth(&world_with(vec![]), &frame(), 0.5).unwrap();
        assert_eq!(g.popcount(), 0);
    }

    #[test]
    fn centred_vehicle_covers_32_cells() {
        let g = render_ground_truth(&world_with(vec![vehicle(1, 0.0, 0.0, 0.0)]), &frame(), 0.5).unwrap();
        assert_eq!(g.popcount(), 32);
        // rotated by a quarter turn the footprint still covers 4 x 8 cells
        let g = render_ground_truth(
            &world_with(vec![vehicle(1, 0.0, 0.0, std::f64::consts::FRAC_PI_2)]),
            &frame(),
            0.5,
        )
        .unwrap();
        assert_eq!(g.popcount(), 32);
    }

    #[test]
    fn rasterization_matches_brute_force_cell_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v = vehicle(
                1,
                rng.gen_range(-40.0..40.0),
                rng.gen_range(-40.0..40.0),
                rng.gen_range(-3.0..3.0),
            );
            let g = render_ground_truth(&world_with(vec![v.clone()]), &frame(), 0.5).unwrap();
            let fp = rect_corners(&v.footprint());
            let mut expected = 0;
            for row in 0..200 {
                for col in 0..200 {
                    let c = g.cell_center_local(row, col);
                    let cell = crate::geometry::ConvexPolygon::from_ccw(vec![
                        Point::new(c.x - 0.25, c.y - 0.25),
                        Point::new(c.x + 0.25, c.y - 0.25),
                        Point::new(c.x + 0.25, c.y + 0.25),
                        Point::new(c.x - 0.25, c.y + 0.25),
                    ]);
                    if crate::geometry::convex_intersection_area(&cell, &fp) > 1e-9 {
                        expected += 1;
                        assert!(g.get(row, col));
                    }
                }
            }
            assert_eq!(g.popcount(), expected);
        }
    }

    #[test]
    fn identical_worlds_identical_grids() {
        let w = world_with(vec![vehicle(1, 3.3, -7.1, 0.4), vehicle(2, -20.0, 5.0, 2.0)]);
        assert_eq!(
            render_ground_truth(&w, &frame(), 0.5).unwrap(),
            render_ground_truth(&w, &frame(), 0.5).unwrap()
        );
    }

    fn gt_scene() -> (WorldState, BevGrid) {
        let w = world_with(vec![
            vehicle(1, 10.0, 0.0, 0.0),
            vehicle(2, -30.0, 20.0, 1.0),
            vehicle(3, 40.0, -40.0, 0.2),
        ]);
        let gt = render_ground_truth(&w, &frame(), 0.5).unwrap();
        (w, gt)
    }

    #[test]
    fn perfect_sensor_sees_masked_truth() {
        let (w, gt) = gt_scene();
        let obs = vehicle(9, 30.0, 0.0, 0.0);
        let fov = OrientedRect::square(obs.pose, 60.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = observe(&gt, &obs, &fov, &DetectionModel::perfect(), &mut rng);
        for row in 0..200 {
            for col in 0..200 {
                let inside = fov.contains(gt.cell_center_world(row, col));
                assert_eq!(g.get(row, col), gt.get(row, col) && inside);
            }
        }
        let local = render_local_bev(&obs, &w, &DetectionModel::perfect(), &frame(), 60.0, 0.5, &mut rng).unwrap();
        assert_eq!(local, g);
    }

    #[test]
    fn blind_sensor_sees_nothing() {
        let (_, gt) = gt_scene();
        let obs = vehicle(9, 0.0, 0.0, 0.0);
        let fov = OrientedRect::square(obs.pose, 100.0).unwrap();
        let det = DetectionModel {
            base_prob: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(observe(&gt, &obs, &fov, &det, &mut rng).popcount(), 0);
    }

    #[test]
    fn noisy_sensor_count_within_three_sigma() {
        let (_, gt) = gt_scene();
        let obs = vehicle(9, 0.0, 0.0, 0.0);
        let fov = OrientedRect::square(obs.pose, 100.0).unwrap();
        let det = DetectionModel {
            base_prob: 0.8,
            distance_decay: 0.02,
            false_positive: 0.0,
        };
        // analytic mean and variance of a sum of independent Bernoullis
        let (mut mean, mut var) = (0.0, 0.0);
        for (r, c) in gt.occupied() {
            let p = gt.cell_center_world(r, c);
            if fov.contains(p) {
                let q = det.detection_prob(p.x.hypot(p.y));
                mean += q;
                var += q * (1.0 - q);
            }
        }
        let seeds = 100;
        let total: u64 = (0..seeds)
            .map(|s| observe(&gt, &obs, &fov, &det, &mut crate::rng::stream_rng(s, 99, 0)).popcount())
            .sum();
        let avg = total as f64 / seeds as f64;
        let sigma = (var / seeds as f64).sqrt();
        assert!((avg - mean).abs() <= 3.0 * sigma, "avg {avg} mean {mean} sigma {sigma}");
    }

    fn grid_with(cells: &[(usize, usize)]) -> BevGrid {
        let mut g = BevGrid::new(frame(), 0.5).unwrap();
        for &(r, c) in cells {
            g.set(r, c, true);
        }
        g
    }

    #[test]
    fn fusion_laws() {
        let a = grid_with(&[(0, 0), (5, 5)]);
        let b = grid_with(&[(5, 5), (9, 9), (10, 1)]);
        assert_eq!(fuse_bev([&a]).unwrap(), a);
        assert_eq!(fuse_bev([&a, &a]).unwrap(), a);
        let ab = fuse_bev([&a, &b]).unwrap();
        assert_eq!(ab, fuse_bev([&b, &a]).unwrap());
        assert!(ab.popcount() >= a.popcount().max(b.popcount()));
        assert_eq!(ab.popcount(), 4);
    }

    #[test]
    fn fusion_rejects_mismatched_frames() {
        let a = grid_with(&[]);
        let small = BevGrid::new(OrientedRect::square(Pose2D::new(0.0, 0.0, 0.0), 50.0).unwrap(), 0.5).unwrap();
        assert!(matches!(fuse_bev([&a, &small]), Err(Error::FrameMismatch { .. })));
        assert!(matches!(iou(&a, &small), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn iou_cases() {
        let a = grid_with(&[(1, 1), (2, 2)]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = grid_with(&[(3, 3)]);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        assert_eq!(iou(&grid_with(&[]), &grid_with(&[])).unwrap(), 1.0);
        let small: Vec<(usize, usize)> = (0..30).map(|i| (i, 0)).collect();
        let big: Vec<(usize, usize)> = (0..60).map(|i| (i, 0)).collect();
        assert_eq!(iou(&grid_with(&small), &grid_with(&big)).unwrap(), 0.5);
    }

    #[test]
    fn marginal_accuracy_cases() {
        let ego = grid_with(&[(1, 1), (2, 2)]);
        let mut grids = BTreeMap::new();
        grids.insert(1, ego.clone());
        grids.insert(2, grid_with(&[(1, 1), (7, 7)]));
        assert_eq!(marginal_segmentation_accuracy(&[1], 1, &ego, &grids).unwrap(), 0.0);
        let m2 = marginal_segmentation_accuracy(&[1, 2], 2, &ego, &grids).unwrap();
        assert!((m2 - (1.0 - 2.0 / 3.0)).abs() < 1e-15);
        assert!(matches!(
            marginal_segmentation_accuracy(&[1], 2, &ego, &grids),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn contribution_arithmetic() {
        assert_eq!(marginal_bev_contribution(0.0, 0.0, 1.0), 0.0);
        assert!((marginal_bev_contribution(0.2, 0.5, 1.0) - 0.7).abs() < 1e-15);
        assert_eq!(marginal_bev_contribution(0.3, 0.9, 0.0), 0.3);
    }

    #[test]
    fn degradation_values() {
        let p = CompensationParams::default();
        assert_eq!(compression_degradation(1.0, &p).unwrap(), 0.0);
        let d8 = compression_degradation(8.0, &p).unwrap();
        assert!((d8 - 0.34 * ((-0.15f64).exp() - (-1.2f64).exp())).abs() < 1e-15);
        assert!((d8 - 0.19024).abs() < 1e-5);
        let d64 = compression_degradation(64.0, &p).unwrap();
        assert!((d64 - 0.29262).abs() < 1e-5);
        assert!(compression_degradation(0.5, &p).is_err());
        let rhos = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
        for w in rhos.windows(2) {
            assert!(compression_degradation(w[1], &p).unwrap() > compression_degradation(w[0], &p).unwrap());
        }
        assert!(d64 < 0.34 * (-0.15f64).exp());
    }

    #[test]
    fn compression_effect_cases() {
        let p = CompensationParams::default();
        assert_eq!(apply_compression_effect(0.4, 1.0, &p).unwrap(), (0.4, 0.4));
        let (r, c) = apply_compression_effect(0.5, 8.0, &p).unwrap();
        let dg = compression_degradation(8.0, &p).unwrap();
        assert!((r - (0.5 - dg)).abs() < 1e-15 && (c - 0.5).abs() < 1e-15);
        assert!((r - 0.31).abs() < 0.001);
        let (r, c) = apply_compression_effect(0.1, 64.0, &p).unwrap();
        assert_eq!(r, 0.0);
        assert!((c - compression_degradation(64.0, &p).unwrap()).abs() < 1e-15);
        assert!(c >= r);
    }

    #[test]
    fn pgm_dump_shape() {
        let g = grid_with(&[(0, 0)]);
        let s = g.to_pgm();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], "200 200");
        assert_eq!(lines.len(), 3 + 200);
        assert!(lines.last().unwrap().starts_with("1 0"));
    }
}
