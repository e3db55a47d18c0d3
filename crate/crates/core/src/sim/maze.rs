use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::geometry::{Aabb, Segment, Vec2};
use crate::error::{Error, Result};

/// Maze, robot and episode parameters. Serialized with camelCase keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct MazeConfig {
    pub rings: usize,
    pub radii: Vec<f64>,
    pub opening_width_deg: f64,
    /// Opening centers in degrees, one list per ring.
    pub opening_angles: Vec<Vec<f64>>,
    /// Side length of the square arena centred on the start position.
    pub bounds_size: f64,
    pub robot_radius: f64,
    pub sensor_range: f64,
    pub turn_gain: f64,
    pub speed_gain: f64,
    pub max_steps: usize,
    /// Largest angle spanned by one polygon segment of a ring arc.
    pub arc_segment_deg: f64,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig {
            rings: 3,
            radii: vec![10.0, 20.0, 30.0],
            opening_width_deg: 30.0,
            opening_angles: vec![vec![0.0], vec![120.0], vec![240.0]],
            bounds_size: 70.0,
            robot_radius: 0.75,
            sensor_range: 15.0,
            turn_gain: 0.2,
            speed_gain: 1.0,
            max_steps: 300,
            arc_segment_deg: 7.5,
        }
    }
}

impl MazeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rings == 0 {
            return Err(Error::config("maze needs at least one ring"));
        }
        if self.radii.len() != self.rings {
            return Err(Error::config(format!(
                "{} rings but {} radii",
                self.rings,
                self.radii.len()
            )));
        }
        if self.opening_angles.len() != self.rings {
            return Err(Error::config(format!(
                "{} rings but {} opening lists",
                self.rings,
                self.opening_angles.len()
            )));
        }
        if !self.radii.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(Error::config("ring radii must be positive"));
        }
        if self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("ring radii must be strictly increasing"));
        }
        if !(self.opening_width_deg > 0.0 && self.opening_width_deg < 360.0) {
            return Err(Error::config("opening width must lie in (0, 360) degrees"));
        }
        for (i, openings) in self.opening_angles.iter().enumerate() {
            if openings.is_empty() {
                return Err(Error::config(format!("ring {i} has no opening")));
            }
            let total = self.opening_width_deg * openings.len() as f64;
            if total >= 360.0 {
                return Err(Error::config(format!(
                    "openings of ring {i} cover the full circle"
                )));
            }
            let mut sorted: Vec<f64> = openings.iter().map(|a| a.rem_euclid(360.0)).collect();
            sorted.sort_by(f64::total_cmp);
            for j in 0..sorted.len() {
                let next = if j + 1 < sorted.len() {
                    sorted[j + 1]
                } else {
                    sorted[0] + 360.0
                };
                if sorted.len() > 1 && next - sorted[j] <= self.opening_width_deg {
                    return Err(Error::config(format!("openings of ring {i} overlap")));
                }
            }
        }
        if !(self.bounds_size.is_finite() && self.bounds_size > 0.0) {
            return Err(Error::config("bounds size must be positive"));
        }
        let outer = self.radii[self.rings - 1];
        if outer + self.robot_radius >= self.bounds_size / 2.0 {
            return Err(Error::config("outer ring does not fit inside the bounds"));
        }
        if !(self.robot_radius > 0.0 && self.robot_radius < self.radii[0]) {
            return Err(Error::config(
                "robot radius must be positive and smaller than the inner ring",
            ));
        }
        if !(self.sensor_range > 0.0 && self.sensor_range.is_finite()) {
            return Err(Error::config("sensor range must be positive"));
        }
        if !(self.turn_gain.is_finite() && self.speed_gain.is_finite() && self.speed_gain >= 0.0) {
            return Err(Error::config(
                "turn and speed gains must be finite, speed gain non-negative",
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max steps must be at least 1"));
        }
        if !(self.arc_segment_deg > 0.0 && self.arc_segment_deg <= 90.0) {
            return Err(Error::config(
                "arc segment angle must lie in (0, 90] degrees",
            ));
        }
        Ok(())
    }
}

/// Immutable wall geometry built from a [`MazeConfig`].
#[derive(Debug, Clone)]
pub struct MazeMap {
    config: MazeConfig,
    segments: Vec<Segment>,
    rings: Vec<Range<usize>>,
    boundary: Range<usize>,
    bounds: Aabb,
    start: Vec2,
    index: SegmentIndex,
}

/// Uniform bucket grid over the arena; each bucket lists the segments whose
/// (slightly inflated) bounding box overlaps it.
#[derive(Debug, Clone)]
struct SegmentIndex {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

const INDEX_CELL: f64 = 2.5;
const INDEX_MARGIN: f64 = 1e-6;

impl SegmentIndex {
    fn build(bounds: Aabb, segments: &[Segment]) -> Self {
        let nx = (bounds.width() / INDEX_CELL).ceil().max(1.0) as usize;
        let ny = (bounds.height() / INDEX_CELL).ceil().max(1.0) as usize;
        let mut index = SegmentIndex {
            origin: bounds.min,
            cell: INDEX_CELL,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (i, s) in segments.iter().enumerate() {
            let (x0, y0) = index.coords(Vec2::new(
                s.a.x.min(s.b.x) - INDEX_MARGIN,
                s.a.y.min(s.b.y) - INDEX_MARGIN,
            ));
            let (x1, y1) = index.coords(Vec2::new(
                s.a.x.max(s.b.x) + INDEX_MARGIN,
                s.a.y.max(s.b.y) + INDEX_MARGIN,
            ));
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    index.buckets[cy * nx + cx].push(i as u32);
                }
            }
        }
        index
    }

    fn coords(&self, p: Vec2) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        (
            (fx.max(0.0) as usize).min(self.nx - 1),
            (fy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    /// Segment indices in buckets overlapping the square of half-width `r` around `p`.
    fn around(&self, p: Vec2, r: f64) -> impl Iterator<Item = u32> + '_ {
        let (x0, y0) = self.coords(Vec2::new(p.x - r, p.y - r));
        let (x1, y1) = self.coords(Vec2::new(p.x + r, p.y + r));
        (y0..=y1).flat_map(move |cy| {
            (x0..=x1).flat_map(move |cx| self.buckets[cy * self.nx + cx].iter().copied())
        })
    }
}

pub fn build_maze(config: &MazeConfig) -> Result<MazeMap> {
    config.validate()?;
    let half = config.bounds_size / 2.0;
    let bounds = Aabb {
        min: Vec2::new(-half, -half),
        max: Vec2::new(half, half),
    };
    let mut segments = Vec::new();
    let mut rings = Vec::with_capacity(config.rings);
    for (radius, openings) in config.radii.iter().zip(&config.opening_angles) {
        let begin = segments.len();
        for (from, to) in ring_arcs(openings, config.opening_width_deg) {
            let span = to - from;
            let pieces = (span / config.arc_segment_deg).ceil().max(1.0) as usize;
            let point = |deg: f64| Vec2::from_angle(deg.to_radians()) * *radius;
            for i in 0..pieces {
                let a = from + span * i as f64 / pieces as f64;
                let b = from + span * (i + 1) as f64 / pieces as f64;
                segments.push(Segment::new(point(a), point(b)));
            }
        }
        rings.push(begin..segments.len());
    }
    let begin = segments.len();
    let corners = [
        Vec2::new(-half, -half),
        Vec2::new(half, -half),
        Vec2::new(half, half),
        Vec2::new(-half, half),
    ];
    for i in 0..4 {
        segments.push(Segment::new(corners[i], corners[(i + 1) % 4]));
    }
    let boundary = begin..segments.len();
    debug_assert!(segments.iter().all(|s| s.length() > 0.0));
    let index = SegmentIndex::build(bounds, &segments);
    Ok(MazeMap {
        index,
        config: config.clone(),
        segments,
        rings,
        boundary,
        bounds,
        start: Vec2::ZERO,
    })
}

/// Wall arcs (start, end) in degrees, end > start, left between the openings.
fn ring_arcs(openings: &[f64], width: f64) -> Vec<(f64, f64)> {
    let mut centers: Vec<f64> = openings.iter().map(|a| a.rem_euclid(360.0)).collect();
    centers.sort_by(f64::total_cmp);
    let half = width / 2.0;
    (0..centers.len())
        .map(|i| {
            let from = centers[i] + half;
            let next = if i + 1 < centers.len() {
                centers[i + 1]
            } else {
                centers[0] + 360.0
            };
            (from, next - half)
        })
        .collect()
}

impl MazeMap {
    pub fn config(&self) -> &MazeConfig {
        &self.config
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn ring_walls(&self, ring: usize) -> &[Segment] {
        &self.segments[self.rings[ring].clone()]
    }

    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub fn boundary_walls(&self) -> &[Segment] {
        &self.segments[self.boundary.clone()]
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn start(&self) -> Vec2 {
        self.start
    }

    /// Distance to the first wall along a unit direction, capped at `max_range`.
    pub fn ray_distance(&self, origin: Vec2, dir: Vec2, max_range: f64) -> f64 {
        let idx = &self.index;
        let (mut cx, mut cy) = idx.coords(origin);
        let boundary = |c: usize, o: f64, d: f64| {
            o + if d > 0.0 { (c + 1) as f64 } else { c as f64 } * idx.cell
        };
        let axis = |d: f64, o: f64, c: usize, origin: f64| -> (f64, f64) {
            if d == 0.0 {
                (f64::INFINITY, f64::INFINITY)
            } else {
                ((boundary(c, o, d) - origin) / d, idx.cell / d.abs())
            }
        };
        let (mut tx, dtx) = axis(dir.x, idx.origin.x, cx, origin.x);
        let (mut ty, dty) = axis(dir.y, idx.origin.y, cy, origin.y);
        let mut best = max_range;
        loop {
            for &i in &idx.buckets[cy * idx.nx + cx] {
                if let Some(t) = self.segments[i as usize].ray_hit(origin, dir, best) {
                    best = t;
                }
            }
            let exit = tx.min(ty);
            if best <= exit || exit >= max_range {
                break;
            }
            if tx < ty {
                if (dir.x > 0.0 && cx + 1 >= idx.nx) || (dir.x < 0.0 && cx == 0) {
                    break;
                }
                cx = if dir.x > 0.0 { cx + 1 } else { cx - 1 };
                tx += dtx;
            } else {
                if (dir.y > 0.0 && cy + 1 >= idx.ny) || (dir.y < 0.0 && cy == 0) {
                    break;
                }
                cy = if dir.y > 0.0 { cy + 1 } else { cy - 1 };
                ty += dty;
            }
        }
        best
    }

    /// Nearest wall point among walls closer than `within`, as (distance, point).
    pub fn nearest_wall(&self, p: Vec2, within: f64) -> Option<(f64, Vec2)> {
        let mut best: Option<(f64, Vec2)> = None;
        for i in self.index.around(p, within) {
            let s = &self.segments[i as usize];
            if !s.near(p, within) {
                continue;
            }
            let c = s.closest_point(p);
            let d = p.distance(c);
            if d < within && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        best
    }

    /// True when a disc of `radius` at `p` touches no wall.
    pub fn is_clear(&self, p: Vec2, radius: f64) -> bool {
        self.bounds.contains(p)
            && self.index.around(p, radius).all(|i| {
                let s = &self.segments[i as usize];
                !s.near(p, radius) || s.distance_to(p) >= radius
            })
    }

    /// Brute-force reference for [`MazeMap::ray_distance`].
    pub fn ray_distance_exhaustive(&self, origin: Vec2, dir: Vec2, max_range: f64) -> f64 {
        let mut best = max_range;
        for s in &self.segments {
            if let Some(t) = s.ray_hit(origin, dir, best) {
                best = t;
            }
        }
        best
    }

    /// True when the straight segment `p`-`q` crosses or touches a wall.
    pub fn blocks(&self, p: Vec2, q: Vec2) -> bool {
        self.segments.iter().any(|s| s.intersects(p, q))
    }
}
