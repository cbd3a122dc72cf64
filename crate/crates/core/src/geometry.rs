//! Rectangular windows, point patterns and pair bookkeeping.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Closed axis-aligned observation window `[xmin, xmax] x [ymin, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Window {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let finite = [xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite());
        if !finite || xmax <= xmin || ymax <= ymin {
            return Err(Error::InvalidWindow(format!(
                "[{xmin}, {xmax}] x [{ymin}, {ymax}]"
            )));
        }
        Ok(Self { xmin, xmax, ymin, ymax })
    }

    pub fn unit_square() -> Self {
        Self { xmin: 0.0, xmax: 1.0, ymin: 0.0, ymax: 1.0 }
    }

    pub fn xmin(&self) -> f64 {
        self.xmin
    }
    pub fn xmax(&self) -> f64 {
        self.xmax
    }
    pub fn ymin(&self) -> f64 {
        self.ymin
    }
    pub fn ymax(&self) -> f64 {
        self.ymax
    }
    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }
    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    /// Length of the shorter side.
    pub fn short_side(&self) -> f64 {
        self.width().min(self.height())
    }
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Boundary points count as inside.
    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// Distance from an interior point to the window boundary.
    #[inline]
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        (p.x - self.xmin)
            .min(self.xmax - p.x)
            .min(p.y - self.ymin)
            .min(self.ymax - p.y)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            xmin: self.xmin + dx,
            xmax: self.xmax + dx,
            ymin: self.ymin + dy,
            ymax: self.ymax + dy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    points: Vec<Point>,
    window: Window,
}

impl PointPattern {
    pub fn empty(window: Window) -> Self {
        Self { points: Vec::new(), window }
    }

    pub fn new(window: Window, points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !window.contains(p)) {
            return Err(Error::OutsideWindow { x: p.x, y: p.y });
        }
        Ok(Self { points, window })
    }

    /// Caller guarantees every point lies in `window`.
    pub(crate) fn from_trusted(window: Window, points: Vec<Point>) -> Self {
        debug_assert!(points.iter().all(|p| window.contains(p)));
        Self { points, window }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }
    pub fn window(&self) -> &Window {
        &self.window
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Shift pattern and window together.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect(),
            window: self.window.translated(dx, dy),
        }
    }
}

/// Uniform bucket grid over a window with cells at least `min_cell` wide.
///
/// Neighbours of a query within distance `min_cell` are confined to the
/// 3x3 block of cells around it.
#[derive(Debug, Clone)]
pub(crate) struct CellGrid {
    x0: f64,
    y0: f64,
    cw: f64,
    ch: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

const MAX_CELLS_PER_AXIS: usize = 256;

impl CellGrid {
    pub fn build(window: &Window, points: &[Point], min_cell: f64) -> Self {
        let axis = |len: f64| -> usize {
            let k = if min_cell > 0.0 { (len / min_cell).floor() } else { f64::INFINITY };
            (k.min(MAX_CELLS_PER_AXIS as f64) as usize).max(1)
        };
        let nx = axis(window.width());
        let ny = axis(window.height());
        let mut g = Self {
            x0: window.xmin(),
            y0: window.ymin(),
            cw: window.width() / nx as f64,
            ch: window.height() / ny as f64,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            items: vec![0; points.len()],
        };
        let cells: Vec<usize> = points.iter().map(|p| g.cell_of(p)).collect();
        for &c in &cells {
            g.start[c + 1] += 1;
        }
        for c in 0..nx * ny {
            g.start[c + 1] += g.start[c];
        }
        let mut fill = g.start.clone();
        for (i, &c) in cells.iter().enumerate() {
            g.items[fill[c]] = i;
            fill[c] += 1;
        }
        g
    }

    #[inline]
    fn coords(&self, p: &Point) -> (usize, usize) {
        let cx = (((p.x - self.x0) / self.cw).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((p.y - self.y0) / self.ch).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    #[inline]
    fn cell_of(&self, p: &Point) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.nx + cx
    }

    /// Visit indices of all points in the 3x3 cell block around `p`.
    #[inline]
    pub fn for_each_near(&self, p: &Point, mut f: impl FnMut(usize)) {
        let (cx, cy) = self.coords(p);
        let xs = cx.saturating_sub(1)..=(cx + 1).min(self.nx - 1);
        for y in cy.saturating_sub(1)..=(cy + 1).min(self.ny - 1) {
            for x in xs.clone() {
                let c = y * self.nx + x;
                for &i in &self.items[self.start[c]..self.start[c + 1]] {
                    f(i);
                }
            }
        }
    }

    /// Cells on the ring at Chebyshev distance `ring` from the cell of `p`.
    pub fn for_each_in_ring(&self, p: &Point, ring: usize, mut f: impl FnMut(usize)) {
        let (cx, cy) = self.coords(p);
        let (cx, cy, r) = (cx as isize, cy as isize, ring as isize);
        for y in (cy - r)..=(cy + r) {
            if y < 0 || y >= self.ny as isize {
                continue;
            }
            for x in (cx - r)..=(cx + r) {
                if x < 0 || x >= self.nx as isize {
                    continue;
                }
                if (x - cx).abs() != r && (y - cy).abs() != r {
                    continue;
                }
                let c = y as usize * self.nx + x as usize;
                for &i in &self.items[self.start[c]..self.start[c + 1]] {
                    f(i);
                }
            }
        }
    }

    /// Smallest cell side; a ring `k` cells out is at least `(k-1) * min_side` away.
    pub fn min_side(&self) -> f64 {
        self.cw.min(self.ch)
    }

    pub fn max_ring(&self) -> usize {
        self.nx.max(self.ny)
    }
}

/// Distance from `p` to its nearest neighbour in `points` (excluding index
/// `skip`), or `None` when there is no other point.
pub(crate) fn nearest_distance(
    grid: &CellGrid,
    points: &[Point],
    p: &Point,
    skip: Option<usize>,
) -> Option<f64> {
    let mut best2 = f64::INFINITY;
    let side = grid.min_side();
    for ring in 0..=grid.max_ring() {
        // Everything at ring k or beyond is at least (k - 1) * side away.
        if ring >= 1 {
            let lower = (ring as f64 - 1.0) * side;
            if lower * lower > best2 {
                break;
            }
        }
        grid.for_each_in_ring(p, ring, |i| {
            if Some(i) != skip {
                let d2 = p.dist2(&points[i]);
                if d2 < best2 {
                    best2 = d2;
                }
            }
        });
    }
    best2.is_finite().then(|| best2.sqrt())
}

/// Symmetric matrix of Euclidean distances; zero diagonal.
pub fn pairwise_distances(pattern: &PointPattern) -> DMatrix<f64> {
    let pts = pattern.points();
    let n = pts.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pts[i].dist(&pts[j]);
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    m
}

/// Number of unordered pairs at distance `<= r`.
pub fn close_pair_count(pattern: &PointPattern, r: f64) -> usize {
    let pts = pattern.points();
    if pts.len() < 2 || !(r >= 0.0) {
        return 0;
    }
    let grid = CellGrid::build(pattern.window(), pts, r);
    let r2 = r * r;
    let mut count = 0;
    for (i, p) in pts.iter().enumerate() {
        grid.for_each_near(p, |j| {
            if j > i && p.dist2(&pts[j]) <= r2 {
                count += 1;
            }
        });
    }
    count
}

/// Number of points of `pattern` within distance `r` of `u`, not counting
/// `u` itself when it is a member of the pattern.
pub fn neighbour_count(u: &Point, pattern: &PointPattern, r: f64) -> usize {
    let r2 = r * r;
    let mut skipped = false;
    let mut count = 0;
    for p in pattern.points() {
        if !skipped && p == u {
            skipped = true;
            continue;
        }
        if u.dist2(p) <= r2 {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_pattern(n: usize, seed: u64) -> PointPattern {
        let mut rng = rng_from_seed(seed);
        let pts = (0..n).map(|_| Point::new(rng.random(), rng.random())).collect();
        PointPattern::new(Window::unit_square(), pts).unwrap()
    }

    fn brute_pairs(pattern: &PointPattern, r: f64) -> usize {
        let p = pattern.points();
        let mut c = 0;
        for i in 0..p.len() {
            for j in (i + 1)..p.len() {
                let d = ((p[i].x - p[j].x).powi(2) + (p[i].y - p[j].y).powi(2)).sqrt();
                if d <= r {
                    c += 1;
                }
            }
        }
        c
    }

    #[test]
    fn window_rejects_degenerate() {
        assert!(Window::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Window::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(Window::new(0.0, f64::NAN, 0.0, 1.0).is_err());
        let w = Window::new(0.0, 125.0, 0.0, 188.0).unwrap();
        assert_eq!(w.area(), 125.0 * 188.0);
        assert_eq!(w.short_side(), 125.0);
    }

    #[test]
    fn boundary_points_are_inside() {
        let w = Window::unit_square();
        assert!(w.contains(&Point::new(0.0, 1.0)));
        assert!(!w.contains(&Point::new(1.0 + 1e-12, 0.5)));
        assert!(PointPattern::new(w, vec![Point::new(2.0, 0.0)]).is_err());
    }

    #[test]
    fn distances_empty_and_345() {
        let w = Window::new(0.0, 10.0, 0.0, 10.0).unwrap();
        assert_eq!(pairwise_distances(&PointPattern::empty(w)).nrows(), 0);
        let p = PointPattern::new(w, vec![Point::new(0.0, 0.0), Point::new(3.0, 4.0)]).unwrap();
        let m = pairwise_distances(&p);
        assert_eq!(m[(0, 1)], 5.0);
        assert_eq!(m[(1, 0)], 5.0);
        assert_eq!(m[(0, 0)], 0.0);
    }

    #[test]
    fn distances_match_double_loop() {
        let p = random_pattern(5, 11);
        let m = pairwise_distances(&p);
        for (i, a) in p.points().iter().enumerate() {
            for (j, b) in p.points().iter().enumerate() {
                let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                assert!((m[(i, j)] - d).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn close_pairs_examples() {
        let w = Window::new(0.0, 3.0, 0.0, 3.0).unwrap();
        assert_eq!(close_pair_count(&PointPattern::empty(w), 1.0), 0);
        let p = PointPattern::new(
            w,
            vec![Point::new(0.0, 0.0), Point::new(0.0, 0.5), Point::new(0.0, 2.0)],
        )
        .unwrap();
        assert_eq!(close_pair_count(&p, 1.0), 1);
        // tie at exactly R counts
        assert_eq!(close_pair_count(&p, 1.5), 2);
    }

    #[test]
    fn close_pairs_match_brute_force() {
        let p = random_pattern(20, 5);
        assert_eq!(close_pair_count(&p, 0.1), brute_pairs(&p, 0.1));
        let p = random_pattern(500, 6);
        for r in [0.001, 0.01, 0.03, 0.2, 0.7, 2.0] {
            assert_eq!(close_pair_count(&p, r), brute_pairs(&p, r));
        }
    }

    #[test]
    fn neighbour_count_examples() {
        let w = Window::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let u = Point::new(0.0, 0.0);
        assert_eq!(neighbour_count(&u, &PointPattern::empty(w), 0.1), 0);
        let p = PointPattern::new(w, vec![Point::new(0.0, 0.05)]).unwrap();
        assert_eq!(neighbour_count(&u, &p, 0.1), 1);
        // a member does not count itself
        let p = PointPattern::new(w, vec![u, Point::new(0.0, 0.05)]).unwrap();
        assert_eq!(neighbour_count(&u, &p, 0.1), 1);
    }

    #[test]
    fn neighbour_count_matches_scan() {
        let p = random_pattern(30, 9);
        let mut rng = rng_from_seed(10);
        for _ in 0..20 {
            let u = Point::new(rng.random(), rng.random());
            let scan = p.points().iter().filter(|q| q.dist(&u) <= 0.25).count();
            assert_eq!(neighbour_count(&u, &p, 0.25), scan);
        }
    }

    #[test]
    fn nearest_distance_matches_scan() {
        let p = random_pattern(300, 21);
        let grid = CellGrid::build(p.window(), p.points(), 0.02);
        for (i, a) in p.points().iter().enumerate() {
            let scan = p
                .points()
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.dist(b))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(nearest_distance(&grid, p.points(), a, Some(i)), Some(scan));
        }
        let single = random_pattern(1, 3);
        let g = CellGrid::build(single.window(), single.points(), 0.1);
        assert_eq!(nearest_distance(&g, single.points(), &single.points()[0], Some(0)), None);
    }

    proptest! {
        #[test]
        fn close_pairs_monotone_and_half_neighbour_sum(seed in 0u64..500, n in 0usize..40, r1 in 0.0f64..0.5, dr in 0.0f64..0.5) {
            let p = random_pattern(n, seed);
            prop_assert!(close_pair_count(&p, r1) <= close_pair_count(&p, r1 + dr));
            let total: usize = p.points().iter().map(|u| neighbour_count(u, &p, r1)).sum();
            prop_assert_eq!(total, 2 * close_pair_count(&p, r1));
        }
    }
}
