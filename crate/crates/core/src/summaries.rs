//! Functional summaries (K, L, F, G, J), quadrat statistics and the ABC
//! summary vector.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_distance, CellGrid, Point, PointPattern, Window};

/// Side of the square lattice of F test locations.
pub const F_GRID: usize = 128;

/// A function of distance with a per-entry validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub r: Vec<f64>,
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
}

impl Curve {
    pub fn new(r: Vec<f64>, values: Vec<f64>, defined: Vec<bool>) -> Result<Self> {
        if r.len() != values.len() || r.len() != defined.len() {
            return Err(Error::Mismatch("curve arrays differ in length".into()));
        }
        check_grid(&r)?;
        Ok(Self { r, values, defined })
    }

    fn undefined(r: &[f64]) -> Self {
        Self { r: r.to_vec(), values: vec![f64::NAN; r.len()], defined: vec![false; r.len()] }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }
    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// `value(r) - r`, keeping the mask.
    pub fn minus_identity(&self) -> Curve {
        let values = self.values.iter().zip(&self.r).map(|(v, r)| v - r).collect();
        Curve { r: self.r.clone(), values, defined: self.defined.clone() }
    }

    /// CSV with header `r,value,defined`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,value,defined")?;
        for i in 0..self.len() {
            writeln!(out, "{},{},{}", self.r[i], self.values[i], self.defined[i] as u8)?;
        }
        Ok(())
    }
}

fn check_grid(r: &[f64]) -> Result<()> {
    if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || r.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("r grid must be nonnegative and strictly increasing".into()));
    }
    Ok(())
}

/// `m` equally spaced distances `k * frac * h / m`, `k = 1..=m`, with `h`
/// the shorter window side.
pub fn default_r_grid(window: &Window, m: usize, frac: f64) -> Vec<f64> {
    let top = frac * window.short_side();
    (1..=m).map(|k| k as f64 * top / m as f64).collect()
}

/// Grid for J fixed by the observed pattern: `m` points up to the distance
/// where the Poisson empty-space probability `1 - F` falls to 0.1, capped
/// at `frac * h`. Beyond it F is near 1 and J is too noisy to rank.
pub fn j_r_grid(pattern: &PointPattern, m: usize, frac: f64) -> Vec<f64> {
    let w = pattern.window();
    let cap = frac * w.short_side();
    let lambda = pattern.len() as f64 / w.area();
    let top = if lambda > 0.0 { (10f64.ln() / (PI * lambda)).sqrt().min(cap) } else { cap };
    (1..=m).map(|k| k as f64 * top / m as f64).collect()
}

/// Isotropic edge-correction weight: the reciprocal of the fraction of the
/// circle of radius `d` around `xi` lying inside the window. `None` when no
/// part of the circle is inside.
pub fn ripley_weight(xi: &Point, d: f64, window: &Window) -> Option<f64> {
    if !(d > 0.0) {
        return Some(1.0);
    }
    // Each edge closer than d cuts off an arc centred on its outward normal.
    let edges = [
        (xi.x - window.xmin(), PI),
        (window.xmax() - xi.x, 0.0),
        (xi.y - window.ymin(), 3.0 * FRAC_PI_2),
        (window.ymax() - xi.y, FRAC_PI_2),
    ];
    let mut arcs: Vec<(f64, f64)> = Vec::with_capacity(8);
    for (e, centre) in edges {
        if e < d {
            let half = (e.max(0.0) / d).acos();
            // Normalise to [0, 2pi), splitting arcs that wrap.
            let lo = (centre - half).rem_euclid(TAU);
            let hi = lo + 2.0 * half;
            if hi > TAU {
                arcs.push((lo, TAU));
                arcs.push((0.0, hi - TAU));
            } else {
                arcs.push((lo, hi));
            }
        }
    }
    if arcs.is_empty() {
        return Some(1.0);
    }
    arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut outside = 0.0;
    let (mut cur_lo, mut cur_hi) = arcs[0];
    for &(lo, hi) in &arcs[1..] {
        if lo > cur_hi {
            outside += cur_hi - cur_lo;
            cur_lo = lo;
            cur_hi = hi;
        } else {
            cur_hi = cur_hi.max(hi);
        }
    }
    outside += cur_hi - cur_lo;
    let inside = 1.0 - outside / TAU;
    (inside > 1e-12).then(|| 1.0 / inside)
}

/// Ripley's K with isotropic edge correction and `n(n-1)/|W|` normalisation.
pub fn k_function(pattern: &PointPattern, r_grid: &[f64]) -> Result<Curve> {
    check_grid(r_grid)?;
    let n = pattern.len();
    if n < 2 || r_grid.is_empty() {
        return Ok(Curve::undefined(r_grid));
    }
    let window = pattern.window();
    let pts = pattern.points();
    let rmax = *r_grid.last().expect("nonempty");
    let rmax2 = rmax * rmax;
    let grid = CellGrid::build(window, pts, rmax);
    let mut bins = vec![0.0; r_grid.len()];
    // Smallest distance whose weight is undefined; larger r are masked.
    let mut bad_from = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        grid.for_each_near(p, |j| {
            if j == i {
                return;
            }
            let d2 = p.dist2(&pts[j]);
            if d2 > rmax2 {
                return;
            }
            let d = d2.sqrt();
            match ripley_weight(p, d, window) {
                Some(w) => {
                    let k = r_grid.partition_point(|&r| r < d);
                    bins[k] += w;
                }
                None => bad_from = bad_from.min(d),
            }
        });
    }
    let scale = window.area() / (n as f64 * (n - 1) as f64);
    let mut acc = 0.0;
    let values: Vec<f64> = bins
        .iter()
        .map(|b| {
            acc += b;
            acc * scale
        })
        .collect();
    let defined = r_grid.iter().map(|&r| r < bad_from).collect();
    Curve::new(r_grid.to_vec(), values, defined)
}

/// `L = sqrt(K / pi)`.
pub fn l_function(pattern: &PointPattern, r_grid: &[f64]) -> Result<Curve> {
    let mut k = k_function(pattern, r_grid)?;
    for v in &mut k.values {
        *v = (*v / PI).sqrt();
    }
    Ok(k)
}

/// Border-corrected estimate from `(distance, boundary distance)` pairs:
/// `#{d <= r, b >= r} / #{b >= r}`.
fn border_cdf(samples: &mut [(f64, f64)], r_grid: &[f64]) -> Curve {
    let mut values = Vec::with_capacity(r_grid.len());
    let mut defined = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let (mut num, mut den) = (0usize, 0usize);
        for &(d, b) in samples.iter() {
            if b >= r {
                den += 1;
                if d <= r {
                    num += 1;
                }
            }
        }
        if den > 0 {
            values.push(num as f64 / den as f64);
            defined.push(true);
        } else {
            values.push(f64::NAN);
            defined.push(false);
        }
    }
    Curve { r: r_grid.to_vec(), values, defined }
}

/// Empty-space function from a `F_GRID x F_GRID` lattice of cell centres.
pub fn empty_space_f(pattern: &PointPattern, r_grid: &[f64]) -> Result<Curve> {
    empty_space_f_with(pattern, r_grid, F_GRID)
}

pub fn empty_space_f_with(pattern: &PointPattern, r_grid: &[f64], lattice: usize) -> Result<Curve> {
    check_grid(r_grid)?;
    let w = pattern.window();
    let pts = pattern.points();
    let grid = CellGrid::build(w, pts, (w.short_side() / 64.0).max(f64::MIN_POSITIVE));
    let (dx, dy) = (w.width() / lattice as f64, w.height() / lattice as f64);
    let mut samples = Vec::with_capacity(lattice * lattice);
    for j in 0..lattice {
        for i in 0..lattice {
            let u = Point::new(w.xmin() + (i as f64 + 0.5) * dx, w.ymin() + (j as f64 + 0.5) * dy);
            let d = nearest_distance(&grid, pts, &u, None).unwrap_or(f64::INFINITY);
            samples.push((d, w.boundary_distance(&u)));
        }
    }
    Ok(border_cdf(&mut samples, r_grid))
}

/// Nearest-neighbour distance distribution; undefined for fewer than 2 points.
pub fn nearest_neighbour_g(pattern: &PointPattern, r_grid: &[f64]) -> Result<Curve> {
    check_grid(r_grid)?;
    let pts = pattern.points();
    if pts.len() < 2 {
        return Ok(Curve::undefined(r_grid));
    }
    let w = pattern.window();
    let grid = CellGrid::build(w, pts, (w.short_side() / 64.0).max(f64::MIN_POSITIVE));
    let mut samples: Vec<(f64, f64)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = nearest_distance(&grid, pts, p, Some(i)).expect("at least two points");
            (d, w.boundary_distance(p))
        })
        .collect();
    Ok(border_cdf(&mut samples, r_grid))
}

/// `J = (1 - G) / (1 - F)`, defined only on the prefix of the grid where
/// both estimates exist and `F < 1`.
pub fn j_function(f: &Curve, g: &Curve) -> Result<Curve> {
    if f.r != g.r {
        return Err(Error::Mismatch("F and G use different r grids".into()));
    }
    let mut ok = true;
    let mut values = Vec::with_capacity(f.len());
    let mut defined = Vec::with_capacity(f.len());
    for i in 0..f.len() {
        ok = ok && f.defined[i] && g.defined[i] && f.values[i] < 1.0;
        if ok {
            values.push((1.0 - g.values[i]) / (1.0 - f.values[i]));
        } else {
            values.push(f64::NAN);
        }
        defined.push(ok);
    }
    Ok(Curve { r: f.r.clone(), values, defined })
}

/// Convenience: J directly from a pattern.
pub fn j_of_pattern(pattern: &PointPattern, r_grid: &[f64]) -> Result<Curve> {
    j_function(&empty_space_f(pattern, r_grid)?, &nearest_neighbour_g(pattern, r_grid)?)
}

/// Per-cell counts of a `q x q` partition, row-major from the lower left.
pub fn quadrat_counts(pattern: &PointPattern, q: usize) -> Vec<usize> {
    let w = pattern.window();
    let mut counts = vec![0; q * q];
    for p in pattern.points() {
        let i = (((p.x - w.xmin()) / w.width() * q as f64) as usize).min(q - 1);
        let j = (((p.y - w.ymin()) / w.height() * q as f64) as usize).min(q - 1);
        counts[j * q + i] += 1;
    }
    counts
}

/// `(max, min, log sample variance)` of the cell fractions `n_ij / n`.
pub fn quadrat_stats(pattern: &PointPattern, q: usize) -> Result<(f64, f64, f64)> {
    if q < 2 {
        return Err(Error::InvalidParameter(format!("quadrat order must be >= 2, got {q}")));
    }
    let n = pattern.len();
    if n == 0 {
        return Ok((f64::NAN, f64::NAN, f64::NAN));
    }
    let fr: Vec<f64> = quadrat_counts(pattern, q).into_iter().map(|c| c as f64 / n as f64).collect();
    let cells = fr.len() as f64;
    let mean = fr.iter().sum::<f64>() / cells;
    let var = fr.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (cells - 1.0);
    let max = fr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = fr.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max, min, var.ln()))
}

/// Layout of the summary vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    /// Number of L-grid points.
    pub m: usize,
    /// Upper end of the L grid as a fraction of the shorter window side.
    pub r_fraction: f64,
    pub quadrat_orders: Vec<usize>,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self { m: 40, r_fraction: 0.2, quadrat_orders: vec![2, 3, 4, 5] }
    }
}

impl SummaryConfig {
    pub fn dim(&self) -> usize {
        1 + 3 + self.m + 3 * self.quadrat_orders.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || !(self.r_fraction > 0.0) || self.quadrat_orders.iter().any(|&q| q < 2) {
            return Err(Error::InvalidParameter(format!("invalid summary config {self:?}")));
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["n_log".to_string(), "L_max".into(), "L_min".into(), "L_argmin".into()];
        names.extend((1..=self.m).map(|k| format!("L_{k}")));
        for q in &self.quadrat_orders {
            names.push(format!("C_max_{q}"));
            names.push(format!("C_min_{q}"));
            names.push(format!("C_logvar_{q}"));
        }
        names
    }
}

/// The ABC summary statistic `T(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub values: Vec<f64>,
    pub finite: bool,
}

impl SummaryVector {
    pub fn new(values: Vec<f64>) -> Self {
        let finite = values.iter().all(|v| v.is_finite());
        Self { values, finite }
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Assemble `(n_log, L_max, L_min, L_argmin, L_1..L_m, C_*,q)`.
pub fn summary_vector(pattern: &PointPattern, cfg: &SummaryConfig) -> Result<SummaryVector> {
    cfg.validate()?;
    let mut v = Vec::with_capacity(cfg.dim());
    v.push((pattern.len() as f64).ln());
    let r = default_r_grid(pattern.window(), cfg.m, cfg.r_fraction);
    let l = l_function(pattern, &r)?.minus_identity();
    if l.defined.iter().all(|&d| d) {
        let (mut imin, mut imax) = (0, 0);
        for i in 1..l.len() {
            // First occurrence wins on ties.
            if l.values[i] < l.values[imin] {
                imin = i;
            }
            if l.values[i] > l.values[imax] {
                imax = i;
            }
        }
        v.extend([l.values[imax], l.values[imin], r[imin]]);
        v.extend(&l.values);
    } else {
        v.extend(std::iter::repeat(f64::NAN).take(3 + cfg.m));
    }
    for &q in &cfg.quadrat_orders {
        let (max, min, lv) = quadrat_stats(pattern, q)?;
        v.extend([max, min, lv]);
    }
    debug_assert_eq!(v.len(), cfg.dim());
    Ok(SummaryVector::new(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    /// Midpoint-rule fraction of the circle inside the window.
    fn arc_fraction(xi: &Point, d: f64, w: &Window, steps: usize) -> f64 {
        let mut inside = 0usize;
        for k in 0..steps {
            let phi = (k as f64 + 0.5) * TAU / steps as f64;
            let p = Point::new(xi.x + d * phi.cos(), xi.y + d * phi.sin());
            if w.contains(&p) {
                inside += 1;
            }
        }
        inside as f64 / steps as f64
    }

    fn uniform_pattern(w: Window, n: usize, seed: u64) -> PointPattern {
        let mut rng = rng_from_seed(seed);
        let pts = (0..n)
            .map(|_| {
                Point::new(
                    w.xmin() + rng.random::<f64>() * w.width(),
                    w.ymin() + rng.random::<f64>() * w.height(),
                )
            })
            .collect();
        PointPattern::new(w, pts).unwrap()
    }

    #[test]
    fn j_grid_ends_where_poisson_empty_space_reaches_point_nine() {
        let pts: Vec<Point> = (0..100).map(|i| Point::new((i % 10) as f64 / 10.0, (i / 10) as f64 / 10.0)).collect();
        let x = PointPattern::new(Window::unit_square(), pts).unwrap();
        let r = j_r_grid(&x, 40, 0.2);
        let top = r[39];
        assert!(((-100.0 * std::f64::consts::PI * top * top).exp() - 0.1).abs() < 1e-12);
        assert!((r[0] - top / 40.0).abs() < 1e-15);
        // Sparse pattern: capped at frac * h.
        let sparse = PointPattern::new(Window::unit_square(), vec![Point::new(0.5, 0.5)]).unwrap();
        assert_eq!(j_r_grid(&sparse, 40, 0.2)[39], 0.2);
        assert_eq!(j_r_grid(&PointPattern::empty(Window::unit_square()), 40, 0.2)[39], 0.2);
    }

    #[test]
    fn ripley_weight_matches_arc_integration() {
        let w = Window::unit_square();
        let cases = [
            (Point::new(0.5, 0.5), 0.1, Some(1.0)),
            (Point::new(0.5, 0.0), 0.1, Some(2.0)),
            (Point::new(0.0, 0.0), 0.1, Some(4.0)),
            (Point::new(0.05, 0.5), 0.1, None),
            (Point::new(0.03, 0.04), 0.1, None),
            (Point::new(0.3, 0.2), 0.45, None),
            (Point::new(0.1, 0.9), 0.95, None),
        ];
        for (p, d, exact) in cases {
            let got = ripley_weight(&p, d, &w).unwrap();
            let oracle = 1.0 / arc_fraction(&p, d, &w, 20_000_000);
            assert!((got - oracle).abs() < 1e-6 * oracle, "{p:?} {d}: {got} vs {oracle}");
            if let Some(e) = exact {
                assert!((got - e).abs() < 1e-12);
            }
        }
        let rect = Window::new(0.0, 125.0, 0.0, 188.0).unwrap();
        let p = Point::new(10.0, 180.0);
        let got = ripley_weight(&p, 20.0, &rect).unwrap();
        let oracle = 1.0 / arc_fraction(&p, 20.0, &rect, 20_000_000);
        assert!((got - oracle).abs() < 1e-6 * oracle);
    }

    #[test]
    fn two_point_k_by_hand() {
        let w = Window::unit_square();
        let (a, b) = (Point::new(0.25, 0.5), Point::new(0.75, 0.5));
        let pat = PointPattern::new(w, vec![a, b]).unwrap();
        let r = vec![0.1, 0.49, 0.5, 0.6];
        let k = k_function(&pat, &r).unwrap();
        let wa = ripley_weight(&a, 0.5, &w).unwrap();
        let wb = ripley_weight(&b, 0.5, &w).unwrap();
        let jump = (wa + wb) / 2.0;
        assert_eq!(&k.values[..2], &[0.0, 0.0]);
        assert!((k.values[2] - jump).abs() < 1e-12);
        assert!((k.values[3] - jump).abs() < 1e-12);
        assert!(k.defined.iter().all(|&d| d));
    }

    #[test]
    fn degenerate_patterns_are_flagged() {
        let w = Window::unit_square();
        let r = default_r_grid(&w, 10, 0.2);
        let one = PointPattern::new(w, vec![Point::new(0.5, 0.5)]).unwrap();
        assert!(k_function(&one, &r).unwrap().defined.iter().all(|&d| !d));
        assert!(nearest_neighbour_g(&one, &r).unwrap().defined.iter().all(|&d| !d));
        let sv = summary_vector(&one, &SummaryConfig::default()).unwrap();
        assert_eq!(sv.len(), 56);
        assert!(!sv.finite);
        assert_eq!(sv.values[0], 0.0);
    }

    #[test]
    fn quadrat_examples() {
        let w = Window::unit_square();
        let even = PointPattern::new(
            w,
            vec![Point::new(0.1, 0.1), Point::new(0.9, 0.1), Point::new(0.1, 0.9), Point::new(0.9, 0.9)],
        )
        .unwrap();
        let (mx, mn, lv) = quadrat_stats(&even, 2).unwrap();
        assert_eq!((mx, mn), (0.25, 0.25));
        assert_eq!(lv, f64::NEG_INFINITY);
        assert!(!summary_vector(&even, &SummaryConfig::default()).unwrap().finite);

        let lumped = PointPattern::new(w, vec![Point::new(0.1, 0.1); 5]).unwrap();
        let (mx, mn, _) = quadrat_stats(&lumped, 3).unwrap();
        assert_eq!((mx, mn), (1.0, 0.0));
    }

    #[test]
    fn quadrat_matches_brute_force() {
        let w = Window::new(0.0, 2.0, 0.0, 3.0).unwrap();
        let pat = uniform_pattern(w, 200, 9);
        let q = 3;
        let mut counts = vec![0usize; 9];
        for p in pat.points() {
            let mut i = 0;
            while i + 1 < q && p.x >= (i + 1) as f64 * 2.0 / 3.0 {
                i += 1;
            }
            let mut j = 0;
            while j + 1 < q && p.y >= (j + 1) as f64 {
                j += 1;
            }
            counts[j * q + i] += 1;
        }
        let fr: Vec<f64> = counts.iter().map(|&c| c as f64 / 200.0).collect();
        let mean = 1.0 / 9.0;
        let var: f64 = fr.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / 8.0;
        let (mx, mn, lv) = quadrat_stats(&pat, q).unwrap();
        assert_eq!(mx, fr.iter().copied().fold(0.0, f64::max));
        assert_eq!(mn, fr.iter().copied().fold(1.0, f64::min));
        assert!((lv - var.ln()).abs() < 1e-12);
    }

    #[test]
    fn f_and_g_basic_behaviour() {
        let w = Window::unit_square();
        let r = default_r_grid(&w, 20, 0.2);
        let f_empty = empty_space_f(&PointPattern::empty(w), &r).unwrap();
        assert!(f_empty.values.iter().all(|&v| v == 0.0));
        let pat = uniform_pattern(w, 100, 4);
        let f = empty_space_f(&pat, &r).unwrap();
        let g = nearest_neighbour_g(&pat, &r).unwrap();
        for c in [&f, &g] {
            for i in 0..c.len() {
                assert!(c.defined[i]);
                assert!((0.0..=1.0).contains(&c.values[i]));
            }
        }
        let j = j_function(&f, &g).unwrap();
        let mut seen_undef = false;
        for &d in &j.defined {
            assert!(!(seen_undef && d));
            seen_undef |= !d;
        }
    }

    #[test]
    fn summary_names_and_first_entry() {
        let cfg = SummaryConfig::default();
        let names = cfg.names();
        assert_eq!(names.len(), 56);
        assert_eq!(names[3], "L_argmin");
        assert_eq!(names[44], "C_max_2");
        let pat = uniform_pattern(Window::unit_square(), 123, 1);
        let sv = summary_vector(&pat, &cfg).unwrap();
        assert_eq!(sv.values[0], 123f64.ln());
        assert_eq!(sv, summary_vector(&pat, &cfg).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn weight_at_least_one(x in 0.0..1.0f64, y in 0.0..1.0f64, d in 0.001..0.3f64) {
            let w = Window::unit_square();
            let p = Point::new(x, y);
            let wt = ripley_weight(&p, d, &w).unwrap();
            prop_assert!(wt >= 1.0);
            if w.boundary_distance(&p) >= d {
                prop_assert_eq!(wt, 1.0);
            }
        }

        #[test]
        fn k_nondecreasing_and_quadrat_consistent(seed in 0u64..1000, n in 2usize..120) {
            let w = Window::unit_square();
            let pat = uniform_pattern(w, n, seed);
            let r = default_r_grid(&w, 40, 0.2);
            let k = k_function(&pat, &r).unwrap();
            prop_assert!(k.values.windows(2).all(|p| p[1] >= p[0]));
            for q in 2..=5 {
                let counts = quadrat_counts(&pat, q);
                prop_assert_eq!(counts.iter().sum::<usize>(), n);
                let (mx, mn, _) = quadrat_stats(&pat, q).unwrap();
                let even = 1.0 / (q * q) as f64;
                prop_assert!(mn <= even + 1e-15 && even <= mx + 1e-15);
            }
        }

        #[test]
        fn translation_invariance(seed in 0u64..1000, n in 2usize..80, dx in -8i32..8, dy in -8i32..8) {
            // Dyadic coordinates and integer shifts keep every operation exact.
            let w = Window::unit_square();
            let mut rng = rng_from_seed(seed);
            let pts: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.random_range(0..1024) as f64 / 1024.0, rng.random_range(0..1024) as f64 / 1024.0))
                .collect();
            let pat = PointPattern::new(w, pts).unwrap();
            let moved = pat.translated(dx as f64, dy as f64);
            let cfg = SummaryConfig::default();
            let a = summary_vector(&pat, &cfg).unwrap();
            let b = summary_vector(&moved, &cfg).unwrap();
            prop_assert_eq!(a.values.len(), b.values.len());
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()), "{} vs {}", x, y);
            }
        }
    }
}
