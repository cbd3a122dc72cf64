//! Stationary Gaussian random fields with exponential covariance
//! `sigma2 * exp(-d / s)`, discretized on a regular grid of cell centres.
//!
//! Grids of at most [`CHOLESKY_MAX_CELLS`] cells are sampled by dense
//! Cholesky factorization. Larger grids use circulant embedding on a torus
//! of twice (then four and eight times) the grid extent; when no embedding
//! is nonnegative definite the sampler falls back to Cholesky with a small
//! diagonal jitter, which is recorded in [`FieldMethod`].

use std::cell::RefCell;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Window};

pub const DEFAULT_GRID: usize = 64;
pub const CHOLESKY_MAX_CELLS: usize = 256;
const EMBEDDING_PADDING: [usize; 3] = [1, 2, 4];
const EIGEN_TOLERANCE: f64 = 1e-10;
const BASE_JITTER: f64 = 1e-10;

/// How a field realization was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FieldMethod {
    Constant,
    Cholesky { jitter: f64 },
    Circulant { torus_nx: usize, torus_ny: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    window: Window,
    nx: usize,
    ny: usize,
    /// Row-major: `values[j * nx + i]` is the cell in column `i`, row `j`.
    values: Vec<f64>,
    cell_area: f64,
    method: FieldMethod,
}

impl GridField {
    pub fn from_values(window: Window, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!("grid {nx}x{ny}: need at least 2x2")));
        }
        if values.len() != nx * ny {
            return Err(Error::Mismatch(format!("{} values for a {nx}x{ny} grid", values.len())));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidParameter("field values must be finite".into()));
        }
        let cell_area = window.area() / (nx * ny) as f64;
        Ok(Self { window, nx, ny, values, cell_area, method: FieldMethod::Constant })
    }

    pub fn constant(window: Window, nx: usize, ny: usize, value: f64) -> Result<Self> {
        Self::from_values(window, nx, ny, vec![value; nx * ny])
    }

    pub fn window(&self) -> &Window {
        &self.window
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }
    pub fn method(&self) -> FieldMethod {
        self.method
    }
    fn dx(&self) -> f64 {
        self.window.width() / self.nx as f64
    }
    fn dy(&self) -> f64 {
        self.window.height() / self.ny as f64
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.window.xmin() + (i as f64 + 0.5) * self.dx(),
            self.window.ymin() + (j as f64 + 0.5) * self.dy(),
        )
    }

    /// Index of the cell containing `u` (closed cells, clamped at the far edges).
    #[inline]
    pub(crate) fn cell_index(&self, u: &Point) -> usize {
        let i = (((u.x - self.window.xmin()) / self.dx()) as usize).min(self.nx - 1);
        let j = (((u.y - self.window.ymin()) / self.dy()) as usize).min(self.ny - 1);
        j * self.nx + i
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Value of the field in the cell containing `u`.
pub fn field_at(field: &GridField, u: &Point) -> Result<f64> {
    if !field.window.contains(u) {
        return Err(Error::OutsideWindow { x: u.x, y: u.y });
    }
    Ok(field.values[field.cell_index(u)])
}

/// `log` of the integral of `exp(z)` over the window.
pub fn log_integrate_exp(field: &GridField) -> f64 {
    let max = field.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = field.values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln() + field.cell_area.ln()
}

/// Integral of `exp(z)` over the window, `sum exp(value) * cell_area`.
pub fn integrate_exp(field: &GridField) -> f64 {
    let max = field.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > 500.0 {
        log_integrate_exp(field).exp()
    } else {
        field.values.iter().map(|v| v.exp()).sum::<f64>() * field.cell_area
    }
}

/// Sampler for the density proportional to `exp(z)` on the window.
#[derive(Debug, Clone)]
pub struct ExpDensity<'a> {
    field: &'a GridField,
    cumulative: Vec<f64>,
    integral: f64,
}

impl<'a> ExpDensity<'a> {
    pub fn new(field: &'a GridField) -> Self {
        let max = field.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        let cumulative = field
            .values
            .iter()
            .map(|v| {
                acc += (v - max).exp();
                acc
            })
            .collect();
        Self { field, cumulative, integral: integrate_exp(field) }
    }

    /// `I_z`, the normalizing constant.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn field(&self) -> &GridField {
        self.field
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let total = *self.cumulative.last().expect("grid has cells");
        let target = rng.random::<f64>() * total;
        let cell = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.cumulative.len() - 1);
        let f = self.field;
        let (i, j) = (cell % f.nx, cell / f.nx);
        let x = f.window.xmin() + (i as f64 + rng.random::<f64>()) * f.dx();
        let y = f.window.ymin() + (j as f64 + rng.random::<f64>()) * f.dy();
        // Rounding can push a coordinate a hair past the far edge.
        Point::new(x.min(f.window.xmax()), y.min(f.window.ymax()))
    }
}

/// One point from the density proportional to `exp(z)`.
pub fn sample_from_exp_density<R: Rng + ?Sized>(field: &GridField, rng: &mut R) -> Point {
    ExpDensity::new(field).sample(rng)
}

/// Draw a realization of the field on an `nx x ny` grid of cell centres.
pub fn simulate_grf<R: Rng + ?Sized>(
    window: &Window,
    nx: usize,
    ny: usize,
    mu: f64,
    sigma2: f64,
    s: f64,
    rng: &mut R,
) -> Result<GridField> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!("grid {nx}x{ny}: need at least 2x2")));
    }
    if !(sigma2 >= 0.0) || !(s > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("mu={mu}, sigma2={sigma2}, s={s}")));
    }
    let mut field = GridField::constant(*window, nx, ny, mu)?;
    if sigma2 == 0.0 {
        return Ok(field);
    }
    let cov = ExpCovariance { sigma2, s, dx: field.dx(), dy: field.dy() };
    if nx * ny > CHOLESKY_MAX_CELLS {
        for pad in EMBEDDING_PADDING {
            if let Some(emb) = CirculantEmbedding::new(&cov, nx, ny, 2 * pad * nx, 2 * pad * ny) {
                emb.sample_into(&mut field.values, nx, ny, rng);
                field.method = FieldMethod::Circulant { torus_nx: emb.mx, torus_ny: emb.my };
                return Ok(field);
            }
        }
        log::warn!("circulant embedding indefinite for s={s}; falling back to Cholesky");
    }
    let jitter = cholesky_sample(&cov, nx, ny, &mut field.values, rng)?;
    field.method = FieldMethod::Cholesky { jitter };
    Ok(field)
}

#[derive(Debug, Clone, Copy)]
struct ExpCovariance {
    sigma2: f64,
    s: f64,
    dx: f64,
    dy: f64,
}

impl ExpCovariance {
    #[inline]
    fn at_lag(&self, di: f64, dj: f64) -> f64 {
        let d = (di * self.dx).hypot(dj * self.dy);
        self.sigma2 * (-d / self.s).exp()
    }
}

fn cholesky_sample<R: Rng + ?Sized>(
    cov: &ExpCovariance,
    nx: usize,
    ny: usize,
    values: &mut [f64],
    rng: &mut R,
) -> Result<f64> {
    let n = nx * ny;
    let base = DMatrix::from_fn(n, n, |a, b| {
        let (ia, ja) = ((a % nx) as f64, (a / nx) as f64);
        let (ib, jb) = ((b % nx) as f64, (b / nx) as f64);
        cov.at_lag(ia - ib, ja - jb)
    });
    let mut jitter = 0.0;
    let mut next = BASE_JITTER * cov.sigma2;
    for _ in 0..8 {
        let mut m = base.clone();
        if jitter > 0.0 {
            for k in 0..n {
                m[(k, k)] += jitter;
            }
        }
        if let Some(chol) = m.cholesky() {
            if jitter > 0.0 {
                log::warn!("cholesky needed diagonal jitter {jitter:e}");
            }
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let draw = chol.l() * z;
            for (v, d) in values.iter_mut().zip(draw.iter()) {
                *v += d;
            }
            return Ok(jitter);
        }
        jitter = next;
        next *= 100.0;
    }
    Err(Error::Factorization(format!(
        "covariance not positive definite for s={} even with jitter {jitter:e}",
        cov.s
    )))
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized 2-D DFT of a row-major `mx x my` array.
fn fft2(data: &mut [Complex64], mx: usize, my: usize) {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let row = planner.plan_fft_forward(mx);
        let col = planner.plan_fft_forward(my);
        row.process(data);
        let mut buf = vec![Complex64::new(0.0, 0.0); my];
        for i in 0..mx {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[j * mx + i];
            }
            col.process(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                data[j * mx + i] = *b;
            }
        }
    });
}

struct CirculantEmbedding {
    mx: usize,
    my: usize,
    /// `sqrt(lambda / (mx * my))` per frequency.
    amplitude: Vec<f64>,
}

impl CirculantEmbedding {
    /// `None` when the embedded covariance has a significantly negative eigenvalue.
    fn new(cov: &ExpCovariance, nx: usize, ny: usize, mx: usize, my: usize) -> Option<Self> {
        debug_assert!(mx >= 2 * (nx - 1) && my >= 2 * (ny - 1));
        let mut base = vec![Complex64::new(0.0, 0.0); mx * my];
        for j in 0..my {
            let lj = j.min(my - j) as f64;
            for i in 0..mx {
                let li = i.min(mx - i) as f64;
                base[j * mx + i] = Complex64::new(cov.at_lag(li, lj), 0.0);
            }
        }
        fft2(&mut base, mx, my);
        let max = base.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let min = base.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min < -EIGEN_TOLERANCE * max {
            return None;
        }
        let m = (mx * my) as f64;
        let amplitude = base.iter().map(|c| (c.re.max(0.0) / m).sqrt()).collect();
        Some(Self { mx, my, amplitude })
    }

    fn sample_into<R: Rng + ?Sized>(&self, values: &mut [f64], nx: usize, ny: usize, rng: &mut R) {
        let mut w: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(a * re, a * im)
            })
            .collect();
        fft2(&mut w, self.mx, self.my);
        for j in 0..ny {
            for i in 0..nx {
                values[j * nx + i] += w[j * self.mx + i].re;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    #[test]
    fn zero_variance_is_constant() {
        let w = Window::unit_square();
        let f = simulate_grf(&w, 64, 64, 5.0, 0.0, 0.3, &mut rng_from_seed(1)).unwrap();
        assert!(f.values().iter().all(|&v| v == 5.0));
        assert_eq!(f.method(), FieldMethod::Constant);
    }

    #[test]
    fn rejects_bad_input() {
        let w = Window::unit_square();
        let mut rng = rng_from_seed(1);
        assert!(simulate_grf(&w, 1, 8, 0.0, 1.0, 0.3, &mut rng).is_err());
        assert!(simulate_grf(&w, 8, 8, 0.0, -1.0, 0.3, &mut rng).is_err());
        assert!(simulate_grf(&w, 8, 8, 0.0, 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn seeded_fields_are_bitwise_identical() {
        let w = Window::unit_square();
        for n in [8, 64] {
            let a = simulate_grf(&w, n, n, 1.0, 2.0, 0.3, &mut rng_from_seed(3)).unwrap();
            let b = simulate_grf(&w, n, n, 1.0, 2.0, 0.3, &mut rng_from_seed(3)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn embedding_succeeds_over_p1_scale_range() {
        let w = Window::unit_square();
        for s in [0.01, 0.05, 0.1, 0.3, 0.5] {
            let f = simulate_grf(&w, 64, 64, 0.0, 1.0, s, &mut rng_from_seed(2)).unwrap();
            assert!(matches!(f.method(), FieldMethod::Circulant { .. }), "s={s}: {:?}", f.method());
        }
        let oak = Window::new(0.0, 125.0, 0.0, 188.0).unwrap();
        for s in [1.25, 20.0, 62.5] {
            let f = simulate_grf(&oak, 64, 64, 0.0, 1.0, s, &mut rng_from_seed(2)).unwrap();
            assert!(matches!(f.method(), FieldMethod::Circulant { .. }), "s={s}: {:?}", f.method());
        }
    }

    #[test]
    fn field_at_examples() {
        let w = Window::unit_square();
        let f = GridField::constant(w, 4, 4, 5.0).unwrap();
        assert_eq!(field_at(&f, &Point::new(0.3, 0.9)).unwrap(), 5.0);
        assert!(field_at(&f, &Point::new(1.5, 0.5)).is_err());

        let vals: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let f = GridField::from_values(w, 4, 4, vals).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                assert_eq!(field_at(&f, &f.cell_center(i, j)).unwrap(), (j * 4 + i) as f64);
            }
        }
    }

    #[test]
    fn field_at_matches_nearest_center_scan() {
        let w = Window::new(-1.0, 2.0, 0.0, 1.5).unwrap();
        let mut rng = rng_from_seed(8);
        let f = simulate_grf(&w, 6, 5, 0.0, 1.0, 0.5, &mut rng).unwrap();
        for _ in 0..500 {
            let u = Point::new(-1.0 + 3.0 * rng.random::<f64>(), 1.5 * rng.random::<f64>());
            let mut best = (f64::INFINITY, 0.0);
            for j in 0..f.ny() {
                for i in 0..f.nx() {
                    let d = f.cell_center(i, j).dist(&u);
                    if d < best.0 {
                        best = (d, f.values()[j * f.nx() + i]);
                    }
                }
            }
            assert_eq!(field_at(&f, &u).unwrap(), best.1);
        }
    }

    #[test]
    fn integrate_exp_examples() {
        let w = Window::unit_square();
        let f = GridField::constant(w, 8, 8, 2.0).unwrap();
        assert!((integrate_exp(&f) - 2f64.exp()).abs() < 1e-12);
        let w2 = Window::new(0.0, 3.0, 0.0, 2.0).unwrap();
        let f = GridField::constant(w2, 5, 7, 0.0).unwrap();
        assert!((integrate_exp(&f) - 6.0).abs() < 1e-12);

        let vals = vec![0.1, -2.0, 3.5, 0.0, 1.0, 1.5, -0.5, 2.2, 0.3, 0.7, -1.1, 0.9, 2.0, -3.0, 0.4, 1.8];
        let f = GridField::from_values(w, 4, 4, vals.clone()).unwrap();
        let mut direct = 0.0;
        for v in &vals {
            direct += v.exp() / 16.0;
        }
        assert!((integrate_exp(&f) - direct).abs() <= 1e-14 * direct);

        // overflow-guarded path
        let f = GridField::constant(w, 2, 2, 600.0).unwrap();
        assert!((log_integrate_exp(&f) - 600.0).abs() < 1e-12);
        assert!((integrate_exp(&f) / 600f64.exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integral_invariant_under_relabeling() {
        let w = Window::unit_square();
        let vals: Vec<f64> = (0..16).map(|k| (k as f64 * 0.37).sin()).collect();
        let f = GridField::from_values(w, 4, 4, vals.clone()).unwrap();
        let mut rev = vals;
        rev.reverse();
        let g = GridField::from_values(w, 4, 4, rev).unwrap();
        assert!((integrate_exp(&f) - integrate_exp(&g)).abs() < 1e-14);
    }

    #[test]
    fn exp_density_concentrates_on_hot_cell() {
        let w = Window::unit_square();
        let mut vals = vec![-10.0; 16];
        vals[5] = 10.0;
        let f = GridField::from_values(w, 4, 4, vals).unwrap();
        let d = ExpDensity::new(&f);
        let mut rng = rng_from_seed(4);
        let n = 100_000;
        let hits = (0..n).filter(|_| f.cell_index(&d.sample(&mut rng)) == 5).count();
        assert!(hits as f64 >= 0.999 * n as f64);
        let a = sample_from_exp_density(&f, &mut rng_from_seed(9));
        let b = sample_from_exp_density(&f, &mut rng_from_seed(9));
        assert_eq!(a, b);
    }
}
