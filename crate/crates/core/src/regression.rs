//! Relaxed-Lasso projections: Lasso with a cross-validated penalty picks
//! the predictors, ordinary least squares refits on them.
//!
//! The Lasso objective is `(1/2k) |y - a - X b|^2 + lambda |b|_1` on
//! standardized predictors (mean 0, variance 1 with divisor k). With that
//! scaling every coordinate update is a soft-threshold of
//! `c_j - sum_{l != j} G_jl b_l`, where `G = X'X / k` and `c = X'y / k`,
//! so a sweep costs O(d^2) regardless of k.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;

pub const TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 100_000;

/// Regularization path and cross-validation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoSettings {
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub n_folds: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self { n_lambda: 100, lambda_ratio: 1e-4, n_folds: 10 }
    }
}

/// Design matrix (rows are observations) and response.
#[derive(Debug, Clone)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl RegressionData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Mismatch(format!("{} rows but {} responses", x.nrows(), y.len())));
        }
        if x.nrows() < 2 {
            return Err(Error::InsufficientData("regression needs at least 2 observations".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("regression data contain non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Mismatch("ragged design rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(y))
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }
    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    fn subset(&self, rows: &[usize]) -> Self {
        Self { x: self.x.select_rows(rows), y: self.y.select_rows(rows) }
    }
}

/// Sufficient statistics of standardized data.
#[derive(Debug, Clone)]
struct Standardized {
    mean: Vec<f64>,
    /// Column standard deviations; 0 marks a constant column, which is
    /// excluded from the fit.
    sd: Vec<f64>,
    y_mean: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    yy: f64,
    gram: DMatrix<f64>,
    c: DVector<f64>,
}

impl Standardized {
    fn new(data: &RegressionData) -> Self {
        let (k, d) = (data.nrows(), data.ncols());
        let kf = k as f64;
        let mut mean = vec![0.0; d];
        let mut sd = vec![0.0; d];
        let mut z = data.x.clone();
        for j in 0..d {
            let col = data.x.column(j);
            let m = col.sum() / kf;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / kf;
            let s = v.sqrt();
            // Columns constant up to rounding carry no information.
            let s = if s > 1e-12 * (1.0 + m.abs()) { s } else { 0.0 };
            mean[j] = m;
            sd[j] = s;
            for i in 0..k {
                z[(i, j)] = if s > 0.0 { (data.x[(i, j)] - m) / s } else { 0.0 };
            }
        }
        let y_mean = data.y.sum() / kf;
        let yc = data.y.add_scalar(-y_mean);
        let gram = z.tr_mul(&z) / kf;
        let c = z.tr_mul(&yc) / kf;
        Self { mean, sd, y_mean, yy: yc.norm_squared() / kf, gram, c }
    }

    fn lambda_max(&self) -> f64 {
        self.c.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(1/2k)|y - a - Zb|^2 + lambda |b|_1` at the optimal intercept.
    #[cfg(test)]
    fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let b = DVector::from_column_slice(beta);
        let quad = (&self.gram * &b).dot(&b);
        0.5 * (self.yy - 2.0 * self.c.dot(&b) + quad) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Coordinate descent from `beta` (warm start). Returns sweeps used and
    /// the final max coefficient change.
    fn descend(&self, beta: &mut [f64], lambda: f64) -> (usize, f64, bool) {
        let d = beta.len();
        // g[j] = sum_l G_jl b_l, kept current as coefficients move.
        let mut g: Vec<f64> = (0..d).map(|j| (0..d).map(|l| self.gram[(j, l)] * beta[l]).sum()).collect();
        let mut change = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            change = 0.0;
            for j in 0..d {
                if self.sd[j] == 0.0 {
                    continue;
                }
                let old = beta[j];
                let rho = self.c[j] - g[j] + old;
                let new = soft_threshold(rho, lambda);
                if new != old {
                    let delta = new - old;
                    for (l, gl) in g.iter_mut().enumerate() {
                        *gl += self.gram[(l, j)] * delta;
                    }
                    beta[j] = new;
                    change = f64::max(change, delta.abs());
                }
            }
            if change < TOLERANCE {
                return (sweep, change, true);
            }
        }
        (MAX_SWEEPS, change, false)
    }

    fn lambda_path(&self, settings: &LassoSettings) -> Vec<f64> {
        let top = self.lambda_max();
        let n = settings.n_lambda.max(1);
        if n == 1 || top == 0.0 {
            return vec![top; n];
        }
        let step = settings.lambda_ratio.ln() / (n - 1) as f64;
        (0..n).map(|i| top * (step * i as f64).exp()).collect()
    }

    /// Map standardized coefficients to the original scale.
    fn unscale(&self, beta_std: &[f64]) -> (f64, Vec<f64>) {
        let beta: Vec<f64> =
            beta_std.iter().zip(&self.sd).map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 }).collect();
        let intercept = self.y_mean - beta.iter().zip(&self.mean).map(|(b, m)| b * m).sum::<f64>();
        (intercept, beta)
    }
}

#[inline]
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Lasso coefficients on the original and standardized scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub std_coefficients: Vec<f64>,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn support(&self) -> Vec<usize> {
        (0..self.coefficients.len()).filter(|&j| self.std_coefficients[j] != 0.0).collect()
    }
}

pub fn lasso_fit(data: &RegressionData, lambda: f64) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let st = Standardized::new(data);
    let mut beta = vec![0.0; data.ncols()];
    let (sweeps, achieved, ok) = st.descend(&mut beta, lambda);
    if !ok {
        return Err(Error::NoConvergence { sweeps, achieved });
    }
    let (intercept, coefficients) = st.unscale(&beta);
    Ok(LassoFit { lambda, intercept, coefficients, std_coefficients: beta, sweeps })
}

/// Standardized coefficients along a path with warm starts. Unconverged
/// points are logged and kept: they only feed CV error estimates.
fn fit_path(st: &Standardized, lambdas: &[f64]) -> Vec<Vec<f64>> {
    let mut beta = vec![0.0; st.c.len()];
    lambdas
        .iter()
        .map(|&l| {
            let (sweeps, achieved, ok) = st.descend(&mut beta, l);
            if !ok {
                log::warn!("lasso path point lambda={l:.3e} stopped after {sweeps} sweeps (change {achieved:.2e})");
            }
            beta.clone()
        })
        .collect()
}

/// Cross-validation curve over the full-data lambda path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub index_min: usize,
    pub index_1se: usize,
}

impl CvResult {
    pub fn lambda_min(&self) -> f64 {
        self.lambdas[self.index_min]
    }
    pub fn lambda_1se(&self) -> f64 {
        self.lambdas[self.index_1se]
    }
}

/// Fold label of each row: a seeded permutation dealt round-robin.
pub fn fold_assignment(k: usize, n_folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut fold = vec![0; k];
    for (pos, &row) in perm.iter().enumerate() {
        fold[row] = pos % n_folds;
    }
    fold
}

pub fn cross_validate(data: &RegressionData, settings: &LassoSettings, seed: u64) -> Result<CvResult> {
    let k = data.nrows();
    let nf = settings.n_folds;
    if nf < 2 || k < nf {
        return Err(Error::InsufficientData(format!("{k} observations for {nf} folds")));
    }
    let full = Standardized::new(data);
    let lambdas = full.lambda_path(settings);
    let fold = fold_assignment(k, nf, seed);
    let errors: Vec<Vec<f64>> = (0..nf)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..k).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..k).filter(|&i| fold[i] == f).collect();
            let st = Standardized::new(&data.subset(&train));
            fit_path(&st, &lambdas)
                .iter()
                .map(|b| {
                    let (a, beta) = st.unscale(b);
                    test.iter()
                        .map(|&i| {
                            let pred = a + (0..beta.len()).map(|j| beta[j] * data.x[(i, j)]).sum::<f64>();
                            (data.y[i] - pred).powi(2)
                        })
                        .sum::<f64>()
                        / test.len() as f64
                })
                .collect()
        })
        .collect();
    let n = lambdas.len();
    let mut cv_mean = vec![0.0; n];
    let mut cv_se = vec![0.0; n];
    for l in 0..n {
        let e: Vec<f64> = errors.iter().map(|fe| fe[l]).collect();
        let m = e.iter().sum::<f64>() / nf as f64;
        let v = e.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (nf - 1) as f64;
        cv_mean[l] = m;
        cv_se[l] = (v / nf as f64).sqrt();
    }
    // Strict `<` keeps the largest lambda among exact ties.
    let mut index_min = 0;
    for l in 1..n {
        if cv_mean[l] < cv_mean[index_min] {
            index_min = l;
        }
    }
    let bound = cv_mean[index_min] + cv_se[index_min];
    let index_1se = (0..=index_min).find(|&l| cv_mean[l] <= bound).unwrap_or(index_min);
    Ok(CvResult { lambdas, cv_mean, cv_se, index_min, index_1se })
}

/// Largest path lambda within one standard error of the CV minimum.
pub fn cv_lambda_1se(data: &RegressionData, settings: &LassoSettings, seed: u64) -> Result<f64> {
    Ok(cross_validate(data, settings, seed)?.lambda_1se())
}

/// Linear predictor of one parameter from a summary vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub intercept: f64,
    /// Original-scale coefficients, exactly zero off the support.
    pub coefficients: Vec<f64>,
    /// Coefficients for standardized predictors, for reporting.
    pub std_coefficients: Vec<f64>,
    pub support: Vec<usize>,
    pub lambda: f64,
    /// Sample variance of fitted values over the training set.
    pub fitted_variance: f64,
}

impl ProjectionModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.support.iter().map(|&j| self.coefficients[j] * x[j]).sum::<f64>()
    }

    /// An empty support leaves a constant predictor that cannot separate draws.
    pub fn is_degenerate(&self) -> bool {
        !(self.fitted_variance > 0.0)
    }
}

/// OLS with intercept on the given columns, via SVD least squares.
pub fn ols_fit(data: &RegressionData, support: &[usize]) -> Result<(f64, Vec<f64>)> {
    let k = data.nrows();
    let a = DMatrix::from_fn(k, support.len() + 1, |i, c| if c == 0 { 1.0 } else { data.x[(i, support[c - 1])] });
    let svd = a.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    let sol = svd.solve(&data.y, eps).map_err(|e| Error::Factorization(e.to_string()))?;
    let mut beta = vec![0.0; data.ncols()];
    for (c, &j) in support.iter().enumerate() {
        beta[j] = sol[c + 1];
    }
    Ok((sol[0], beta))
}

pub fn relaxed_lasso_fit(data: &RegressionData, settings: &LassoSettings, seed: u64) -> Result<ProjectionModel> {
    let lambda = cv_lambda_1se(data, settings, seed)?;
    let st = Standardized::new(data);
    let mut beta = vec![0.0; data.ncols()];
    // Warm start down the path to the chosen lambda, as in CV.
    for l in st.lambda_path(settings).into_iter().filter(|&l| l >= lambda) {
        let (sweeps, achieved, ok) = st.descend(&mut beta, l);
        if !ok {
            return Err(Error::NoConvergence { sweeps, achieved });
        }
    }
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    let (intercept, coefficients) = ols_fit(data, &support)?;
    let k = data.nrows();
    let fitted: Vec<f64> = (0..k)
        .map(|i| intercept + support.iter().map(|&j| coefficients[j] * data.x[(i, j)]).sum::<f64>())
        .collect();
    let fm = fitted.iter().sum::<f64>() / k as f64;
    let fitted_variance = if support.is_empty() {
        0.0
    } else {
        fitted.iter().map(|f| (f - fm) * (f - fm)).sum::<f64>() / (k - 1) as f64
    };
    let std_coefficients = coefficients.iter().zip(&st.sd).map(|(b, s)| b * s).collect();
    Ok(ProjectionModel { intercept, coefficients, std_coefficients, support, lambda, fitted_variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(k: usize, d: usize, beta: &[f64], noise: f64, seed: u64) -> RegressionData {
        let mut rng = rng_from_seed(seed);
        let x = DMatrix::from_fn(k, d, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(k, |i, _| {
            1.5 + (0..d).map(|j| beta[j] * x[(i, j)]).sum::<f64>() + noise * rng.sample::<f64, _>(StandardNormal)
        });
        RegressionData::new(x, y).unwrap()
    }

    /// Normal equations `(A'A) b = A'y` solved by Cholesky.
    fn normal_equations(data: &RegressionData, cols: &[usize]) -> Vec<f64> {
        let k = data.nrows();
        let a = DMatrix::from_fn(k, cols.len() + 1, |i, c| if c == 0 { 1.0 } else { data.x()[(i, cols[c - 1])] });
        let ata = a.tr_mul(&a);
        let aty = a.tr_mul(data.y());
        ata.cholesky().unwrap().solve(&aty).iter().copied().collect()
    }

    #[test]
    fn zero_penalty_is_ols() {
        let data = random_problem(100, 5, &[1.0, -2.0, 0.5, 0.0, 3.0], 0.3, 1);
        let fit = lasso_fit(&data, 0.0).unwrap();
        let ols = normal_equations(&data, &[0, 1, 2, 3, 4]);
        assert!((fit.intercept - ols[0]).abs() < 1e-5);
        for j in 0..5 {
            assert!((fit.coefficients[j] - ols[j + 1]).abs() < 1e-5);
        }
    }

    #[test]
    fn orthogonal_design_soft_thresholds() {
        // Columns of a Sylvester-Hadamard matrix: mean 0, variance 1, orthogonal.
        let h = |i: usize, j: usize| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let k = 16;
        let cols = [1, 2, 3, 5, 9];
        let x = DMatrix::from_fn(k, cols.len(), |i, c| h(i, cols[c]));
        let mut rng = rng_from_seed(3);
        let y = DVector::from_fn(k, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let data = RegressionData::new(x.clone(), y.clone()).unwrap();
        for lambda in [0.0, 0.05, 0.2, 0.5, 5.0] {
            let fit = lasso_fit(&data, lambda).unwrap();
            for c in 0..cols.len() {
                let ols = x.column(c).dot(&y) / k as f64;
                assert!((fit.coefficients[c] - soft_threshold(ols, lambda)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_response_and_huge_penalty() {
        let data = random_problem(50, 4, &[0.0; 4], 0.0, 2);
        let zero = RegressionData::new(data.x().clone(), DVector::zeros(50)).unwrap();
        let fit = lasso_fit(&zero, 0.1).unwrap();
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        let data = random_problem(50, 4, &[1.0, 2.0, 3.0, 4.0], 0.1, 2);
        let fit = lasso_fit(&data, 1e9).unwrap();
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        assert!((fit.intercept - data.y().mean()).abs() < 1e-12);
    }

    #[test]
    fn noise_response_selects_tiny_model() {
        let mut small = 0;
        for seed in 0..50 {
            let data = random_problem(200, 10, &[0.0; 10], 1.0, 100 + seed);
            let m = relaxed_lasso_fit(&data, &LassoSettings::default(), seed).unwrap();
            if m.support.len() <= 1 {
                small += 1;
            }
        }
        assert!(small >= 45, "{small}/50");
    }

    #[test]
    fn strong_signal_is_selected() {
        let mut hit = 0;
        for seed in 0..40 {
            let mut beta = [0.0; 10];
            beta[3] = 10.0;
            let data = random_problem(200, 10, &beta, 1.0, 500 + seed);
            let m = relaxed_lasso_fit(&data, &LassoSettings::default(), seed).unwrap();
            if m.support.contains(&3) {
                hit += 1;
            }
        }
        assert!(hit >= 38, "{hit}/40");
    }

    #[test]
    fn one_se_lambda_on_path_and_not_below_min() {
        for seed in 0..10 {
            let data = random_problem(120, 8, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.2], 1.0, seed);
            let cv = cross_validate(&data, &LassoSettings::default(), seed).unwrap();
            assert!(cv.lambdas.contains(&cv.lambda_1se()));
            assert!(cv.lambda_1se() >= cv.lambda_min());
        }
    }

    #[test]
    fn refit_matches_normal_equations_on_support() {
        let beta: Vec<f64> = (0..10).map(|j| if j % 3 == 0 { 1.0 + j as f64 } else { 0.0 }).collect();
        let data = random_problem(200, 10, &beta, 0.5, 8);
        let m = relaxed_lasso_fit(&data, &LassoSettings::default(), 8).unwrap();
        let oracle = normal_equations(&data, &m.support);
        assert!((m.intercept - oracle[0]).abs() < 1e-8);
        for (c, &j) in m.support.iter().enumerate() {
            assert!((m.coefficients[j] - oracle[c + 1]).abs() < 1e-8);
        }
        for j in 0..10 {
            if !m.support.contains(&j) {
                assert_eq!(m.coefficients[j], 0.0);
            }
        }
        // Refit support is the Lasso support at the chosen lambda.
        let st = Standardized::new(&data);
        let mut b = vec![0.0; 10];
        for l in st.lambda_path(&LassoSettings::default()).into_iter().filter(|&l| l >= m.lambda) {
            st.descend(&mut b, l);
        }
        let lasso_support: Vec<usize> = (0..10).filter(|&j| b[j] != 0.0).collect();
        assert_eq!(lasso_support, m.support);
    }

    #[test]
    fn constant_response_gives_degenerate_projection() {
        let data = random_problem(60, 3, &[0.0; 3], 0.0, 4);
        let m = relaxed_lasso_fit(&data, &LassoSettings::default(), 0).unwrap();
        assert!(m.support.is_empty());
        assert!(m.is_degenerate());
    }

    #[test]
    fn deterministic_given_seed() {
        let data = random_problem(150, 6, &[0.3, 0.0, -0.2, 0.0, 0.1, 0.0], 1.0, 77);
        let a = relaxed_lasso_fit(&data, &LassoSettings::default(), 5).unwrap();
        let b = relaxed_lasso_fit(&data, &LassoSettings::default(), 5).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn objective_nonincreasing_over_sweeps(seed in 0u64..500, lambda in 0.0..0.5f64) {
            let data = random_problem(40, 6, &[1.0, -1.0, 0.5, 0.0, 0.0, 2.0], 0.5, seed);
            let st = Standardized::new(&data);
            let mut beta = vec![0.0; 6];
            let mut prev = st.objective(&beta, lambda);
            for _ in 0..30 {
                let d = beta.len();
                // One sweep by hand, via a single-sweep descent on a copy.
                let mut g: Vec<f64> = (0..d).map(|j| (0..d).map(|l| st.gram[(j, l)] * beta[l]).sum()).collect();
                for j in 0..d {
                    let new = soft_threshold(st.c[j] - g[j] + beta[j], lambda);
                    let delta = new - beta[j];
                    for l in 0..d { g[l] += st.gram[(l, j)] * delta; }
                    beta[j] = new;
                }
                let obj = st.objective(&beta, lambda);
                prop_assert!(obj <= prev + 1e-12);
                prev = obj;
            }
        }

        #[test]
        fn column_rescaling_keeps_fitted_values(seed in 0u64..500, scale in 0.01..100.0f64) {
            let data = random_problem(60, 4, &[1.0, 0.0, -0.7, 0.3], 0.5, seed);
            let mut x2 = data.x().clone();
            x2.column_mut(2).scale_mut(scale);
            let scaled = RegressionData::new(x2, data.y().clone()).unwrap();
            let a = lasso_fit(&data, 0.05).unwrap();
            let b = lasso_fit(&scaled, 0.05).unwrap();
            for i in 0..60 {
                let fa = a.intercept + (0..4).map(|j| a.coefficients[j] * data.x()[(i, j)]).sum::<f64>();
                let fb = b.intercept + (0..4).map(|j| b.coefficients[j] * scaled.x()[(i, j)]).sum::<f64>();
                prop_assert!((fa - fb).abs() < 1e-6 * (1.0 + fa.abs()));
            }
        }
    }
}
