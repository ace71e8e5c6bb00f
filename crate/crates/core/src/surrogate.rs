//! Stationary Gaussian-process surrogate with a constant mean and a
//! separable Gaussian correlation.
//!
//! `mu` and `tau^2` have closed-form maximum-likelihood estimates for a given
//! `theta`; `theta` itself is chosen by maximizing the concentrated
//! log-likelihood with a multi-start bounded Nelder-Mead search in
//! `log10(theta)` space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BofipError, Result};

/// Hyperparameter search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Box for every `theta_l`, searched on a log scale.
    pub theta_bounds: (f64, f64),
    /// Diagonal inflation of `R`, escalated x10 twice on factorization failure.
    pub nugget: f64,
    pub restarts: usize,
    /// Likelihood evaluations per restart; `None` scales with dimension.
    pub max_evals: Option<usize>,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            theta_bounds: (1e-3, 1e3),
            nugget: 1e-8,
            restarts: 5,
            max_evals: None,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.theta_bounds;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(BofipError::config(format!(
                "theta bounds ({lo}, {hi}) must satisfy 0 < lo <= hi"
            )));
        }
        if !(self.nugget > 0.0 && self.nugget.is_finite()) {
            return Err(BofipError::config("nugget must be positive"));
        }
        if self.restarts == 0 {
            return Err(BofipError::config("at least one theta restart is required"));
        }
        Ok(())
    }
}

/// Gaussian correlation `prod_l exp(-theta_l (a_l - b_l)^2)`.
pub fn correlation(a: &[f64], b: &[f64], theta: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != theta.len() {
        return Err(BofipError::InvalidParameter(format!(
            "correlation inputs have lengths {}, {}, {}",
            a.len(),
            b.len(),
            theta.len()
        )));
    }
    if let Some(t) = theta.iter().find(|t| !(**t > 0.0)) {
        return Err(BofipError::InvalidParameter(format!(
            "theta must be positive, got {t}"
        )));
    }
    Ok(corr(a, b, theta))
}

#[inline]
fn corr(a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(theta)
        .map(|((x, y), t)| t * (x - y) * (x - y))
        .sum();
    (-s).exp()
}

/// Predictive mean and model variance at one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Fitted surrogate.
#[derive(Debug, Clone)]
pub struct GpModel {
    dims: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    theta: Vec<f64>,
    mu_hat: f64,
    tau2_hat: f64,
    nugget: f64,
    log_likelihood: f64,
    chol: Cholesky<f64, Dyn>,
    r_inv_one: DVector<f64>,
    one_r_inv_one: f64,
    alpha: DVector<f64>,
}

struct Training<'a> {
    dims: usize,
    x: &'a [f64],
    y: &'a DVector<f64>,
}

impl Training<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dims..(i + 1) * self.dims]
    }

    fn correlation_matrix(&self, theta: &[f64], nugget: f64) -> DMatrix<f64> {
        let n = self.n();
        let mut r = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for j in 0..i {
                let c = corr(self.row(i), self.row(j), theta);
                r[(i, j)] = c;
                r[(j, i)] = c;
            }
            r[(i, i)] = 1.0 + nugget;
        }
        r
    }

    fn factorize(&self, theta: &[f64], nugget: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
        for nu in [nugget, 10.0 * nugget, 100.0 * nugget] {
            if let Some(chol) = Cholesky::new(self.correlation_matrix(theta, nu)) {
                return Ok((chol, nu));
            }
        }
        Err(BofipError::IllConditioned {
            nugget: 100.0 * nugget,
        })
    }

    fn concentrate(&self, theta: &[f64], nugget: f64) -> Result<GpModel> {
        let n = self.n();
        let (chol, nugget) = self.factorize(theta, nugget)?;
        let one = DVector::<f64>::from_element(n, 1.0);
        let r_inv_one = chol.solve(&one);
        let one_r_inv_one = one.dot(&r_inv_one);
        let mu_hat = r_inv_one.dot(self.y) / one_r_inv_one;
        let resid = self.y.map(|v| v - mu_hat);
        let alpha = chol.solve(&resid);
        let tau2_hat = (resid.dot(&alpha) / n as f64).max(0.0);
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_likelihood =
            -0.5 * n as f64 * tau2_hat.max(f64::MIN_POSITIVE).ln() - 0.5 * log_det;
        if !(mu_hat.is_finite() && log_likelihood.is_finite()) {
            return Err(BofipError::IllConditioned { nugget });
        }
        Ok(GpModel {
            dims: self.dims,
            x: self.x.to_vec(),
            y: self.y.iter().copied().collect(),
            theta: theta.to_vec(),
            mu_hat,
            tau2_hat,
            nugget,
            log_likelihood,
            chol,
            r_inv_one,
            one_r_inv_one,
            alpha,
        })
    }
}

fn flatten<X: AsRef<[f64]>>(x: &[X], y: &[f64]) -> Result<(usize, Vec<f64>)> {
    let n = x.len();
    if n < 2 {
        return Err(BofipError::Input(format!(
            "surrogate needs at least 2 samples, got {n}"
        )));
    }
    if y.len() != n {
        return Err(BofipError::Input(format!(
            "{n} locations but {} responses",
            y.len()
        )));
    }
    let dims = x[0].as_ref().len();
    if dims == 0 || x.iter().any(|r| r.as_ref().len() != dims) {
        return Err(BofipError::Input("locations must share a positive width".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(BofipError::Input("responses must be finite".into()));
    }
    for i in 1..n {
        if x[..i].iter().any(|r| r.as_ref() == x[i].as_ref()) {
            return Err(BofipError::Input(format!("location {i} is duplicated")));
        }
    }
    Ok((dims, x.iter().flat_map(|r| r.as_ref().iter().copied()).collect()))
}

impl GpModel {
    /// Fits `theta` by maximum concentrated likelihood, then `mu` and `tau^2`
    /// in closed form.
    pub fn fit<X, R>(x: &[X], y: &[f64], config: &GpConfig, rng: &mut R) -> Result<Self>
    where
        X: AsRef<[f64]>,
        R: Rng + ?Sized,
    {
        config.validate()?;
        let (dims, flat) = flatten(x, y)?;
        let yv = DVector::from_column_slice(y);
        let data = Training {
            dims,
            x: &flat,
            y: &yv,
        };
        let (lo, hi) = (config.theta_bounds.0.log10(), config.theta_bounds.1.log10());
        let max_evals = config.max_evals.unwrap_or(60 + 60 * dims);

        let neg_ll = |z: &[f64]| -> f64 {
            let theta: Vec<f64> = z.iter().map(|v| 10f64.powf(*v)).collect();
            data.concentrate(&theta, config.nugget)
                .map_or(f64::INFINITY, |m| -m.log_likelihood)
        };

        let mut best: Option<(Vec<f64>, f64)> = None;
        for _ in 0..config.restarts {
            let start: Vec<f64> = (0..dims)
                .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
                .collect();
            let (z, v) = nelder_mead(&neg_ll, start, lo, hi, max_evals);
            if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                best = Some((z, v));
            }
        }
        let (z, v) = best.expect("at least one restart");
        if !v.is_finite() {
            return Err(BofipError::IllConditioned {
                nugget: 100.0 * config.nugget,
            });
        }
        let theta: Vec<f64> = z.iter().map(|v| 10f64.powf(*v)).collect();
        data.concentrate(&theta, config.nugget)
    }

    /// Model at a fixed `theta` (no likelihood search).
    pub fn with_theta<X: AsRef<[f64]>>(x: &[X], y: &[f64], theta: &[f64], nugget: f64) -> Result<Self> {
        let (dims, flat) = flatten(x, y)?;
        if theta.len() != dims || theta.iter().any(|t| !(*t > 0.0)) {
            return Err(BofipError::InvalidParameter(
                "theta must be positive with one entry per dimension".into(),
            ));
        }
        let yv = DVector::from_column_slice(y);
        Training {
            dims,
            x: &flat,
            y: &yv,
        }
        .concentrate(theta, nugget)
    }

    /// Concentrated log-likelihood `-(n/2) ln tau2(theta) - (1/2) ln det R(theta)`.
    pub fn concentrated_log_likelihood<X: AsRef<[f64]>>(
        x: &[X],
        y: &[f64],
        theta: &[f64],
        nugget: f64,
    ) -> Result<f64> {
        Self::with_theta(x, y, theta, nugget).map(|m| m.log_likelihood)
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        assert_eq!(x.len(), self.dims, "prediction point has wrong width");
        let n = self.y.len();
        // the nugget acts as a white-noise kernel term: it only adds to the
        // correlation of a location with itself
        let mut prior = 1.0;
        let r = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let xi = &self.x[i * self.dims..(i + 1) * self.dims];
                if xi == x {
                    prior = 1.0 + self.nugget;
                    prior
                } else {
                    corr(x, xi, &self.theta)
                }
            }),
        );
        let mean = self.mu_hat + r.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&r)
            .expect("cholesky factor has a positive diagonal");
        let r_r_inv_r = v.dot(&v);
        let one_r_inv_r = r.dot(&self.r_inv_one);
        let variance = self.tau2_hat
            * (prior - r_r_inv_r + (1.0 - one_r_inv_r).powi(2) / self.one_r_inv_one);
        Prediction {
            mean,
            variance: variance.max(0.0),
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    pub fn tau2_hat(&self) -> f64 {
        self.tau2_hat
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Whether `x` is one of the training locations.
    pub fn is_training_point(&self, x: &[f64]) -> bool {
        self.x.chunks_exact(self.dims).any(|r| r == x)
    }

    /// Smallest observed response.
    pub fn best_response(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Box-constrained Nelder-Mead minimizer. The starting point is kept as a
/// vertex, so the result is never worse than `start`.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: Vec<f64>,
    lo: f64,
    hi: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|c| *c = c.clamp(lo, hi));
    let step = 0.15 * (hi - lo).max(1e-12);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = f(&start);
    simplex.push((start.clone(), f0));
    for k in 0..n {
        let mut v = start.clone();
        v[k] = if v[k] + step <= hi { v[k] + step } else { v[k] - step };
        clamp(&mut v);
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let mut evals = n + 1;
    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);

    while evals < max_evals {
        simplex.sort_by(by_value);
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread < 1e-6 || (worst.is_finite() && (worst - best).abs() <= 1e-10 * (1.0 + best.abs())) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let toward = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp(&mut p);
            p
        };

        let reflected = toward(-1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < simplex[0].1 {
            let expanded = toward(-2.0);
            let fe = f(&expanded);
            evals += 1;
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[n].1 { toward(-0.5) } else { toward(0.5) };
            let fc = f(&contracted);
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                // shrink toward the best vertex
                let best_v = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for (x, b) in v.iter_mut().zip(&best_v) {
                        *x = b + 0.5 * (*x - b);
                    }
                    *fv = f(v);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(by_value);
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn correlation_basics() {
        assert_eq!(correlation(&[0.3, -1.0], &[0.3, -1.0], &[2.0, 5.0]).unwrap(), 1.0);
        assert_relative_eq!(
            correlation(&[0.0], &[1.0], &[1.0]).unwrap(),
            0.367_879_441_171_442_3,
            epsilon = 1e-15
        );
        assert!(correlation(&[0.0], &[1.0], &[0.0]).is_err());
        assert!(correlation(&[0.0], &[1.0], &[-1.0]).is_err());
        assert!(correlation(&[0.0, 1.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn constant_responses_have_zero_variance() {
        let x = [[0.0], [0.4], [1.0], [1.7]];
        let y = [3.5; 4];
        let m = GpModel::fit(&x, &y, &GpConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_relative_eq!(m.mu_hat(), 3.5, epsilon = 1e-9);
        assert!(m.tau2_hat() < 1e-20);
        for theta in [0.01, 1.0, 100.0] {
            let m = GpModel::with_theta(&x, &y, &[theta], 1e-8).unwrap();
            assert_relative_eq!(m.mu_hat(), 3.5, epsilon = 1e-9);
            assert!(m.tau2_hat() < 1e-20);
        }
    }

    #[test]
    fn rejects_duplicates_and_tiny_samples() {
        let cfg = GpConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            GpModel::fit(&[[0.0], [0.0]], &[1.0, 2.0], &cfg, &mut rng),
            Err(BofipError::Input(_))
        ));
        assert!(GpModel::fit(&[[0.0]], &[1.0], &cfg, &mut rng).is_err());
    }

    #[test]
    fn interpolates_training_data() {
        let x: Vec<[f64; 2]> = (0..8)
            .map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()])
            .collect();
        let y: Vec<f64> = x.iter().map(|p| p[0] * p[0] + 3.0 * p[1]).collect();
        let m = GpModel::fit(&x, &y, &GpConfig::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let range = y.iter().cloned().fold(f64::MIN, f64::max) - y.iter().cloned().fold(f64::MAX, f64::min);
        for (p, v) in x.iter().zip(&y) {
            let pred = m.predict(p);
            assert!((pred.mean - v).abs() <= 1e-5 * (range + 1e-8));
            assert!(pred.variance <= 1e-5 * m.tau2_hat());
        }
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let x = [[0.0], [0.5], [1.0]];
        let y = [1.0, -0.5, 2.0];
        let m = GpModel::with_theta(&x, &y, &[50.0], 1e-8).unwrap();
        let far = m.predict(&[100.0]);
        assert_relative_eq!(far.mean, m.mu_hat(), epsilon = 1e-12);
        assert_relative_eq!(
            far.variance,
            m.tau2_hat() * (1.0 + 1.0 / m.one_r_inv_one),
            max_relative = 1e-12
        );
    }

    #[test]
    fn mirror_symmetric_data_gives_symmetric_predictions() {
        let x = [[-1.0], [-0.4], [0.0], [0.4], [1.0]];
        let y = [2.0, 0.3, -1.0, 0.3, 2.0];
        let m = GpModel::fit(&x, &y, &GpConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for a in [0.1, 0.25, 0.7, 1.3] {
            let (l, r) = (m.predict(&[-a]), m.predict(&[a]));
            assert!((l.mean - r.mean).abs() < 1e-9);
            assert!((l.variance - r.variance).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_never_regresses_below_restart_starts() {
        // replay the restart starting points and compare likelihoods
        let x: Vec<[f64; 2]> = (0..10)
            .map(|i| [i as f64 / 9.0, ((i * 7) % 10) as f64 / 9.0])
            .collect();
        let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let cfg = GpConfig::default();
        let m = GpModel::fit(&x, &y, &cfg, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (lo, hi) = (cfg.theta_bounds.0.log10(), cfg.theta_bounds.1.log10());
        for _ in 0..cfg.restarts {
            let theta: Vec<f64> = (0..2).map(|_| 10f64.powf(rng.random_range(lo..hi))).collect();
            if let Ok(ll) = GpModel::concentrated_log_likelihood(&x, &y, &theta, cfg.nugget) {
                assert!(m.log_likelihood() >= ll - 1e-9);
            }
        }
    }

    #[test]
    fn nelder_mead_finds_box_minimum() {
        let f = |z: &[f64]| (z[0] - 1.0).powi(2) + (z[1] + 2.5).powi(2);
        let (z, v) = nelder_mead(&f, vec![0.0, 0.0], -2.0, 2.0, 2000);
        assert!((z[0] - 1.0).abs() < 1e-3);
        assert!((z[1] + 2.0).abs() < 1e-3, "clamped to the box: {z:?}");
        assert!(v < 0.26);
    }
}
