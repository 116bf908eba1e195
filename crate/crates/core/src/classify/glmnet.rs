//! Multinomial logistic regression with a lasso penalty, fit by cyclic
//! coordinate descent along a decreasing regularization path.
//!
//! The objective on internally standardized columns is
//!
//! ```text
//! −(1/n) Σᵢ log pᵢ,yᵢ + λ Σₖ Σⱼ |βₖⱼ|,   pᵢₖ = softmax(b₀ + Xβ)ᵢₖ
//! ```
//!
//! with unpenalized intercepts. Classes are updated one at a time with a
//! weighted least-squares (Newton) approximation solved by coordinate descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_rows, Prediction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    pub num_lambda: usize,
    /// Smallest λ as a fraction of λ_max; `None` picks 1e−2 when n < p, else 1e−4.
    pub lambda_ratio: Option<f64>,
    /// Folds used to choose λ; values below 2 skip cross-validation and keep
    /// the end of the path.
    pub cv_folds: usize,
    pub seed: u64,
    /// Target for the maximal KKT violation at each λ.
    pub kkt_tol: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
}

impl Default for GlmParams {
    fn default() -> Self {
        Self {
            num_lambda: 100,
            lambda_ratio: None,
            cv_folds: 5,
            seed: 0,
            kkt_tol: 1e-7,
            max_outer: 500,
            max_sweeps: 100_000,
        }
    }
}

/// Fitted model. Coefficients are on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub num_classes: usize,
    pub num_features: usize,
    /// `num_classes × (1 + num_features)`: intercept first.
    pub theta: Vec<Vec<f64>>,
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    /// Mean validation loss per λ (training loss when no CV was run).
    pub loss_path: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// KKT residual of the final fit on standardized data.
    pub kkt: f64,
}

impl GlmModel {
    pub fn coefficients(&self, class: usize) -> &[f64] {
        &self.theta[class][1..]
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.num_features {
            return Err(Error::dim(self.num_features, x.len(), "GLM input"));
        }
        Ok(self
            .theta
            .iter()
            .map(|t| t[0] + t[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut eta = self.linear_predictor(x)?;
        softmax_in_place(&mut eta);
        Ok(eta)
    }

    /// Most probable class; `scores` are the class probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let probs = self.probabilities(x)?;
        Ok(Prediction {
            label: argmax(&probs),
            scores: probs,
        })
    }

    pub fn predict_labels(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        x.iter().map(|r| self.predict(r).map(|p| p.label)).collect()
    }

    /// Largest KKT violation of this model on `(x, y)` at its own λ, measured
    /// on the columns standardized with the stored means and scales.
    pub fn kkt_residual(&self, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
        check_rows(x, y, self.num_classes)?;
        let data = Standardized::with_moments(x, self.means.clone(), self.scales.clone())?;
        let coefs = Coefs {
            b0: self
                .theta
                .iter()
                .map(|t| t[0] + t[1..].iter().zip(&self.means).map(|(a, m)| a * m).sum::<f64>())
                .collect(),
            beta: self
                .theta
                .iter()
                .map(|t| t[1..].iter().zip(&self.scales).map(|(a, s)| a * s).collect())
                .collect(),
        };
        let eta = data.eta(&coefs);
        Ok(kkt_residual(&data, y, self.num_classes, self.lambda, &coefs, &eta))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Soft-thresholding operator `sign(z)·max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CdOptions {
    /// Convergence threshold on `max_j v_j·Δβ_j²`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_sweeps: 100_000,
        }
    }
}

/// Cyclic coordinate descent for `½ Σᵢ wᵢ (yᵢ − b₀ − xᵢβ)² + λ‖β‖₁`.
///
/// `cols` holds the design column-wise. `resid` must equal `y − b₀ − Xβ` for
/// the incoming `beta` (and intercept) and is kept up to date. Sweeps cycle
/// over all coordinates, then over the active set until it settles, and stop
/// once a full sweep changes nothing beyond `opts.tol`. Returns the sweep count.
pub fn weighted_lasso_cd(
    cols: &[Vec<f64>],
    resid: &mut [f64],
    w: &[f64],
    lambda: f64,
    beta: &mut [f64],
    mut intercept: Option<&mut f64>,
    opts: CdOptions,
) -> Result<usize> {
    let n = resid.len();
    if w.len() != n || cols.iter().any(|c| c.len() != n) {
        return Err(Error::dim(n, w.len(), "coordinate descent rows"));
    }
    if beta.len() != cols.len() {
        return Err(Error::dim(cols.len(), beta.len(), "coordinate descent coefficients"));
    }
    let v: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().zip(w).map(|(x, wi)| wi * x * x).sum())
        .collect();
    let w_sum: f64 = w.iter().sum();

    let update = |j: usize, beta: &mut [f64], resid: &mut [f64]| -> f64 {
        if v[j] <= 0.0 {
            return 0.0;
        }
        let col = &cols[j];
        let g: f64 = col.iter().zip(w).zip(resid.iter()).map(|((x, wi), r)| wi * x * r).sum::<f64>() + v[j] * beta[j];
        let new = soft_threshold(g, lambda) / v[j];
        let delta = new - beta[j];
        if delta != 0.0 {
            beta[j] = new;
            resid.iter_mut().zip(col).for_each(|(r, x)| *r -= delta * x);
        }
        v[j] * delta * delta
    };
    let center = |resid: &mut [f64], b0: &mut f64| -> f64 {
        if w_sum <= 0.0 {
            return 0.0;
        }
        let delta = resid.iter().zip(w).map(|(r, wi)| wi * r).sum::<f64>() / w_sum;
        if delta != 0.0 {
            *b0 += delta;
            resid.iter_mut().for_each(|r| *r -= delta);
        }
        w_sum * delta * delta
    };

    let mut sweeps = 0;
    loop {
        let mut change = 0.0f64;
        for j in 0..cols.len() {
            change = change.max(update(j, beta, resid));
        }
        if let Some(b0) = intercept.as_deref_mut() {
            change = change.max(center(resid, b0));
        }
        sweeps += 1;
        if change < opts.tol {
            return Ok(sweeps);
        }
        loop {
            if sweeps >= opts.max_sweeps {
                return Err(Error::Numeric(format!(
                    "coordinate descent did not converge in {} sweeps",
                    opts.max_sweeps
                )));
            }
            let mut change = 0.0f64;
            for j in 0..cols.len() {
                if beta[j] != 0.0 {
                    change = change.max(update(j, beta, resid));
                }
            }
            if let Some(b0) = intercept.as_deref_mut() {
                change = change.max(center(resid, b0));
            }
            sweeps += 1;
            if change < opts.tol {
                break;
            }
        }
    }
}

/// Column-major standardized design.
struct Standardized {
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    n: usize,
}

impl Standardized {
    fn new(x: &[Vec<f64>]) -> Result<Self> {
        let n = x.len();
        let p = x[0].len();
        let mut means = vec![0.0; p];
        for r in x {
            means.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut scales = vec![0.0; p];
        for r in x {
            scales.iter_mut().zip(r).zip(&means).for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        // constant columns stay zero after centring; a unit scale keeps them inert
        scales.iter_mut().for_each(|s| {
            *s = (*s / n as f64).sqrt();
            if *s <= f64::EPSILON {
                *s = 1.0;
            }
        });
        Self::with_moments(x, means, scales)
    }

    fn with_moments(x: &[Vec<f64>], means: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        let p = means.len();
        if x.iter().any(|r| r.len() != p) {
            return Err(Error::dim(p, x[0].len(), "GLM feature count"));
        }
        let cols = (0..p)
            .map(|j| x.iter().map(|r| (r[j] - means[j]) / scales[j]).collect())
            .collect();
        Ok(Self {
            cols,
            means,
            scales,
            n: x.len(),
        })
    }

    fn p(&self) -> usize {
        self.cols.len()
    }

    /// Linear predictors, row-major `n × K`.
    fn eta(&self, coefs: &Coefs) -> Vec<f64> {
        let k = coefs.b0.len();
        let mut eta = vec![0.0; self.n * k];
        for (c, (b0, beta)) in coefs.b0.iter().zip(&coefs.beta).enumerate() {
            for i in 0..self.n {
                eta[i * k + c] = *b0;
            }
            for (j, &b) in beta.iter().enumerate() {
                if b != 0.0 {
                    for (i, x) in self.cols[j].iter().enumerate() {
                        eta[i * k + c] += b * x;
                    }
                }
            }
        }
        eta
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Coefs {
    b0: Vec<f64>,
    beta: Vec<Vec<f64>>,
}

impl Coefs {
    fn null(y: &[usize], k: usize, p: usize) -> Self {
        let n = y.len() as f64;
        let b0 = (0..k)
            .map(|c| (y.iter().filter(|&&v| v == c).count() as f64 / n).max(1e-5).ln())
            .collect();
        Self {
            b0,
            beta: vec![vec![0.0; p]; k],
        }
    }

    fn l1(&self) -> f64 {
        self.beta.iter().flatten().map(|b| b.abs()).sum()
    }
}

/// Mean negative log-likelihood from row-major linear predictors.
fn mean_nll(eta: &[f64], y: &[usize], k: usize) -> f64 {
    let n = y.len();
    (0..n)
        .map(|i| {
            let row = &eta[i * k..(i + 1) * k];
            log_sum_exp(row) - row[y[i]]
        })
        .sum::<f64>()
        / n as f64
}

fn probabilities(eta: &[f64], k: usize) -> Vec<f64> {
    let mut p = eta.to_vec();
    for row in p.chunks_exact_mut(k) {
        softmax_in_place(row);
    }
    p
}

fn kkt_residual(data: &Standardized, y: &[usize], k: usize, lambda: f64, coefs: &Coefs, eta: &[f64]) -> f64 {
    let n = data.n as f64;
    let p = probabilities(eta, k);
    let mut worst = 0.0f64;
    for c in 0..k {
        let err: Vec<f64> = (0..data.n)
            .map(|i| p[i * k + c] - if y[i] == c { 1.0 } else { 0.0 })
            .collect();
        worst = worst.max((err.iter().sum::<f64>() / n).abs());
        for (j, col) in data.cols.iter().enumerate() {
            let g = col.iter().zip(&err).map(|(x, e)| x * e).sum::<f64>() / n;
            let b = coefs.beta[c][j];
            let v = if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Smallest λ at which every penalized coefficient is zero.
fn lambda_max_std(data: &Standardized, y: &[usize], k: usize) -> f64 {
    let n = data.n as f64;
    let mut best = 0.0f64;
    for c in 0..k {
        let freq = y.iter().filter(|&&v| v == c).count() as f64 / n;
        for col in &data.cols {
            let g = col
                .iter()
                .zip(y)
                .map(|(x, &yi)| x * (freq - if yi == c { 1.0 } else { 0.0 }))
                .sum::<f64>()
                / n;
            best = best.max(g.abs());
        }
    }
    best
}

/// λ_max for `(x, y)` on standardized columns.
pub fn lambda_max(x: &[Vec<f64>], y: &[usize], num_classes: usize) -> Result<f64> {
    check_rows(x, y, num_classes)?;
    let data = Standardized::new(x)?;
    Ok(lambda_max_std(&data, y, num_classes))
}

struct Solver<'a> {
    data: &'a Standardized,
    y: &'a [usize],
    k: usize,
    params: &'a GlmParams,
}

impl Solver<'_> {
    fn objective(&self, eta: &[f64], coefs: &Coefs, lambda: f64) -> f64 {
        let l1 = coefs.l1();
        mean_nll(eta, self.y, self.k) + if l1 == 0.0 { 0.0 } else { lambda * l1 }
    }

    /// Solves at one λ starting from `coefs`/`eta`; returns the final KKT residual.
    fn solve(&self, lambda: f64, coefs: &mut Coefs, eta: &mut [f64]) -> Result<f64> {
        let (n, k) = (self.data.n, self.k);
        let cd = CdOptions {
            tol: 1e-20,
            max_sweeps: self.params.max_sweeps,
        };
        let mut kkt = kkt_residual(self.data, self.y, k, lambda, coefs, eta);
        let mut outer = 0;
        while kkt > self.params.kkt_tol && outer < self.params.max_outer {
            outer += 1;
            for c in 0..k {
                let p = probabilities(eta, k);
                let mut w = vec![0.0; n];
                let mut resid = vec![0.0; n];
                for i in 0..n {
                    let pi = p[i * k + c];
                    let wi = (pi * (1.0 - pi)).max(1e-5);
                    let yi = if self.y[i] == c { 1.0 } else { 0.0 };
                    resid[i] = (yi - pi) / wi;
                    w[i] = wi / n as f64;
                }
                let old_b0 = coefs.b0[c];
                let old_beta = coefs.beta[c].clone();
                let f_old = self.objective(eta, coefs, lambda);
                weighted_lasso_cd(
                    &self.data.cols,
                    &mut resid,
                    &w,
                    lambda,
                    &mut coefs.beta[c],
                    Some(&mut coefs.b0[c]),
                    cd,
                )?;
                let d_b0 = coefs.b0[c] - old_b0;
                let d_beta: Vec<(usize, f64)> = coefs.beta[c]
                    .iter()
                    .zip(&old_beta)
                    .enumerate()
                    .filter(|(_, (a, b))| a != b)
                    .map(|(j, (a, b))| (j, a - b))
                    .collect();
                let mut d_eta = vec![d_b0; n];
                for &(j, d) in &d_beta {
                    d_eta.iter_mut().zip(&self.data.cols[j]).for_each(|(e, x)| *e += d * x);
                }
                // step halving keeps the penalized objective from rising
                let mut t = 1.0;
                loop {
                    let mut trial = eta.to_vec();
                    for i in 0..n {
                        trial[i * k + c] += t * d_eta[i];
                    }
                    let mut trial_coefs = coefs.clone();
                    trial_coefs.b0[c] = old_b0 + t * d_b0;
                    trial_coefs.beta[c] = old_beta.clone();
                    for &(j, d) in &d_beta {
                        trial_coefs.beta[c][j] += t * d;
                    }
                    let f = self.objective(&trial, &trial_coefs, lambda);
                    if f <= f_old + 1e-13 * f_old.abs() || t < 1e-10 {
                        if t < 1e-10 {
                            trial_coefs.b0[c] = old_b0;
                            trial_coefs.beta[c] = old_beta.clone();
                            trial.copy_from_slice(eta);
                        }
                        *coefs = trial_coefs;
                        eta.copy_from_slice(&trial);
                        break;
                    }
                    t *= 0.5;
                }
            }
            kkt = kkt_residual(self.data, self.y, k, lambda, coefs, eta);
        }
        if kkt > self.params.kkt_tol {
            log::warn!("GLM fit at lambda {lambda:.3e} stopped with KKT residual {kkt:.3e}");
        }
        Ok(kkt)
    }

    /// Fits along `lambdas` with warm starts. Stops early once the training
    /// deviance is essentially saturated; the returned vector may be shorter.
    fn path(&self, lambdas: &[f64]) -> Result<Vec<(Coefs, f64)>> {
        let mut coefs = Coefs::null(self.y, self.k, self.data.p());
        let mut eta = self.data.eta(&coefs);
        let null_dev = {
            // intercept-only optimum
            let mut c0 = coefs.clone();
            let mut e0 = eta.clone();
            self.solve(f64::INFINITY, &mut c0, &mut e0)?;
            mean_nll(&e0, self.y, self.k)
        };
        let mut fits = Vec::with_capacity(lambdas.len());
        let mut prev_ratio = 0.0;
        for (l, &lambda) in lambdas.iter().enumerate() {
            let kkt = self.solve(lambda, &mut coefs, &mut eta)?;
            fits.push((coefs.clone(), kkt));
            let ratio = if null_dev > 0.0 { 1.0 - mean_nll(&eta, self.y, self.k) / null_dev } else { 1.0 };
            if l >= 5 && (ratio > 0.999 || ratio - prev_ratio < 1e-5 * ratio) {
                break;
            }
            prev_ratio = ratio;
        }
        Ok(fits)
    }
}

fn lambda_path(lambda_max: f64, n: usize, p: usize, params: &GlmParams) -> Vec<f64> {
    let ratio = params.lambda_ratio.unwrap_or(if n < p { 1e-2 } else { 1e-4 });
    let m = params.num_lambda.max(1);
    if m == 1 {
        return vec![lambda_max];
    }
    (0..m)
        .map(|i| lambda_max * ratio.powf(i as f64 / (m - 1) as f64))
        .collect()
}

fn validate_inputs(x: &[Vec<f64>], y: &[usize], num_classes: usize) -> Result<()> {
    check_rows(x, y, num_classes)?;
    if x.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric("non-finite feature value in GLM input".into()));
    }
    Ok(())
}

fn to_model(data: &Standardized, coefs: &Coefs, k: usize, lambda: f64, lambdas: Vec<f64>, loss_path: Vec<f64>, kkt: f64) -> GlmModel {
    let theta = (0..k)
        .map(|c| {
            let slopes: Vec<f64> = coefs.beta[c].iter().zip(&data.scales).map(|(b, s)| b / s).collect();
            let b0 = coefs.b0[c] - slopes.iter().zip(&data.means).map(|(a, m)| a * m).sum::<f64>();
            std::iter::once(b0).chain(slopes).collect()
        })
        .collect();
    GlmModel {
        num_classes: k,
        num_features: data.p(),
        theta,
        lambda,
        lambdas,
        loss_path,
        means: data.means.clone(),
        scales: data.scales.clone(),
        kkt,
    }
}

/// Fits the lasso GLM at a single λ (warm-started from the null model).
pub fn glm_fit_lambda(x: &[Vec<f64>], y: &[usize], num_classes: usize, lambda: f64, params: &GlmParams) -> Result<GlmModel> {
    validate_inputs(x, y, num_classes)?;
    if !(lambda >= 0.0) {
        return Err(Error::config(format!("lambda must be nonnegative, got {lambda}")));
    }
    let data = Standardized::new(x)?;
    let solver = Solver {
        data: &data,
        y,
        k: num_classes,
        params,
    };
    let mut coefs = Coefs::null(y, num_classes, data.p());
    let mut eta = data.eta(&coefs);
    let kkt = solver.solve(lambda, &mut coefs, &mut eta)?;
    let loss = mean_nll(&eta, y, num_classes);
    Ok(to_model(&data, &coefs, num_classes, lambda, vec![lambda], vec![loss], kkt))
}

/// Fits the path and selects λ by grouped cross-validation on mean validation
/// loss. `groups` ties rows together (segments of one track) so that they
/// never straddle a training/validation split; `None` treats rows independently.
pub fn glmnet_train(
    x: &[Vec<f64>],
    y: &[usize],
    groups: Option<&[usize]>,
    num_classes: usize,
    params: &GlmParams,
) -> Result<GlmModel> {
    validate_inputs(x, y, num_classes)?;
    let present = (0..num_classes).filter(|c| y.contains(c)).count();
    if present < 2 {
        return Err(Error::data("GLM training needs at least two classes"));
    }
    let data = Standardized::new(x)?;
    let lmax = lambda_max_std(&data, y, num_classes);
    let lambdas = lambda_path(lmax, x.len(), data.p(), params);

    let cv_loss = if params.cv_folds >= 2 {
        Some(cv_losses(x, y, groups, num_classes, &lambdas, params)?)
    } else {
        None
    };

    let solver = Solver {
        data: &data,
        y,
        k: num_classes,
        params,
    };
    let target = match &cv_loss {
        Some(loss) => {
            let mut best = 0;
            for (i, &v) in loss.iter().enumerate() {
                if v < loss[best] {
                    best = i;
                }
            }
            best
        }
        None => lambdas.len() - 1,
    };
    let fits = solver.path(&lambdas[..=target])?;
    let last = fits.len() - 1;
    let (coefs, kkt) = &fits[last];
    let loss_path = match cv_loss {
        Some(loss) => loss,
        None => fits
            .iter()
            .map(|(c, _)| mean_nll(&data.eta(c), y, num_classes))
            .collect(),
    };
    Ok(to_model(&data, coefs, num_classes, lambdas[last], lambdas, loss_path, *kkt))
}

/// Assigns groups to folds, stratified by each group's (first) label. With
/// fewer groups than folds, every group becomes its own fold. Returns the
/// fold of every row and the number of folds used.
fn group_folds(y: &[usize], groups: Option<&[usize]>, num_classes: usize, folds: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    let n = y.len();
    let group_of: Vec<usize> = match groups {
        Some(g) if g.len() == n => g.to_vec(),
        Some(g) => return Err(Error::dim(n, g.len(), "GLM groups")),
        None => (0..n).collect(),
    };
    let mut ids: Vec<usize> = group_of.clone();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::data("cross-validation needs at least two groups"));
    }
    if ids.len() < folds {
        log::warn!("only {} groups; using {} cross-validation folds instead of {folds}", ids.len(), ids.len());
    }
    let folds = folds.min(ids.len());
    let mut label_of = std::collections::BTreeMap::new();
    for i in 0..n {
        label_of.entry(group_of[i]).or_insert(y[i]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_group = std::collections::BTreeMap::new();
    let mut next = 0;
    for c in 0..num_classes {
        let mut members: Vec<usize> = ids.iter().copied().filter(|g| label_of[g] == c).collect();
        members.shuffle(&mut rng);
        for g in members {
            fold_of_group.insert(g, next % folds);
            next += 1;
        }
    }
    Ok((group_of.iter().map(|g| fold_of_group[g]).collect(), folds))
}

fn cv_losses(
    x: &[Vec<f64>],
    y: &[usize],
    groups: Option<&[usize]>,
    k: usize,
    lambdas: &[f64],
    params: &GlmParams,
) -> Result<Vec<f64>> {
    let (fold_of, folds) = group_folds(y, groups, k, params.cv_folds, params.seed)?;
    let mut total = vec![0.0; lambdas.len()];
    let mut count = 0usize;
    for f in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| fold_of[i] != f);
        if test.is_empty() || train.is_empty() {
            continue;
        }
        let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let data = Standardized::new(&xt)?;
        let solver = Solver {
            data: &data,
            y: &yt,
            k,
            params,
        };
        let fits = solver.path(lambdas)?;
        let xv: Vec<Vec<f64>> = test.iter().map(|&i| x[i].clone()).collect();
        let yv: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        let val = Standardized::with_moments(&xv, data.means.clone(), data.scales.clone())?;
        for (l, t) in total.iter_mut().enumerate() {
            // past an early stop the last fit stands in for the rest of the path
            let (coefs, _) = &fits[l.min(fits.len() - 1)];
            *t += mean_nll(&val.eta(coefs), &yv, k) * test.len() as f64;
        }
        count += test.len();
    }
    Ok(total.into_iter().map(|t| t / count as f64).collect())
}
