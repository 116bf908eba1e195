//! One-vs-one support vector machines with a degree-1 polynomial kernel.
//!
//! Each binary problem is solved in the dual by SMO with second-order
//! working-set selection, so the solution matches the usual LIBSVM behaviour
//! for `K(x, x') = γ·xᵀx' + c₀`. Because the kernel is linear the model keeps
//! only the primal weight vector.

use serde::{Deserialize, Serialize};

use super::{check_rows, Prediction};
use crate::error::{Error, Result};
use crate::features::gemm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint on every dual variable.
    pub c: f64,
    /// Kernel scale; `None` means `1 / num_features`.
    pub gamma: Option<f64>,
    pub coef0: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            coef0: 0.0,
            tol: 1e-4,
            max_iter: 10_000_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::config(format!("SVM C must be positive, got {}", self.c)));
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::config(format!("SVM gamma must be positive, got {g}")));
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::config("SVM tolerance must be positive"));
        }
        Ok(())
    }
}

/// Binary decision function `w·x − ρ`; positive favours `positive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub positive: usize,
    pub negative: usize,
    pub w: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub support_vectors: usize,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub num_classes: usize,
    pub num_features: usize,
    pub params: SvmParams,
    pub machines: Vec<BinarySvm>,
}

impl SvmModel {
    /// Pairwise votes, with ties broken by the summed signed margins and then
    /// by the lowest class index. `scores` holds the summed margins.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.num_features {
            return Err(Error::dim(self.num_features, x.len(), "SVM input"));
        }
        let mut votes = vec![0usize; self.num_classes];
        let mut margins = vec![0.0; self.num_classes];
        for m in &self.machines {
            let d = m.decision(x);
            margins[m.positive] += d;
            margins[m.negative] -= d;
            if d > 0.0 {
                votes[m.positive] += 1;
            } else {
                votes[m.negative] += 1;
            }
        }
        let mut best = 0;
        for c in 1..self.num_classes {
            if votes[c] > votes[best] || (votes[c] == votes[best] && margins[c] > margins[best]) {
                best = c;
            }
        }
        Ok(Prediction {
            label: best,
            scores: margins,
        })
    }

    pub fn predict_labels(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        x.iter().map(|r| self.predict(r).map(|p| p.label)).collect()
    }
}

/// Trains one binary machine per class pair present in `y`.
pub fn svm_train(x: &[Vec<f64>], y: &[usize], num_classes: usize, params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    let d = check_rows(x, y, num_classes)?;
    let present: Vec<usize> = (0..num_classes).filter(|c| y.contains(c)).collect();
    if present.len() < 2 {
        return Err(Error::data("SVM training needs at least two classes"));
    }
    let gamma = params.gamma.unwrap_or(1.0 / d as f64);
    let mut machines = Vec::new();
    for (ai, &a) in present.iter().enumerate() {
        for &b in &present[ai + 1..] {
            let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == a || y[i] == b).collect();
            let rows: Vec<&[f64]> = idx.iter().map(|&i| x[i].as_slice()).collect();
            let signs: Vec<f64> = idx.iter().map(|&i| if y[i] == a { 1.0 } else { -1.0 }).collect();
            let kernel = gram(&rows, gamma, params.coef0);
            let sol = smo(&kernel, &signs, params.c, params.tol, params.max_iter)?;
            let mut w = vec![0.0; d];
            for (k, row) in rows.iter().enumerate() {
                let coef = sol.alpha[k] * signs[k];
                if coef != 0.0 {
                    w.iter_mut().zip(row.iter()).for_each(|(wv, xv)| *wv += coef * xv);
                }
            }
            w.iter_mut().for_each(|v| *v *= gamma);
            machines.push(BinarySvm {
                positive: a,
                negative: b,
                w,
                rho: sol.rho,
                iterations: sol.iterations,
                support_vectors: sol.alpha.iter().filter(|&&v| v > 0.0).count(),
            });
        }
    }
    Ok(SvmModel {
        num_classes,
        num_features: d,
        params: params.clone(),
        machines,
    })
}

/// Dense kernel matrix, row-major.
fn gram(rows: &[&[f64]], gamma: f64, coef0: f64) -> Vec<f64> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let mut k = vec![0.0; n * n];
    gemm(n, d, n, &flat, (d, 1), &flat, (1, d), &mut k, (n, 1));
    k.iter_mut().for_each(|v| *v = gamma * *v + coef0);
    k
}

struct DualSolution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

const TAU: f64 = 1e-12;

/// Solves `min ½αᵀQα − eᵀα` s.t. `yᵀα = 0`, `0 ≤ α ≤ c`, with `Q_ij = y_i y_j K_ij`.
fn smo(kernel: &[f64], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<DualSolution> {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                g_min = g_min.min(v);
                let b = g_max - v;
                if b > 0.0 {
                    let mut a = kernel[i * n + i] + kernel[t * n + t] - 2.0 * kernel[i * n + t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -b * b / a;
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if g_max - g_min >= tol => (i, j),
            _ => break,
        };
        if iterations >= max_iter {
            return Err(Error::Numeric(format!(
                "SMO did not reach tolerance {tol} within {max_iter} iterations"
            )));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(DualSolution { alpha, rho, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        // centres 4 apart, spread small enough that a margin of 2 survives
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.25).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let cx = if label == 0 { -2.0 } else { 2.0 };
            let mut p: Vec<f64> = vec![cx + noise.sample(&mut rng), noise.sample(&mut rng) * 3.0];
            p[0] = if label == 0 { p[0].min(-1.0) } else { p[0].max(1.0) };
            x.push(p);
            y.push(label);
        }
        (x, y)
    }

    fn accuracy(model: &SvmModel, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let pred = model.predict_labels(x).unwrap();
        pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let (x, y) = blobs(80, 1);
        let model = svm_train(&x, &y, 2, &SvmParams::default()).unwrap();
        assert_eq!(accuracy(&model, &x, &y), 1.0);
    }

    /// Best training accuracy of any affine classifier on the four XOR points is
    /// 3/4; enumerating sign patterns shows {++,--} vs {+-,-+} is never separable.
    #[test]
    fn xor_is_not_linearly_separable() {
        let x = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
        let y = vec![0, 0, 1, 1];
        let mut best = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20_000 {
            let (a, b, c): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.5..1.5));
            let acc = x
                .iter()
                .zip(&y)
                .filter(|(p, &l)| ((a * p[0] + b * p[1] + c > 0.0) as usize) == l)
                .count() as f64
                / 4.0;
            best = best.max(acc);
        }
        assert_eq!(best, 0.75);
        let model = svm_train(&x, &y, 2, &SvmParams::default()).unwrap();
        let acc = accuracy(&model, &x, &y);
        assert!((0.5..=0.75).contains(&acc), "{acc}");
    }

    #[test]
    fn duplicating_points_keeps_the_hard_margin_solution() {
        let (x, y) = blobs(40, 3);
        let params = SvmParams { c: 100.0, tol: 1e-8, ..SvmParams::default() };
        let single = svm_train(&x, &y, 2, &params).unwrap();
        let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
        let double = svm_train(&x2, &y2, 2, &params).unwrap();
        let (a, b) = (&single.machines[0], &double.machines[0]);
        for (u, v) in a.w.iter().zip(&b.w) {
            assert!((u - v).abs() < 1e-5, "{u} vs {v}");
        }
        assert!((a.rho - b.rho).abs() < 1e-5);
    }

    #[test]
    fn scaling_features_with_rescaled_c_keeps_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..90).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<usize> = x.iter().map(|r| if r[0] + 0.5 * r[1] > 0.3 { 0 } else if r[2] > 0.0 { 1 } else { 2 }).collect();
        let params = SvmParams { tol: 1e-8, ..SvmParams::default() };
        let base = svm_train(&x, &y, 3, &params).unwrap();
        for scale in [0.1, 3.0, 25.0] {
            let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
            let ps = SvmParams { c: params.c / (scale * scale), ..params.clone() };
            let scaled = svm_train(&xs, &y, 3, &ps).unwrap();
            assert_eq!(base.predict_labels(&x).unwrap(), scaled.predict_labels(&xs).unwrap());
        }
    }

    #[test]
    fn dual_solution_satisfies_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let s: Vec<f64> = x.iter().map(|r| if r[0] - r[1] + 0.2 * r[2] > 0.0 { 1.0 } else { -1.0 }).collect();
        let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let k = gram(&rows, 1.0, 0.0);
        let c = 2.0;
        let sol = smo(&k, &s, c, 1e-6, 1_000_000).unwrap();
        let sum: f64 = sol.alpha.iter().zip(&s).map(|(a, y)| a * y).sum();
        assert!(sum.abs() < 1e-9);
        for i in 0..60 {
            let f: f64 = (0..60).map(|j| sol.alpha[j] * s[j] * k[i * 60 + j]).sum::<f64>() - sol.rho;
            let m = s[i] * f;
            if sol.alpha[i] <= 0.0 {
                assert!(m >= 1.0 - 1e-5, "{m}");
            } else if sol.alpha[i] >= c {
                assert!(m <= 1.0 + 1e-5, "{m}");
            } else {
                assert!((m - 1.0).abs() < 1e-5, "{m}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(svm_train(&x, &[1, 1], 2, &SvmParams::default()).is_err());
        assert!(svm_train(&x, &[0, 1], 2, &SvmParams { c: 0.0, ..SvmParams::default() }).is_err());
        assert!(svm_train(&x, &[0], 2, &SvmParams::default()).is_err());
        let model = svm_train(&x, &[0, 1], 2, &SvmParams::default()).unwrap();
        assert!(model.predict(&[1.0]).is_err());
    }
}
