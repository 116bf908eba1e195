//! Feature vectors from scattering outputs, and PCA compression.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scattering::{ScatteringConfig, ScatteringOutput};

/// One scattering layer's slot inside a flattened feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutBlock {
    pub layer: usize,
    /// `(time)` for layer 0, `(time, j_m, ..., j_1)` otherwise.
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl LayoutBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Where a feature came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturePosition {
    pub layer: usize,
    /// `(j_m, ..., j_1)`; empty for layer 0.
    pub path: Vec<usize>,
    pub t: usize,
}

/// Maps positions of a flattened vector back to `(layer, path, time)`.
/// Layers appear in increasing order, each in its tensor's row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub blocks: Vec<LayoutBlock>,
}

impl FeatureLayout {
    /// Layout for `layers` of the output `config` produces on `input_len` samples.
    pub fn new(config: &ScatteringConfig, input_len: usize, layers: &BTreeSet<usize>) -> Result<Self> {
        let shapes = config.output_shapes(input_len);
        Self::from_shapes(&shapes, layers)
    }

    fn from_shapes(shapes: &[Vec<usize>], layers: &BTreeSet<usize>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("at least one layer must be selected"));
        }
        let mut blocks = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for &m in layers {
            let shape = shapes.get(m).ok_or_else(|| {
                Error::config(format!(
                    "layer {m} requested but the network has {} layers",
                    shapes.len() - 1
                ))
            })?;
            let block = LayoutBlock {
                layer: m,
                shape: shape.clone(),
                offset,
            };
            offset += block.len();
            blocks.push(block);
        }
        Ok(Self { blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, layer: usize) -> Option<&LayoutBlock> {
        self.blocks.iter().find(|b| b.layer == layer)
    }

    pub fn position(&self, index: usize) -> Option<FeaturePosition> {
        let block = self.blocks.iter().find(|b| b.range().contains(&index))?;
        let mut rem = index - block.offset;
        let mut idx = vec![0; block.shape.len()];
        for axis in (0..block.shape.len()).rev() {
            idx[axis] = rem % block.shape[axis];
            rem /= block.shape[axis];
        }
        Some(FeaturePosition {
            layer: block.layer,
            t: idx[0],
            path: idx[1..].to_vec(),
        })
    }
}

/// Layers used by a "layer `m`" experiment: `{0..=m}` when cumulative, `{m}` otherwise.
pub fn experiment_layers(m: usize, cumulative: bool) -> BTreeSet<usize> {
    if cumulative {
        (0..=m).collect()
    } else {
        BTreeSet::from([m])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

/// Concatenates the requested output layers in increasing layer order.
pub fn flatten(out: &ScatteringOutput, layers: &BTreeSet<usize>) -> Result<FeatureVector> {
    let shapes: Vec<Vec<usize>> = (0..=out.num_layers()).map(|m| out.layer_shape(m)).collect();
    let layout = FeatureLayout::from_shapes(&shapes, layers)?;
    let mut values = Vec::with_capacity(layout.len());
    for &m in layers {
        values.extend_from_slice(out.layer_data(m));
    }
    Ok(FeatureVector { values, layout })
}

/// Principal components of a data matrix.
///
/// Components are stored row-major (`k × d`) and are orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    components: Vec<f64>,
    singular_values: Vec<f64>,
}

/// Above this size the Gram/covariance eigenproblem is replaced by a
/// randomized range finder (when fewer than `min(n, d)` components are asked for).
pub const EXACT_PCA_LIMIT: usize = 2500;
const POWER_ITERATIONS: usize = 2;
const OVERSAMPLING: usize = 16;
/// Directions whose singular value is below this fraction of the largest are
/// filled by orthonormal completion rather than normalized.
const RELATIVE_RANK_TOL: f64 = 1e-7;

impl PcaModel {
    pub(crate) fn from_parts(mean: Vec<f64>, components: Vec<f64>, singular_values: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        let k = singular_values.len();
        if components.len() != k * d {
            return Err(Error::dim(k * d, components.len(), "PCA components"));
        }
        Ok(Self {
            mean,
            components,
            singular_values,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.components[i * d..(i + 1) * d]
    }

    pub fn components_flat(&self) -> &[f64] {
        &self.components
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len(), "PCA projection input"));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..self.k()).map(|i| dot(self.component(i), &centered)).collect())
    }

    /// Projects many rows at once through one matrix product.
    pub fn project_rows(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let (d, k, n) = (self.dim(), self.k(), rows.len());
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::dim(d, r.len(), "PCA projection input"));
        }
        let mut centered = Vec::with_capacity(n * d);
        for r in rows {
            centered.extend(r.iter().zip(&self.mean).map(|(a, m)| a - m));
        }
        let mut z = vec![0.0; n * k];
        // (n × d) · (d × k), components read transposed
        gemm(n, d, k, &centered, (d, 1), &self.components, (1, d), &mut z, (k, 1));
        Ok(z.chunks_exact(k.max(1)).map(|c| c.to_vec()).take(n).collect())
    }

    /// `mean + componentsᵀ · z`.
    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.k() {
            return Err(Error::dim(self.k(), z.len(), "PCA inversion input"));
        }
        let mut x = self.mean.clone();
        for (i, &zi) in z.iter().enumerate() {
            if zi != 0.0 {
                for (xv, cv) in x.iter_mut().zip(self.component(i)) {
                    *xv += zi * cv;
                }
            }
        }
        Ok(x)
    }

    /// `componentsᵀ · z` without the mean (maps coefficient directions back).
    pub fn back_project(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.invert(z)?;
        for (xv, m) in x.iter_mut().zip(&self.mean) {
            *xv -= m;
        }
        Ok(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `C (m×n) = A (m×k) · B (k×n)` with arbitrary (row, column) strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Eigenpairs of a symmetric matrix, sorted by decreasing eigenvalue.
/// Returns (values, vectors as rows).
fn sorted_eigen(sym: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors)
}

/// Flips `v` so its largest-magnitude entry is positive.
fn canonical_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Gram–Schmidt (applied twice) of `v` against `basis`; returns the residual norm.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    dot(v, v).sqrt()
}

/// Extends orthonormal `basis` with unit vectors until it has `k` rows.
fn complete_basis(basis: &mut Vec<Vec<f64>>, k: usize, d: usize) {
    let mut axis = 0;
    while basis.len() < k && axis < d {
        let mut e = vec![0.0; d];
        e[axis] = 1.0;
        axis += 1;
        let norm = orthogonalize(&mut e, basis);
        if norm > 0.5 {
            e.iter_mut().for_each(|x| *x /= norm);
            basis.push(e);
        }
    }
}

/// Fits PCA to an `n × d` matrix (rows are observations).
pub fn fit_pca(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    fit_pca_rows(&refs, k, 0)
}

/// Fits PCA to observation rows. `seed` only matters for the randomized solver.
pub fn fit_pca_rows(rows: &[&[f64]], k: usize, seed: u64) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::data(format!("PCA needs at least 2 observations, got {n}")));
    }
    let d = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::dim(d, r.len(), "PCA row length"));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::config(format!(
            "PCA component count {k} must be in 1..={}",
            n.min(d)
        )));
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric("non-finite value in PCA input".into()));
    }

    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r.iter()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut xc = Vec::with_capacity(n * d);
    for r in rows {
        xc.extend(r.iter().zip(&mean).map(|(v, m)| v - m));
    }

    let (singular, mut basis) = if n.min(d) > EXACT_PCA_LIMIT && k < n.min(d) {
        randomized_components(&xc, n, d, k, seed)
    } else if d <= n {
        covariance_components(&xc, n, d, k)
    } else {
        gram_components(&xc, n, d, k)
    };
    complete_basis(&mut basis, k, d);
    for v in basis.iter_mut() {
        canonical_sign(v);
    }
    let components = basis.into_iter().flatten().collect();
    PcaModel::from_parts(mean, components, singular)
}

fn covariance_components(xc: &[f64], n: usize, d: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut cov = vec![0.0; d * d];
    gemm(d, n, d, xc, (1, d), xc, (d, 1), &mut cov, (d, 1));
    let (values, vectors) = sorted_eigen(DMatrix::from_row_slice(d, d, &cov));
    let singular = values.iter().take(k).map(|v| v.max(0.0).sqrt()).collect();
    (singular, vectors.into_iter().take(k).collect())
}

fn gram_components(xc: &[f64], n: usize, d: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut gram = vec![0.0; n * n];
    gemm(n, d, n, xc, (d, 1), xc, (1, d), &mut gram, (n, 1));
    let (values, vectors) = sorted_eigen(DMatrix::from_row_slice(n, n, &gram));
    let singular: Vec<f64> = values.iter().take(k).map(|v| v.max(0.0).sqrt()).collect();
    (singular.clone(), right_vectors(xc, n, d, &singular, &vectors))
}

/// `v_i = Xcᵀ u_i / σ_i` for the well-conditioned directions.
fn right_vectors(xc: &[f64], n: usize, d: usize, singular: &[f64], left: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let top = singular.first().copied().unwrap_or(0.0);
    let usable = singular
        .iter()
        .take_while(|&&s| s > 0.0 && s > top * RELATIVE_RANK_TOL)
        .count();
    if usable == 0 {
        return Vec::new();
    }
    let mut w = Vec::with_capacity(usable * n);
    for i in 0..usable {
        w.extend(left[i].iter().map(|u| u / singular[i]));
    }
    let mut v = vec![0.0; usable * d];
    gemm(usable, n, d, &w, (n, 1), xc, (d, 1), &mut v, (d, 1));
    v.chunks_exact(d).map(|c| c.to_vec()).collect()
}

/// Randomized range finder with power iterations, seeded for determinism.
fn randomized_components(xc: &[f64], n: usize, d: usize, k: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let l = (k + OVERSAMPLING).min(n.min(d));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega: Vec<f64> = (0..d * l).map(|_| StandardNormal.sample(&mut rng)).collect();
    // Y = Xc Ω  (n × l)
    let mut y = vec![0.0; n * l];
    gemm(n, d, l, xc, (d, 1), &omega, (l, 1), &mut y, (l, 1));
    let mut q = orthonormal_columns(&y, n, l);
    for _ in 0..POWER_ITERATIONS {
        let mut z = vec![0.0; d * l];
        gemm(d, n, l, xc, (1, d), &q, (l, 1), &mut z, (l, 1));
        let zq = orthonormal_columns(&z, d, l);
        gemm(n, d, l, xc, (d, 1), &zq, (l, 1), &mut y, (l, 1));
        q = orthonormal_columns(&y, n, l);
    }
    // B = Qᵀ Xc  (l × d); its right singular vectors approximate those of Xc
    let mut b = vec![0.0; l * d];
    gemm(l, n, d, &q, (1, l), xc, (d, 1), &mut b, (d, 1));
    let mut bbt = vec![0.0; l * l];
    gemm(l, d, l, &b, (d, 1), &b, (1, d), &mut bbt, (l, 1));
    let (values, vectors) = sorted_eigen(DMatrix::from_row_slice(l, l, &bbt));
    let singular: Vec<f64> = values.iter().take(k).map(|v| v.max(0.0).sqrt()).collect();
    (singular.clone(), right_vectors(&b, l, d, &singular, &vectors))
}

/// Thin QR's Q factor of a row-major `rows × cols` matrix, row-major.
fn orthonormal_columns(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let qr = DMatrix::from_row_slice(rows, cols, a).qr();
    let q = qr.q();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        out.extend(q.row(r).iter());
    }
    out
}
