//! Significance scores: GLM coefficients mapped back through PCA onto
//! scattering coefficients, then max-normalized.

use std::io::Write;

use crate::error::{Error, Result};
use crate::features::{FeatureLayout, PcaModel};

pub const DEFAULT_CLAMP: f64 = 0.4;

/// Scores for one layer, stored with axes `(j_m, ..., j_1, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceMap {
    pub genre: String,
    pub layer: usize,
    pub shape: Vec<usize>,
    pub scores: Vec<f64>,
    /// True when every coefficient was zero, so nothing could be normalized.
    pub degenerate: bool,
}

impl SignificanceMap {
    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    /// Score at path `(j_m, ..., j_1)` and time `t`.
    pub fn get(&self, path: &[usize], t: usize) -> f64 {
        let mut idx = 0;
        for (axis, &i) in path.iter().chain(std::iter::once(&t)).enumerate() {
            idx = idx * self.shape[axis] + i;
        }
        self.scores[idx]
    }
}

/// `|componentsᵀ·θ|` restricted to `layer`, reordered so time is the fastest
/// axis and divided by its maximum.
pub fn significance_scores(
    genre: &str,
    theta: &[f64],
    pca: &PcaModel,
    layout: &FeatureLayout,
    layer: usize,
) -> Result<SignificanceMap> {
    if theta.len() != pca.k() {
        return Err(Error::dim(pca.k(), theta.len(), "coefficient vector"));
    }
    if layout.len() != pca.dim() {
        return Err(Error::dim(layout.len(), pca.dim(), "feature layout"));
    }
    let block = layout
        .block(layer)
        .ok_or_else(|| Error::config(format!("layer {layer} is not part of the feature layout")))?;
    if block.shape.len() < 2 {
        return Err(Error::config("significance maps need a layer with at least one path axis"));
    }
    let full = pca.back_project(theta)?;
    let values = &full[block.range()];

    // source axes (t, j_m, ..., j_1) → target axes (j_m, ..., j_1, t)
    let t_len = block.shape[0];
    let paths: usize = block.shape[1..].iter().product();
    let mut shape = block.shape[1..].to_vec();
    shape.push(t_len);
    let mut scores = vec![0.0; values.len()];
    for t in 0..t_len {
        for p in 0..paths {
            scores[p * t_len + t] = values[t * paths + p].abs();
        }
    }
    let max = scores.iter().copied().fold(0.0, f64::max);
    let degenerate = max == 0.0;
    if degenerate {
        log::warn!("significance map for '{genre}' is degenerate: all coefficients are zero");
    } else {
        scores.iter_mut().for_each(|s| *s /= max);
    }
    Ok(SignificanceMap {
        genre: genre.to_string(),
        layer,
        shape,
        scores,
        degenerate,
    })
}

/// Grid laid out as blocks by the outermost path index `j_m`; inside a block,
/// rows run over `j_{m−1}` and columns over the remaining path indices with
/// time innermost. For the third layer a block is 14 rows by 33·7 = 231 columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub genre: String,
    pub column_labels: Vec<String>,
    /// `(block, row, values)`.
    pub rows: Vec<(usize, usize, Vec<f64>)>,
}

impl Heatmap {
    pub fn num_columns(&self) -> usize {
        self.column_labels.len()
    }

    pub fn write_csv<W: Write>(&self, out: W, layer: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = if layer >= 2 {
            vec![format!("j{layer}"), format!("j{}", layer - 1)]
        } else {
            vec!["block".to_string(), format!("j{layer}")]
        };
        header.extend(self.column_labels.iter().cloned());
        w.write_record(&header)?;
        for (block, row, values) in &self.rows {
            let mut rec = vec![block.to_string(), row.to_string()];
            rec.extend(values.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Arranges a map into the block grid with values `max(score, clamp_lo)`.
pub fn export_heatmap(map: &SignificanceMap, clamp_lo: f64) -> Heatmap {
    let rank = map.shape.len();
    // rank ≥ 2: (j_m, t) for layer 1 is handled as one block with rows j_1
    let (blocks, rows_per_block, inner_axes) = if rank >= 3 {
        (map.shape[0], map.shape[1], &map.shape[2..])
    } else {
        (1, map.shape[0], &map.shape[1..])
    };
    let cols: usize = inner_axes.iter().product();
    let column_labels = column_labels(map.layer, inner_axes);
    let mut rows = Vec::with_capacity(blocks * rows_per_block);
    for b in 0..blocks {
        for r in 0..rows_per_block {
            let start = (b * rows_per_block + r) * cols;
            let values = map.scores[start..start + cols].iter().map(|&s| s.max(clamp_lo)).collect();
            rows.push((b, r, values));
        }
    }
    Heatmap {
        genre: map.genre.clone(),
        column_labels,
        rows,
    }
}

fn column_labels(layer: usize, inner: &[usize]) -> Vec<String> {
    let names: Vec<String> = (0..inner.len())
        .map(|a| {
            if a + 1 == inner.len() {
                "t".to_string()
            } else {
                format!("j{}", layer.saturating_sub(2 + a))
            }
        })
        .collect();
    let total: usize = inner.iter().product();
    (0..total)
        .map(|mut c| {
            let mut idx = vec![0; inner.len()];
            for a in (0..inner.len()).rev() {
                idx[a] = c % inner[a];
                c /= inner[a];
            }
            names
                .iter()
                .zip(&idx)
                .map(|(n, i)| format!("{n}={i}"))
                .collect::<Vec<_>>()
                .join(":")
        })
        .collect()
}

/// File name used for a genre's grid.
pub fn heatmap_file_name(genre: &str) -> String {
    format!("significance_{genre}.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::experiment_layers;
    use crate::scattering::ScatteringConfig;

    /// PCA model whose components are unit vectors on the given feature indices.
    fn axis_model(d: usize, axes: &[usize]) -> PcaModel {
        let mut comps = vec![0.0; axes.len() * d];
        for (i, &a) in axes.iter().enumerate() {
            comps[i * d + a] = 1.0;
        }
        PcaModel::from_parts(vec![0.0; d], comps, vec![1.0; axes.len()]).unwrap()
    }

    fn small_layout() -> FeatureLayout {
        // 2048 samples: shapes (64), (8,33), (1,14,33), (1,10,14,33)
        FeatureLayout::new(&ScatteringConfig::default(), 2048, &experiment_layers(3, true)).unwrap()
    }

    #[test]
    fn zero_theta_is_degenerate() {
        let layout = small_layout();
        let pca = axis_model(layout.len(), &[0, 1]);
        let map = significance_scores("rock", &[0.0, 0.0], &pca, &layout, 3).unwrap();
        assert!(map.degenerate);
        assert!(map.scores.iter().all(|&s| s == 0.0));
        let grid = export_heatmap(&map, DEFAULT_CLAMP);
        assert!(grid.rows.iter().all(|(_, _, v)| v.iter().all(|&x| x == 0.4)));
    }

    #[test]
    fn single_component_maps_to_its_entries() {
        let layout = small_layout();
        let b3 = layout.block(3).unwrap().clone();
        // path (j3, j2, j1) = (2, 5, 7) at t = 0
        let flat = b3.offset + (2 * 14 + 5) * 33 + 7;
        let pca = axis_model(layout.len(), &[flat, 0]);
        let map = significance_scores("jazz", &[-3.0, 0.0], &pca, &layout, 3).unwrap();
        assert_eq!(map.shape, vec![10, 14, 33, 1]);
        assert_eq!(map.get(&[2, 5, 7], 0), 1.0);
        assert_eq!(map.scores.iter().filter(|&&s| s > 0.0).count(), 1);
        let grid = export_heatmap(&map, DEFAULT_CLAMP);
        let ones: Vec<_> = grid
            .rows
            .iter()
            .flat_map(|(b, r, v)| v.iter().enumerate().filter(|(_, &x)| x == 1.0).map(move |(c, _)| (*b, *r, c)))
            .collect();
        assert_eq!(ones, vec![(2, 5, 7)]);
    }

    #[test]
    fn full_size_blocks_have_231_columns() {
        let layout = FeatureLayout::new(&ScatteringConfig::default(), 110_250, &experiment_layers(3, true)).unwrap();
        let b3 = layout.block(3).unwrap().clone();
        let pca = axis_model(layout.len(), &[b3.offset + 5, b3.offset + 4620 * 3 + 17]);
        let map = significance_scores("pop", &[1.0, -2.0], &pca, &layout, 3).unwrap();
        assert_eq!(map.max(), 1.0);
        let grid = export_heatmap(&map, DEFAULT_CLAMP);
        assert_eq!(grid.num_columns(), 231);
        assert_eq!(grid.rows.len(), 140);
        assert!(grid.rows.iter().all(|(_, _, v)| v.len() == 231 && v.iter().all(|&x| x >= 0.4)));
        assert_eq!(grid.column_labels[0], "j1=0:t=0");
        assert_eq!(grid.column_labels[8], "j1=1:t=1");
        let mut buf = Vec::new();
        grid.write_csv(&mut buf, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("j3,j2,j1=0:t=0,"));
        assert_eq!(text.lines().count(), 141);
    }

    #[test]
    fn mismatches_are_errors() {
        let layout = small_layout();
        let pca = axis_model(layout.len(), &[0]);
        assert!(significance_scores("x", &[1.0, 2.0], &pca, &layout, 3).is_err());
        let wrong = axis_model(layout.len() + 1, &[0]);
        assert!(significance_scores("x", &[1.0], &wrong, &layout, 3).is_err());
        let only0 = FeatureLayout::new(&ScatteringConfig::default(), 2048, &experiment_layers(0, true)).unwrap();
        let pca0 = axis_model(only0.len(), &[0]);
        assert!(significance_scores("x", &[1.0], &pca0, &only0, 3).is_err());
        assert_eq!(heatmap_file_name("blues"), "significance_blues.csv");
    }
}
