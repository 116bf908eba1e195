//! End-to-end genre classification: segment → scatter → PCA → classifier →
//! majority vote, with on-disk feature caching.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{segment_track, Dataset, DecodeOptions, SEGMENTS_PER_TRACK, SEGMENT_LEN};
use crate::classify::{
    cross_validate, glmnet_train, svm_train, AccuracyReport, ClassifierKind, GlmParams, Model,
    ResultsTable, SvmParams,
};
use crate::container::{read_matrix, read_pca, write_matrix, write_pca};
use crate::error::{Error, Result};
use crate::features::{experiment_layers, fit_pca_rows, FeatureLayout, PcaModel};
use crate::filters::Family;
use crate::scattering::{ScatteringConfig, Scatterer};
use crate::significance::{export_heatmap, heatmap_file_name, significance_scores, SignificanceMap};

/// Bumped whenever the cached feature layout changes meaning.
const CACHE_FORMAT: &str = "features-v1";

/// Flattened scattering features for every segment of every track,
/// row-major with `SEGMENTS_PER_TRACK` consecutive rows per track.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub segments_per_track: usize,
    /// Layout of a full row (all layers).
    pub layout: FeatureLayout,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn num_tracks(&self) -> usize {
        self.rows / self.segments_per_track
    }

    pub fn track_rows(&self, track: usize) -> Range<usize> {
        track * self.segments_per_track..(track + 1) * self.segments_per_track
    }
}

/// Cache key over the scattering configuration and the corpus contents.
pub fn feature_cache_key(cfg: &ScatteringConfig, dataset: &Dataset, decode: &DecodeOptions) -> Result<String> {
    let mut h = Sha256::new();
    h.update(CACHE_FORMAT.as_bytes());
    h.update(cfg.hash_hex().as_bytes());
    h.update(dataset.content_hash()?.as_bytes());
    h.update(serde_json::to_vec(decode)?);
    Ok(h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect())
}

fn full_layout(cfg: &ScatteringConfig) -> Result<FeatureLayout> {
    FeatureLayout::new(cfg, SEGMENT_LEN, &(0..=cfg.num_layers()).collect())
}

/// Scatters every segment of every track, reusing a cached matrix when one
/// exists for the same configuration and corpus.
pub fn extract_features(
    dataset: &Dataset,
    cfg: &ScatteringConfig,
    decode: &DecodeOptions,
    cache_dir: Option<&Path>,
) -> Result<FeatureMatrix> {
    if dataset.is_empty() {
        return Err(Error::data(format!("no tracks found under {}", dataset.root.display())));
    }
    let layout = full_layout(cfg)?;
    let cols = layout.len();
    let rows = dataset.len() * SEGMENTS_PER_TRACK;
    let cache_path = match cache_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(dir.join(format!("features_{}_{}.feat", cfg.family.name(), feature_cache_key(cfg, dataset, decode)?)))
        }
        None => None,
    };
    if let Some(path) = cache_path.as_ref().filter(|p| p.exists()) {
        log::info!("loading cached features from {}", path.display());
        let (r, c, data) = read_matrix(BufReader::new(File::open(path)?))?;
        if r == rows && c == cols {
            return Ok(FeatureMatrix {
                rows,
                cols,
                data,
                segments_per_track: SEGMENTS_PER_TRACK,
                layout,
            });
        }
        log::warn!("ignoring cache {} with shape {r}×{c}, expected {rows}×{cols}", path.display());
    }

    let scatterer = Scatterer::new(cfg, SEGMENT_LEN)?;
    let mut data = vec![0.0; rows * cols];
    let done = std::sync::atomic::AtomicUsize::new(0);
    data.par_chunks_mut(SEGMENTS_PER_TRACK * cols)
        .zip(dataset.tracks.par_iter())
        .try_for_each(|(chunk, track)| -> Result<()> {
            let audio = track.load(&dataset.genres, decode)?;
            for (seg, out) in segment_track(&audio)?.iter().zip(chunk.chunks_mut(cols)) {
                let s = scatterer.scatter(&seg.samples)?;
                let mut offset = 0;
                for m in 0..=s.num_layers() {
                    let block = s.layer_data(m);
                    out[offset..offset + block.len()].copy_from_slice(block);
                    offset += block.len();
                }
            }
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            log::info!("scattered {} ({n}/{})", track.id, dataset.len());
            Ok(())
        })?;

    if let Some(path) = cache_path {
        let tmp = path.with_extension("part");
        write_matrix(BufWriter::new(File::create(&tmp)?), rows, cols, &data)?;
        std::fs::rename(&tmp, &path)?;
        log::info!("cached features at {}", path.display());
    }
    Ok(FeatureMatrix {
        rows,
        cols,
        data,
        segments_per_track: SEGMENTS_PER_TRACK,
        layout,
    })
}

/// Columns used by a "layer `m`" experiment.
pub fn feature_columns(layout: &FeatureLayout, layer: usize, cumulative: bool) -> Result<Range<usize>> {
    let block = layout
        .block(layer)
        .ok_or_else(|| Error::config(format!("layer {layer} is not available")))?;
    Ok(if cumulative { 0..block.offset + block.len() } else { block.range() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pca_k: usize,
    pub classifier: ClassifierKind,
    pub svm: SvmParams,
    pub glm: GlmParams,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Layer `m` uses layers `0..=m` when true, only layer `m` otherwise.
    pub cumulative: bool,
    /// Standardize columns (on training rows) before PCA.
    pub zscore: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pca_k: 1000,
            classifier: ClassifierKind::Svm,
            svm: SvmParams::default(),
            glm: GlmParams::default(),
            folds: 3,
            repeats: 10,
            seed: 0,
            cumulative: true,
            zscore: false,
        }
    }
}

/// Column standardization fit on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl ZScore {
    fn fit(rows: &[&[f64]]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for r in rows {
            means.iter_mut().zip(r.iter()).for_each(|(m, v)| *m += v / n);
        }
        let mut scales = vec![0.0; d];
        for r in rows {
            scales.iter_mut().zip(r.iter()).zip(&means).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        scales.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        Self { means, scales }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// PCA plus classifier, with everything needed to score new segments.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub meta: ModelMeta,
    pub pca: PcaModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub class_names: Vec<String>,
    pub layer: usize,
    pub cumulative: bool,
    pub scattering: ScatteringConfig,
    pub zscore: Option<ZScore>,
    pub model: Model,
}

const MODEL_FILE: &str = "model.json";
const PCA_FILE: &str = "pca.pcam";

impl TrainedModel {
    pub fn columns(&self) -> Result<Range<usize>> {
        feature_columns(&full_layout(&self.meta.scattering)?, self.meta.layer, self.meta.cumulative)
    }

    /// Layout of the columns this model consumes.
    pub fn layout(&self) -> Result<FeatureLayout> {
        let layers = experiment_layers(self.meta.layer, self.meta.cumulative);
        FeatureLayout::new(&self.meta.scattering, SEGMENT_LEN, &layers)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        serde_json::to_writer(BufWriter::new(File::create(dir.join(MODEL_FILE))?), &self.meta)?;
        write_pca(BufWriter::new(File::create(dir.join(PCA_FILE))?), &self.pca)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let model_path = dir.join(MODEL_FILE);
        if !model_path.exists() {
            return Err(Error::data(format!("no trained model at {}", model_path.display())));
        }
        let meta: ModelMeta = serde_json::from_reader(BufReader::new(File::open(model_path)?))?;
        let pca = read_pca(BufReader::new(File::open(dir.join(PCA_FILE))?))?;
        Ok(Self { meta, pca })
    }
}

struct Fitted {
    zscore: Option<ZScore>,
    pca: PcaModel,
    model: Model,
}

fn fit_rows(
    features: &FeatureMatrix,
    tracks: &[usize],
    labels: &[usize],
    num_classes: usize,
    columns: &Range<usize>,
    exp: &ExperimentConfig,
    seed: u64,
) -> Result<Fitted> {
    let row_ids: Vec<usize> = tracks.iter().flat_map(|&t| features.track_rows(t)).collect();
    let raw: Vec<&[f64]> = row_ids.iter().map(|&r| &features.row(r)[columns.clone()]).collect();
    let zscore = exp.zscore.then(|| ZScore::fit(&raw));
    let owned: Vec<Vec<f64>>;
    let rows: Vec<&[f64]> = match &zscore {
        Some(z) => {
            owned = raw.iter().map(|r| z.apply(r)).collect();
            owned.iter().map(Vec::as_slice).collect()
        }
        None => raw,
    };
    let k = exp.pca_k.min(rows.len()).min(columns.len());
    if k < exp.pca_k {
        log::warn!("using {k} principal components instead of {} (limited by data size)", exp.pca_k);
    }
    let pca = fit_pca_rows(&rows, k, seed)?;
    let z = pca.project_rows(&rows)?;
    let y: Vec<usize> = row_ids.iter().map(|&r| labels[r / features.segments_per_track]).collect();
    let model = match exp.classifier {
        ClassifierKind::Svm => Model::Svm(svm_train(&z, &y, num_classes, &exp.svm)?),
        ClassifierKind::Glmnet => {
            let groups: Vec<usize> = row_ids.iter().map(|&r| r / features.segments_per_track).collect();
            let params = GlmParams { seed, ..exp.glm.clone() };
            Model::Glm(glmnet_train(&z, &y, Some(&groups), num_classes, &params)?)
        }
    };
    Ok(Fitted { zscore, pca, model })
}

fn predict_tracks(features: &FeatureMatrix, tracks: &[usize], columns: &Range<usize>, fitted: &Fitted) -> Result<Vec<usize>> {
    tracks
        .iter()
        .map(|&t| {
            let rows: Vec<Vec<f64>> = features
                .track_rows(t)
                .map(|r| {
                    let x = &features.row(r)[columns.clone()];
                    fitted.zscore.as_ref().map_or_else(|| x.to_vec(), |z| z.apply(x))
                })
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let z = fitted.pca.project_rows(&refs)?;
            let preds = z.iter().map(|r| fitted.model.predict(r)).collect::<Result<Vec<_>>>()?;
            crate::classify::vote::vote_with_count(&preds, features.segments_per_track)
        })
        .collect()
}

/// Repeated stratified cross-validation of one (layer, classifier) setting.
pub fn evaluate(
    features: &FeatureMatrix,
    labels: &[usize],
    class_names: &[String],
    layer: usize,
    exp: &ExperimentConfig,
) -> Result<AccuracyReport> {
    if labels.len() != features.num_tracks() {
        return Err(Error::dim(features.num_tracks(), labels.len(), "track labels"));
    }
    let columns = feature_columns(&features.layout, layer, exp.cumulative)?;
    cross_validate(labels, class_names, exp.folds, exp.repeats, exp.seed, |split| {
        let fitted = fit_rows(features, &split.train, labels, class_names.len(), &columns, exp, split.seed)?;
        predict_tracks(features, &split.test, &columns, &fitted)
    })
}

/// Fits PCA and the classifier on every track (used for significance maps).
pub fn train_full(
    features: &FeatureMatrix,
    labels: &[usize],
    class_names: &[String],
    scattering: &ScatteringConfig,
    layer: usize,
    exp: &ExperimentConfig,
) -> Result<TrainedModel> {
    let columns = feature_columns(&features.layout, layer, exp.cumulative)?;
    let tracks: Vec<usize> = (0..features.num_tracks()).collect();
    let fitted = fit_rows(features, &tracks, labels, class_names.len(), &columns, exp, exp.seed)?;
    Ok(TrainedModel {
        meta: ModelMeta {
            class_names: class_names.to_vec(),
            layer,
            cumulative: exp.cumulative,
            scattering: scattering.clone(),
            zscore: fitted.zscore,
            model: fitted.model,
        },
        pca: fitted.pca,
    })
}

/// Per-genre significance maps for the model's deepest layer.
pub fn significance_maps(model: &TrainedModel) -> Result<Vec<SignificanceMap>> {
    let glm = match &model.meta.model {
        Model::Glm(g) => g,
        Model::Svm(_) => return Err(Error::config("significance scores need a GLM model")),
    };
    let layout = model.layout()?;
    model
        .meta
        .class_names
        .iter()
        .enumerate()
        .map(|(c, name)| significance_scores(name, glm.coefficients(c), &model.pca, &layout, model.meta.layer))
        .collect()
}

/// Writes one `significance_<genre>.csv` per map and returns the paths.
pub fn write_significance(maps: &[SignificanceMap], out_dir: &Path, clamp_lo: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    maps.iter()
        .map(|m| {
            let path = out_dir.join(heatmap_file_name(&m.genre));
            export_heatmap(m, clamp_lo).write_csv(BufWriter::new(File::create(&path)?), m.layer)?;
            Ok(path)
        })
        .collect()
}

/// One column of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub family: Family,
    pub classifier: ClassifierKind,
}

/// GMW-GLMNet, GMW-SVM and Morlet-SVM.
pub fn default_experiments() -> Vec<Experiment> {
    vec![
        Experiment { name: "GMW-GLMNet".into(), family: Family::Gmw, classifier: ClassifierKind::Glmnet },
        Experiment { name: "GMW-SVM".into(), family: Family::Gmw, classifier: ClassifierKind::Svm },
        Experiment { name: "Morlet-SVM".into(), family: Family::Morlet, classifier: ClassifierKind::Svm },
    ]
}

pub fn layer_label(layer: usize) -> String {
    format!("Layer {layer}")
}

#[derive(Debug, Clone)]
pub struct TableRun<'a> {
    pub dataset: &'a Dataset,
    pub scattering: &'a ScatteringConfig,
    pub experiments: &'a [Experiment],
    pub layers: &'a [usize],
    pub exp: &'a ExperimentConfig,
    pub decode: &'a DecodeOptions,
    pub cache_dir: Option<&'a Path>,
    /// Reports are written here when set.
    pub out_dir: Option<&'a Path>,
}

/// Runs every experiment at every layer. Features are extracted once per
/// wavelet family and released before the next family is processed.
pub fn run_table(run: &TableRun<'_>) -> Result<(ResultsTable, Vec<(String, usize, AccuracyReport)>)> {
    let labels = run.dataset.labels();
    let mut table = ResultsTable::new(run.experiments.iter().map(|e| e.name.clone()).collect());
    let mut reports = Vec::new();
    let mut by_family: BTreeMap<u8, Vec<&Experiment>> = BTreeMap::new();
    for e in run.experiments {
        by_family.entry(e.family.code()).or_default().push(e);
    }
    for (code, experiments) in by_family {
        let cfg = ScatteringConfig {
            family: Family::from_code(code)?,
            ..run.scattering.clone()
        };
        let features = extract_features(run.dataset, &cfg, run.decode, run.cache_dir)?;
        for e in experiments {
            for &layer in run.layers {
                let exp = ExperimentConfig { classifier: e.classifier, ..run.exp.clone() };
                log::info!("evaluating {} at layer {layer}", e.name);
                let report = evaluate(&features, &labels, &run.dataset.genres, layer, &exp)?;
                log::info!("{} layer {layer}: {:.4}%", e.name, 100.0 * report.mean);
                table.set(&layer_label(layer), &e.name, report.mean);
                if let Some(dir) = run.out_dir {
                    write_report(dir, &e.name, layer, &report)?;
                }
                reports.push((e.name.clone(), layer, report));
            }
        }
    }
    table.rows.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(dir) = run.out_dir {
        std::fs::create_dir_all(dir)?;
        table.write_csv(File::create(dir.join("accuracy_table.csv"))?)?;
        std::fs::write(dir.join("accuracy_table.txt"), table.render())?;
    }
    Ok((table, reports))
}

pub fn write_report(dir: &Path, name: &str, layer: usize, report: &AccuracyReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{}_layer{layer}", name.to_ascii_lowercase());
    report.write_runs_csv(File::create(dir.join(format!("{stem}_runs.csv")))?)?;
    report.write_confusion_csv(File::create(dir.join(format!("{stem}_confusion.csv")))?)?;
    report.write_per_class_csv(File::create(dir.join(format!("{stem}_per_class.csv")))?)?;
    std::fs::write(dir.join(format!("{stem}_summary.txt")), report.summary())?;
    Ok(())
}
