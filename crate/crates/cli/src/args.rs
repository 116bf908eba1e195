use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stn_core::audio::DecodeOptions;
use stn_core::classify::ClassifierKind;
use stn_core::filters::{Family, GmwParams, DEFAULT_FINE_PEAK};
use stn_core::pipeline::ExperimentConfig;
use stn_core::scattering::ScatteringConfig;
use stn_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "stn", version, about = "Scattering transform networks with generalized Morse wavelets")]
pub struct Cli {
    /// Directory for cached feature matrices.
    #[arg(long, global = true, env = "GMWSTN_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the per-layer filter banks and write them as binary and CSV files.
    Filters(FiltersArgs),
    /// Scatter the 15 segments of one audio file.
    Scatter(ScatterArgs),
    /// Cross-validate classifiers on a corpus and write a results table.
    TrainEval(TrainEvalArgs),
    /// Fit PCA and a classifier on a whole corpus and save the model.
    Train(TrainArgs),
    /// Write per-genre significance grids for a trained GLM model.
    Significance(SignificanceArgs),
    /// List a corpus as CSV (id, genre, samples, rate).
    Manifest(ManifestArgs),
    /// Write a synthetic two-genre corpus (classical, metal).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Gmw,
    Morlet,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gmw => Family::Gmw,
            FamilyArg::Morlet => Family::Morlet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    Svm,
    Glmnet,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::Svm => ClassifierKind::Svm,
            ClassifierArg::Glmnet => ClassifierKind::Glmnet,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScatterOpts {
    /// Wavelet family.
    #[arg(long, value_enum, default_value = "gmw")]
    pub family: FamilyArg,
    /// GMW time-decay exponent.
    #[arg(long, default_value_t = 4.0)]
    pub beta: f64,
    /// GMW frequency-decay exponent.
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Number of scattering layers (1 to 3).
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    /// Quality factors per layer, comma separated.
    #[arg(long = "q", value_delimiter = ',')]
    pub quality: Option<Vec<f64>>,
    /// Largest scale index J per layer, comma separated.
    #[arg(long = "j", value_delimiter = ',')]
    pub j_max: Option<Vec<usize>>,
    /// Subsampling rate after each modulus, comma separated.
    #[arg(long = "r", value_delimiter = ',')]
    pub subsample: Option<Vec<usize>>,
    /// Averaging subsampling rates r'_0..r'_M, comma separated.
    #[arg(long = "r-avg", value_delimiter = ',')]
    pub averaging: Option<Vec<usize>>,
    /// Peak of the finest filter in radians per sample.
    #[arg(long, default_value_t = DEFAULT_FINE_PEAK)]
    pub fine_peak: f64,
    /// Skip paths whose frequency does not decrease (reported as zeros).
    #[arg(long)]
    pub prune: bool,
}

fn per_layer<T: Copy>(name: &str, values: &Option<Vec<T>>, expected: usize, mut set: impl FnMut(usize, T)) -> Result<()> {
    if let Some(v) = values {
        if v.len() != expected {
            return Err(Error::Config(format!("--{name} needs {expected} values, got {}", v.len())));
        }
        v.iter().enumerate().for_each(|(i, &x)| set(i, x));
    }
    Ok(())
}

impl ScatterOpts {
    pub fn config(&self) -> Result<ScatteringConfig> {
        let mut cfg = ScatteringConfig {
            family: self.family.into(),
            params: GmwParams::new(self.beta, self.gamma)?,
            fine_peak: self.fine_peak,
            prune: self.prune,
            ..ScatteringConfig::default()
        }
        .truncated(self.layers)?;
        let m = cfg.num_layers();
        per_layer("q", &self.quality, m, |i, q| cfg.layers[i].quality = q)?;
        per_layer("j", &self.j_max, m, |i, j| cfg.layers[i].j_max = j)?;
        per_layer("r", &self.subsample, m, |i, r| cfg.layers[i].subsample = r)?;
        per_layer("r-avg", &self.averaging, m + 1, |i, r| cfg.averaging_rates[i] = r)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecodeOpts {
    /// Decimate audio whose rate is an integer multiple of 22050 Hz.
    #[arg(long)]
    pub resample: bool,
    /// Reject multichannel audio instead of averaging the channels.
    #[arg(long)]
    pub no_downmix: bool,
}

impl DecodeOpts {
    pub fn options(&self) -> DecodeOptions {
        DecodeOptions {
            resample: self.resample,
            downmix: !self.no_downmix,
            ..DecodeOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentOpts {
    /// Principal components kept (clamped to the training size).
    #[arg(long, default_value_t = 1000)]
    pub pca_k: usize,
    /// SVM box constraint.
    #[arg(long = "svm-c", default_value_t = 1.0)]
    pub svm_c: f64,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// Cross-validation repeats.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standardize feature columns on the training rows before PCA.
    #[arg(long)]
    pub zscore: bool,
    /// Use only layer m for "layer m" instead of layers 0..=m.
    #[arg(long)]
    pub per_layer: bool,
}

impl ExperimentOpts {
    pub fn config(&self, classifier: ClassifierKind) -> Result<ExperimentConfig> {
        if self.pca_k == 0 {
            return Err(Error::Config("--pca-k must be positive".into()));
        }
        let mut exp = ExperimentConfig {
            pca_k: self.pca_k,
            classifier,
            folds: self.folds,
            repeats: self.repeats,
            seed: self.seed,
            cumulative: !self.per_layer,
            zscore: self.zscore,
            ..ExperimentConfig::default()
        };
        exp.svm.c = self.svm_c;
        exp.svm.validate()?;
        Ok(exp)
    }
}

#[derive(Debug, Args)]
pub struct FiltersArgs {
    #[command(flatten)]
    pub scattering: ScatterOpts,
    /// Length of the signal entering the first layer.
    #[arg(long, default_value_t = stn_core::audio::SEGMENT_LEN)]
    pub signal_len: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    /// Audio file (.wav or .au) of at least 624750 samples.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub scattering: ScatterOpts,
    #[command(flatten)]
    pub decode: DecodeOpts,
    /// Also write a CSV per segment.
    #[arg(long)]
    pub csv: bool,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainEvalArgs {
    /// Corpus root with one directory per genre.
    #[arg(long)]
    pub data_root: PathBuf,
    #[command(flatten)]
    pub scattering: ScatterOpts,
    #[command(flatten)]
    pub experiment: ExperimentOpts,
    #[command(flatten)]
    pub decode: DecodeOpts,
    /// Run one classifier with --family instead of the three default columns.
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    /// Layers to evaluate, comma separated (default: 1 to --layers).
    #[arg(long, value_delimiter = ',')]
    pub eval_layers: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data_root: PathBuf,
    #[command(flatten)]
    pub scattering: ScatterOpts,
    #[command(flatten)]
    pub experiment: ExperimentOpts,
    #[command(flatten)]
    pub decode: DecodeOpts,
    #[arg(long, value_enum, default_value = "glmnet")]
    pub classifier: ClassifierArg,
    /// Layer whose features the model uses (default: --layers).
    #[arg(long)]
    pub layer: Option<usize>,
    /// Directory receiving model.json and pca.pcam.
    #[arg(long, default_value = "out/model")]
    pub model_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SignificanceArgs {
    /// Directory written by `stn train` with a GLM classifier.
    #[arg(long, default_value = "out/model")]
    pub model_dir: PathBuf,
    /// Lower clamp applied to exported grids.
    #[arg(long, default_value_t = stn_core::significance::DEFAULT_CLAMP)]
    pub clamp: f64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    #[arg(long)]
    pub data_root: PathBuf,
    #[command(flatten)]
    pub decode: DecodeOpts,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub tracks_per_genre: usize,
    /// Track length in seconds (at least 28.34 for full segmentation).
    #[arg(long, default_value_t = 30.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}
