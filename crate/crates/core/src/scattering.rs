//! Scattering transform network.
//!
//! Layer `m` maps every path signal `U[j_{m-1},...,j_1] f` through
//!
//! ```text
//! U_m[j] g = subsample(|g ∗ ψ_j|, r_m)
//! S_m[path] = subsample(φ_m ∗ U[path] f, r'_m)
//! ```
//!
//! Convolutions are circular and computed in the frequency domain. Every path
//! through the scale tree is kept unless pruning is switched on, in which case
//! skipped paths are reported as zeros so output shapes never change.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{BankSpec, Family, FilterBank, GmwParams, DEFAULT_FINE_PEAK};
use crate::spectral::{fft_complex, fft_real, filter_spectrum};

/// Per-layer wavelet settings: `Q_m`, `J_m` and the post-modulus subsampling `r_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub quality: f64,
    pub j_max: usize,
    pub subsample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contraction {
    Modulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    pub family: Family,
    pub params: GmwParams,
    pub fine_peak: f64,
    pub layers: Vec<LayerConfig>,
    /// `r'_0 ..= r'_M`, one averaging rate per output layer.
    pub averaging_rates: Vec<usize>,
    pub contraction: Contraction,
    pub prune: bool,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        let layer = |quality, j_max| LayerConfig {
            quality,
            j_max,
            subsample: 8,
        };
        Self {
            family: Family::Gmw,
            params: GmwParams::default(),
            fine_peak: DEFAULT_FINE_PEAK,
            layers: vec![layer(8.0, 32), layer(4.0, 13), layer(4.0, 9)],
            averaging_rates: vec![32; 4],
            contraction: Contraction::Modulus,
            prune: false,
        }
    }
}

impl ScatteringConfig {
    /// Default configuration for a given wavelet family.
    pub fn with_family(family: Family) -> Self {
        Self {
            family,
            ..Self::default()
        }
    }

    /// Keeps only the first `num_layers` layers.
    pub fn truncated(mut self, num_layers: usize) -> Result<Self> {
        if num_layers == 0 || num_layers > self.layers.len() {
            return Err(Error::config(format!(
                "cannot truncate {}-layer config to {num_layers} layers",
                self.layers.len()
            )));
        }
        self.layers.truncate(num_layers);
        self.averaging_rates.truncate(num_layers + 1);
        Ok(self)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.layers.len()) {
            return Err(Error::config(format!(
                "scattering supports 1 to 3 layers, got {}",
                self.layers.len()
            )));
        }
        if self.averaging_rates.len() != self.layers.len() + 1 {
            return Err(Error::config(format!(
                "need {} averaging rates, got {}",
                self.layers.len() + 1,
                self.averaging_rates.len()
            )));
        }
        if self.layers.iter().any(|l| l.subsample == 0) || self.averaging_rates.contains(&0) {
            return Err(Error::config("subsampling rates must be >= 1"));
        }
        for m in 0..self.layers.len() {
            self.bank_spec(m).validate()?;
        }
        Ok(())
    }

    /// Bank parameters for layer `m` (0-based, so `m = 0` is the first layer).
    pub fn bank_spec(&self, m: usize) -> BankSpec {
        let l = self.layers[m];
        BankSpec {
            family: self.family,
            params: self.params,
            quality: l.quality,
            j_max: l.j_max,
            fine_peak: self.fine_peak,
        }
    }

    /// Lengths of the signals entering each layer, then the final `U_M` length:
    /// `[N, ceil(N/r_1), ceil(N/(r_1 r_2)) ...]` by repeated ceiling division.
    pub fn signal_lengths(&self, input_len: usize) -> Vec<usize> {
        let mut lens = vec![input_len];
        for l in &self.layers {
            lens.push(subsampled_len(*lens.last().unwrap(), l.subsample));
        }
        lens
    }

    /// Output shapes `[(T_0), (T_1, J_1+1), (T_2, J_2+1, J_1+1), ...]`.
    pub fn output_shapes(&self, input_len: usize) -> Vec<Vec<usize>> {
        let lens = self.signal_lengths(input_len);
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(vec![subsampled_len(input_len, self.averaging_rates[0])]);
        let mut scale_dims: Vec<usize> = Vec::new();
        for (m, l) in self.layers.iter().enumerate() {
            scale_dims.insert(0, l.j_max + 1);
            let mut shape = vec![subsampled_len(lens[m + 1], self.averaging_rates[m + 1])];
            shape.extend(&scale_dims);
            shapes.push(shape);
        }
        shapes
    }

    /// Number of scale paths at layer `m` (1-based), `∏_{i<=m} (J_i + 1)`.
    pub fn path_count(&self, m: usize) -> usize {
        self.layers[..m].iter().map(|l| l.j_max + 1).product()
    }

    /// Stable content hash, used to key on-disk caches.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(expected, data.len(), "tensor data"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.shape.len());
        let flat = index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i);
        self.data[flat]
    }
}

/// All scattering coefficients of one signal.
///
/// `layers[m - 1]` has axes `(time, j_m, j_{m-1}, ..., j_1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringOutput {
    pub layer0: Vec<f64>,
    pub layers: Vec<Tensor>,
    pub config: ScatteringConfig,
    pub input_len: usize,
}

impl ScatteringOutput {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Coefficients of output layer `m` (0 = `S_0`).
    pub fn layer_data(&self, m: usize) -> &[f64] {
        if m == 0 {
            &self.layer0
        } else {
            self.layers[m - 1].data()
        }
    }

    pub fn layer_shape(&self, m: usize) -> Vec<usize> {
        if m == 0 {
            vec![self.layer0.len()]
        } else {
            self.layers[m - 1].shape().to_vec()
        }
    }

    /// Flattened CSV export: one row per coefficient, `m,j_m..j_1,t,value`
    /// with unused scale columns left empty.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let depth = self.num_layers();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["m".to_string()];
        header.extend((1..=depth).rev().map(|i| format!("j{i}")));
        header.extend(["t".to_string(), "value".to_string()]);
        w.write_record(&header)?;
        for m in 0..=depth {
            let shape = self.layer_shape(m);
            let data = self.layer_data(m);
            let mut index = vec![0usize; shape.len()];
            for &v in data {
                let mut rec = vec![m.to_string()];
                // index = (t, j_m, ..., j_1); scale columns are j_depth..j_1
                for level in (1..=depth).rev() {
                    if level <= m {
                        rec.push(index[1 + (m - level)].to_string());
                    } else {
                        rec.push(String::new());
                    }
                }
                rec.push(index[0].to_string());
                // S_0 averages the raw signal and may legitimately be negative
                let v = if m == 0 { v } else { v.max(0.0) };
                rec.push(v.to_string());
                w.write_record(&rec)?;
                increment(&mut index, &shape);
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn increment(index: &mut [usize], shape: &[usize]) {
    for axis in (0..index.len()).rev() {
        index[axis] += 1;
        if index[axis] < shape[axis] {
            return;
        }
        index[axis] = 0;
    }
}

#[inline]
fn subsampled_len(len: usize, r: usize) -> usize {
    len.div_ceil(r)
}

/// `ifft(fft(signal) ⊙ filter_row)`: circular convolution with the filter's
/// impulse response, complex-valued because the filter is one-sided.
pub fn analytic_conv(signal: &[f64], filter_row: &[f64]) -> Result<Vec<Complex64>> {
    if signal.len() != filter_row.len() {
        return Err(Error::dim(filter_row.len(), signal.len(), "signal vs filter length"));
    }
    Ok(filter_spectrum(&fft_real(signal), filter_row))
}

/// Complex-input variant of [`analytic_conv`].
pub fn analytic_conv_complex(signal: &[Complex64], filter_row: &[f64]) -> Result<Vec<Complex64>> {
    if signal.len() != filter_row.len() {
        return Err(Error::dim(filter_row.len(), signal.len(), "signal vs filter length"));
    }
    Ok(filter_spectrum(&fft_complex(signal), filter_row))
}

/// Pointwise modulus.
pub fn contraction(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|c| c.norm()).collect()
}

/// Keeps samples `0, r, 2r, ...`; output length is `ceil(len / r)`.
pub fn subsample<T: Copy>(x: &[T], r: usize) -> Result<Vec<T>> {
    if r == 0 {
        return Err(Error::config("subsampling rate must be >= 1"));
    }
    Ok(x.iter().step_by(r).copied().collect())
}

/// `U_m`: one subsampled modulus signal per filter row of `bank`.
pub fn layer_u(input: &[f64], bank: &FilterBank, r: usize) -> Result<Vec<Vec<f64>>> {
    if input.len() != bank.signal_len() {
        return Err(Error::dim(bank.signal_len(), input.len(), "layer input vs bank"));
    }
    if r == 0 {
        return Err(Error::config("subsampling rate must be >= 1"));
    }
    let spectrum = fft_real(input);
    Ok(bank
        .filters()
        .iter()
        .map(|row| modulus_subsampled(&spectrum, row, r))
        .collect())
}

/// `S_m`: lowpass smoothing then subsampling by `r_prime`. Real part only;
/// the lowpass is even so the imaginary part is rounding noise.
pub fn layer_s(u: &[f64], lowpass: &[f64], r_prime: usize) -> Result<Vec<f64>> {
    if u.len() != lowpass.len() {
        return Err(Error::dim(lowpass.len(), u.len(), "signal vs lowpass length"));
    }
    if r_prime == 0 {
        return Err(Error::config("averaging rate must be >= 1"));
    }
    Ok(averaged(&fft_real(u), lowpass, r_prime))
}

fn modulus_subsampled(spectrum: &[Complex64], row: &[f64], r: usize) -> Vec<f64> {
    filter_spectrum(spectrum, row)
        .iter()
        .step_by(r)
        .map(|c| c.norm())
        .collect()
}

fn averaged(spectrum: &[Complex64], lowpass: &[f64], r_prime: usize) -> Vec<f64> {
    filter_spectrum(spectrum, lowpass)
        .iter()
        .step_by(r_prime)
        .map(|c| c.re)
        .collect()
}

/// Pre-built banks for one configuration and input length; reusable across
/// segments and safe to share between threads.
#[derive(Debug, Clone)]
pub struct Scatterer {
    config: ScatteringConfig,
    input_len: usize,
    banks: Vec<FilterBank>,
    /// `φ_m` sampled on the grid of the signals it smooths, `m = 0..=M`.
    lowpasses: Vec<Vec<f64>>,
}

impl Scatterer {
    pub fn new(config: &ScatteringConfig, input_len: usize) -> Result<Self> {
        config.validate()?;
        if input_len == 0 {
            return Err(Error::data("cannot scatter an empty signal"));
        }
        let lens = config.signal_lengths(input_len);
        let mut banks = Vec::with_capacity(config.num_layers());
        for (m, &len) in lens.iter().take(config.num_layers()).enumerate() {
            if len < 2 {
                return Err(Error::config(format!(
                    "layer {} input has only {len} samples",
                    m + 1
                )));
            }
            banks.push(config.bank_spec(m).build(len)?);
        }
        let mut lowpasses = vec![banks[0].lowpass().to_vec()];
        for m in 0..config.num_layers() {
            lowpasses.push(config.bank_spec(m).lowpass(lens[m + 1]));
        }
        Ok(Self {
            config: config.clone(),
            input_len,
            banks,
            lowpasses,
        })
    }

    pub fn config(&self) -> &ScatteringConfig {
        &self.config
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn banks(&self) -> &[FilterBank] {
        &self.banks
    }

    /// Whether the layer-`m` filter `j` (1-based `m >= 2`) should be applied
    /// below a parent filter `parent_j` of layer `m - 1` under pruning:
    /// only if it is lower in absolute frequency.
    fn keeps(&self, m: usize, j: usize, parent_j: usize) -> bool {
        let decim = |upto: usize| -> f64 {
            self.config.layers[..upto]
                .iter()
                .map(|l| l.subsample as f64)
                .product()
        };
        let child = self.config.bank_spec(m - 1).center_frequency(j) / decim(m - 1);
        let parent = self.config.bank_spec(m - 2).center_frequency(parent_j) / decim(m - 2);
        child < parent
    }

    pub fn scatter(&self, signal: &[f64]) -> Result<ScatteringOutput> {
        if signal.is_empty() {
            return Err(Error::data("cannot scatter an empty signal"));
        }
        if signal.len() != self.input_len {
            return Err(Error::dim(self.input_len, signal.len(), "scatter input"));
        }
        let cfg = &self.config;
        let shapes = cfg.output_shapes(self.input_len);

        let input_spec = fft_real(signal);
        let layer0 = averaged(&input_spec, &self.lowpasses[0], cfg.averaging_rates[0]);

        // Spectra of the current layer's path signals; `None` marks pruned paths.
        let mut parents: Vec<Option<Vec<Complex64>>> = vec![Some(input_spec)];
        // last-layer scale index of each parent path, for pruning decisions
        let mut parent_scale: Vec<usize> = vec![0];
        let mut layers = Vec::with_capacity(cfg.num_layers());

        for m in 1..=cfg.num_layers() {
            let bank = &self.banks[m - 1];
            let r = cfg.layers[m - 1].subsample;
            let r_avg = cfg.averaging_rates[m];
            let lowpass = &self.lowpasses[m];
            let n_parents = parents.len();
            let n_scales = bank.num_scales();

            // path index = j_m * n_parents + parent
            let children: Vec<Option<Vec<Complex64>>> = (0..n_scales * n_parents)
                .into_par_iter()
                .map(|p| {
                    let (j, parent) = (p / n_parents, p % n_parents);
                    let spectrum = parents[parent].as_ref()?;
                    if cfg.prune && m >= 2 && !self.keeps(m, j, parent_scale[parent]) {
                        return None;
                    }
                    let u = modulus_subsampled(spectrum, bank.filter(j), r);
                    Some(fft_real(&u))
                })
                .collect();

            let t_len = shapes[m][0];
            let n_paths = children.len();
            let mut data = vec![0.0; t_len * n_paths];
            let columns: Vec<Option<Vec<f64>>> = children
                .par_iter()
                .map(|c| c.as_ref().map(|spec| averaged(spec, lowpass, r_avg)))
                .collect();
            for (p, column) in columns.iter().enumerate() {
                if let Some(s) = column {
                    for (t, &v) in s.iter().enumerate() {
                        // modulus input is nonnegative; clamp lowpass ringing
                        data[t * n_paths + p] = v.max(0.0);
                    }
                }
            }
            layers.push(Tensor::new(shapes[m].clone(), data)?);

            parent_scale = (0..n_scales * n_parents).map(|p| p / n_parents).collect();
            parents = children;
        }

        Ok(ScatteringOutput {
            layer0,
            layers,
            config: cfg.clone(),
            input_len: self.input_len,
        })
    }
}

/// One-shot scattering; builds the banks for `signal.len()` first.
pub fn scatter(signal: &[f64], cfg: &ScatteringConfig) -> Result<ScatteringOutput> {
    if signal.is_empty() {
        return Err(Error::data("cannot scatter an empty signal"));
    }
    Scatterer::new(cfg, signal.len())?.scatter(signal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_reference_setup() {
        let c = ScatteringConfig::default();
        assert_eq!(c.num_layers(), 3);
        let q: Vec<f64> = c.layers.iter().map(|l| l.quality).collect();
        let j: Vec<usize> = c.layers.iter().map(|l| l.j_max).collect();
        assert_eq!(q, vec![8.0, 4.0, 4.0]);
        assert_eq!(j, vec![32, 13, 9]);
        assert!(c.layers.iter().all(|l| l.subsample == 8));
        assert_eq!(c.averaging_rates, vec![32; 4]);
        assert_eq!(c.params, GmwParams::new(4.0, 2.0).unwrap());
    }

    #[test]
    fn shape_law() {
        let c = ScatteringConfig::default();
        assert_eq!(c.signal_lengths(110_250), vec![110_250, 13_782, 1_723, 216]);
        assert_eq!(
            c.output_shapes(110_250),
            vec![
                vec![3446],
                vec![431, 33],
                vec![54, 14, 33],
                vec![7, 10, 14, 33]
            ]
        );
        assert_eq!((c.path_count(1), c.path_count(2), c.path_count(3)), (33, 462, 4620));
    }

    #[test]
    fn subsample_rules() {
        let x: Vec<usize> = (0..10).collect();
        assert_eq!(subsample(&x, 3).unwrap(), vec![0, 3, 6, 9]);
        assert_eq!(subsample(&x, 1).unwrap(), x);
        assert!(subsample(&x, 0).is_err());
        assert_eq!(subsample(&vec![0u8; 110_250], 8).unwrap().len(), 13_782);
    }

    #[test]
    fn modulus_examples() {
        assert_eq!(contraction(&[Complex64::new(3.0, 4.0)]), vec![5.0]);
        assert_eq!(contraction(&[Complex64::new(0.0, 0.0)]), vec![0.0]);
    }

    #[test]
    fn conv_length_mismatch() {
        assert!(analytic_conv(&[1.0; 8], &[1.0; 9]).is_err());
        assert!(layer_s(&[1.0; 8], &[1.0; 9], 2).is_err());
    }

    #[test]
    fn impulse_returns_impulse_response() {
        let n = 32;
        let row: Vec<f64> = (0..n).map(|k| if k < 10 { k as f64 } else { 0.0 }).collect();
        let mut delta = vec![0.0; n];
        delta[0] = 1.0;
        let out = analytic_conv(&delta, &row).unwrap();
        let spec: Vec<Complex64> = row.iter().map(|&g| Complex64::new(g, 0.0)).collect();
        let mut h = spec.clone();
        crate::spectral::ifft_in_place(&mut h);
        for (a, b) in out.iter().zip(&h) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn lowpass_passes_constants() {
        let spec = BankSpec::new(Family::Gmw, GmwParams::default(), 4.0, 9);
        let lp = spec.lowpass(300);
        let s = layer_s(&[0.7; 300], &lp, 32).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert!(layer_s(&[0.0; 300], &lp, 32).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_signal_scatters_to_zero() {
        let cfg = ScatteringConfig::default();
        let out = scatter(&vec![0.0; 4096], &cfg).unwrap();
        assert!(out.layer0.iter().all(|&v| v == 0.0));
        assert!(out.layers.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn empty_and_bad_configs() {
        assert!(scatter(&[], &ScatteringConfig::default()).is_err());
        let mut c = ScatteringConfig::default();
        c.averaging_rates.pop();
        assert!(c.validate().is_err());
        let mut c = ScatteringConfig::default();
        c.layers[1].subsample = 0;
        assert!(c.validate().is_err());
        assert!(ScatteringConfig::default().truncated(0).is_err());
        assert_eq!(ScatteringConfig::default().truncated(2).unwrap().averaging_rates.len(), 3);
    }

    #[test]
    fn tensor_indexing() {
        let t = Tensor::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.get(&[1, 2]), 5.0);
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn pruning_keeps_shapes_and_zeroes_paths() {
        let mut cfg = ScatteringConfig::default();
        cfg.prune = true;
        let x: Vec<f64> = (0..8192).map(|i| ((i * i) as f64 * 1e-3).sin()).collect();
        let pruned = scatter(&x, &cfg).unwrap();
        cfg.prune = false;
        let full = scatter(&x, &cfg).unwrap();
        for (a, b) in pruned.layers.iter().zip(&full.layers) {
            assert_eq!(a.shape(), b.shape());
        }
        assert_eq!(pruned.layers[0], full.layers[0]);
        let zeros = |t: &Tensor| t.data().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros(&pruned.layers[1]) > zeros(&full.layers[1]));
    }
}
