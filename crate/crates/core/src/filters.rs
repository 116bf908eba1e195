//! Frequency-domain wavelet filter banks.
//!
//! Generalized Morse wavelets (GMWs) are defined directly by their spectrum
//!
//! ```text
//! Ψ_{β,γ}(ω) = H(ω) · α_{β,γ} · ω^β · exp(-ω^γ)
//! ```
//!
//! so sampling that spectrum on the DFT grid gives filters that are exactly
//! zero on every non-positive frequency bin. The Morlet bank is kept as a
//! comparator; its Gaussian spectrum leaks (very slightly) into negative
//! frequencies.
//!
//! Both families use the peak-value-2 normalization: a real sinusoid at a
//! filter's peak frequency comes out of the analytic filter with unit modulus.
//!
//! Bank layout: row `j = 0..=J` uses the dilation exponent `λ = (j - J) / Q`,
//! so `j = 0` is the coarsest (lowest-frequency) filter and `j = J` the finest.
//! The finest filter peaks at `fine_peak` rad/sample (default `0.875π`).

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{dft_frequency, fft_real, filter_spectrum};

/// Peak location (rad/sample) of the finest filter in every bank unless overridden.
pub const DEFAULT_FINE_PEAK: f64 = 0.875 * PI;

/// Peak value of every filter row.
pub const PEAK_GAIN: f64 = 2.0;

/// The two GMW shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmwParams {
    beta: f64,
    gamma: f64,
}

impl GmwParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::config(format!("GMW beta must be > 0, got {beta}")));
        }
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::config(format!("GMW gamma must be > 1, got {gamma}")));
        }
        Ok(Self { beta, gamma })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for GmwParams {
    fn default() -> Self {
        Self {
            beta: 4.0,
            gamma: 2.0,
        }
    }
}

/// `(β/γ)^{1/γ}`, where the GMW spectrum has zero derivative.
pub fn peak_frequency(params: &GmwParams) -> f64 {
    (params.beta / params.gamma).powf(1.0 / params.gamma)
}

/// `α_{β,γ} = 2 (eγ/β)^{β/γ}`, which puts the spectrum's peak value at 2.
pub fn normalization_constant(params: &GmwParams) -> f64 {
    PEAK_GAIN * (std::f64::consts::E * params.gamma / params.beta).powf(params.beta / params.gamma)
}

/// GMW spectrum at angular frequency `omega`. Exactly zero for `omega <= 0`.
pub fn gmw_spectrum(params: &GmwParams, omega: f64) -> f64 {
    if !(omega > 0.0) {
        return 0.0;
    }
    // log-domain evaluation keeps ω^β · e^{-ω^γ} finite for large ω
    let log_val = normalization_constant(params).ln() + params.beta * omega.ln()
        - omega.powf(params.gamma);
    log_val.exp()
}

/// Zero-mean Morlet spectrum `exp(-(ω-ω0)²/2) - κ exp(-ω²/2)`, `κ = exp(-ω0²/2)`.
pub fn morlet_spectrum(center: f64, omega: f64) -> f64 {
    let kappa = (-0.5 * center * center).exp();
    (-0.5 * (omega - center).powi(2)).exp() - kappa * (-0.5 * omega * omega).exp()
}

/// Morlet center frequency for which neighbouring filters of a bank with
/// quality factor `quality` (scale ratio `a = 2^{1/Q}`) cross at half power:
/// `ω0 = sqrt(ln 2) · (a + 1) / (a - 1)`.
pub fn morlet_center(quality: f64) -> f64 {
    let a = (LN_2 / quality).exp();
    LN_2.sqrt() * (a + 1.0) / (a - 1.0)
}

/// Gaussian lowpass `exp(-ω²σ²/2)` with `σ = coarsest_scale / mother_peak`.
pub fn averaging_spectrum(coarsest_scale: f64, mother_peak: f64, omega: f64) -> f64 {
    let sigma = coarsest_scale / mother_peak;
    (-0.5 * omega * omega * sigma * sigma).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gmw,
    Morlet,
}

impl Family {
    pub fn code(self) -> u8 {
        match self {
            Family::Gmw => 0,
            Family::Morlet => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Family::Gmw),
            1 => Ok(Family::Morlet),
            other => Err(Error::Format(format!("unknown wavelet family code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gmw => "gmw",
            Family::Morlet => "morlet",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmw" => Ok(Family::Gmw),
            "morlet" => Ok(Family::Morlet),
            other => Err(Error::config(format!("unknown wavelet family '{other}'"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to sample one layer's bank, independent of signal length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankSpec {
    pub family: Family,
    pub params: GmwParams,
    pub quality: f64,
    pub j_max: usize,
    pub fine_peak: f64,
}

impl BankSpec {
    pub fn new(family: Family, params: GmwParams, quality: f64, j_max: usize) -> Self {
        Self {
            family,
            params,
            quality,
            j_max,
            fine_peak: DEFAULT_FINE_PEAK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        GmwParams::new(self.params.beta, self.params.gamma)?;
        if !(self.quality.is_finite() && self.quality > 0.0) {
            return Err(Error::config(format!(
                "quality factor must be > 0, got {}",
                self.quality
            )));
        }
        if !(self.fine_peak > 0.0 && self.fine_peak <= PI) {
            return Err(Error::config(format!(
                "finest peak must lie in (0, π], got {}",
                self.fine_peak
            )));
        }
        Ok(())
    }

    /// Peak frequency of the undilated mother wavelet in its own units.
    pub fn mother_peak(&self) -> f64 {
        match self.family {
            Family::Gmw => peak_frequency(&self.params),
            Family::Morlet => morlet_center(self.quality),
        }
    }

    pub fn lambda(&self, j: usize) -> f64 {
        (j as f64 - self.j_max as f64) / self.quality
    }

    pub fn num_scales(&self) -> usize {
        self.j_max + 1
    }

    /// Peak of row `j` in rad/sample.
    pub fn center_frequency(&self, j: usize) -> f64 {
        self.lambda(j).exp2() * self.fine_peak
    }

    /// Continuous response of row `j` at `omega` (rad/sample, signed).
    pub fn response(&self, j: usize, omega: f64) -> f64 {
        let mother = self.mother_peak();
        let arg = (-self.lambda(j)).exp2() * mother / self.fine_peak * omega;
        match self.family {
            Family::Gmw => gmw_spectrum(&self.params, arg),
            Family::Morlet => {
                let peak = morlet_spectrum(mother, mother);
                PEAK_GAIN * morlet_spectrum(mother, arg).abs() / peak
            }
        }
    }

    /// Standard deviation, in samples, of the matched Gaussian lowpass.
    pub fn lowpass_sigma(&self) -> f64 {
        1.0 / self.center_frequency(0)
    }

    /// Lowpass matched to the coarsest scale, sampled on a length-`len` grid.
    pub fn lowpass(&self, len: usize) -> Vec<f64> {
        let mother = self.mother_peak();
        let coarsest = (self.j_max as f64 / self.quality).exp2() * mother / self.fine_peak;
        (0..len)
            .map(|k| averaging_spectrum(coarsest, mother, dft_frequency(k, len)))
            .collect()
    }

    pub fn build(&self, signal_len: usize) -> Result<FilterBank> {
        self.validate()?;
        if signal_len < 2 {
            return Err(Error::config(format!(
                "filter bank needs at least 2 samples, got {signal_len}"
            )));
        }
        let filters = (0..self.num_scales())
            .map(|j| {
                (0..signal_len)
                    .map(|k| self.response(j, dft_frequency(k, signal_len)))
                    .collect()
            })
            .collect();
        Ok(FilterBank {
            spec: *self,
            signal_len,
            filters,
            lowpass: self.lowpass(signal_len),
        })
    }
}

/// One layer's wavelet filters plus its averaging filter, sampled on a
/// length-`signal_len` DFT grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    spec: BankSpec,
    signal_len: usize,
    filters: Vec<Vec<f64>>,
    lowpass: Vec<f64>,
}

/// Builds a bank with the default finest-peak placement.
pub fn build_filter_bank(
    family: Family,
    signal_len: usize,
    quality: f64,
    j_max: usize,
    params: GmwParams,
) -> Result<FilterBank> {
    BankSpec::new(family, params, quality, j_max).build(signal_len)
}

impl FilterBank {
    /// Reassemble a bank from stored rows (used by the container reader).
    pub(crate) fn from_parts(
        spec: BankSpec,
        signal_len: usize,
        filters: Vec<Vec<f64>>,
        lowpass: Vec<f64>,
    ) -> Result<Self> {
        if filters.len() != spec.num_scales() {
            return Err(Error::dim(spec.num_scales(), filters.len(), "filter rows"));
        }
        if let Some(row) = filters.iter().find(|r| r.len() != signal_len) {
            return Err(Error::dim(signal_len, row.len(), "filter row length"));
        }
        if lowpass.len() != signal_len {
            return Err(Error::dim(signal_len, lowpass.len(), "lowpass length"));
        }
        Ok(Self {
            spec,
            signal_len,
            filters,
            lowpass,
        })
    }

    pub fn spec(&self) -> &BankSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn quality(&self) -> f64 {
        self.spec.quality
    }

    pub fn j_max(&self) -> usize {
        self.spec.j_max
    }

    pub fn num_scales(&self) -> usize {
        self.filters.len()
    }

    /// Dilation exponents `λ_j`, increasing from coarse to fine.
    pub fn scales(&self) -> Vec<f64> {
        (0..self.num_scales()).map(|j| self.spec.lambda(j)).collect()
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    pub fn filter(&self, j: usize) -> &[f64] {
        &self.filters[j]
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    /// Largest gain of row `j`; the Lipschitz constant of convolution with it.
    pub fn max_gain(&self, j: usize) -> f64 {
        self.filters[j].iter().copied().fold(0.0, f64::max)
    }

    /// Fractional DFT bin at which row `j` peaks.
    pub fn peak_bin(&self, j: usize) -> f64 {
        self.spec.center_frequency(j) * self.signal_len as f64 / (2.0 * PI)
    }

    /// Writes one line per DFT bin: `k,omega,lowpass,j0,...,jJ`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string(), "omega".into(), "lowpass".into()];
        header.extend((0..self.num_scales()).map(|j| format!("j{j}")));
        w.write_record(&header)?;
        for k in 0..self.signal_len {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(k.to_string());
            rec.push(dft_frequency(k, self.signal_len).to_string());
            rec.push(self.lowpass[k].to_string());
            rec.extend(self.filters.iter().map(|row| row[k].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Analytic wavelet transform of `signal` with the GMW mother wavelet.
///
/// `scales` are dilation factors in samples: row `s` holds
/// `b ↦ (1/√a) Σ_t g(t) conj(ψ((t-b)/a))`, evaluated as
/// `ifft(G(ω) · √a · Ψ(aω))` with circular boundary handling.
pub fn awt(signal: &[f64], scales: &[f64], params: &GmwParams) -> Result<Vec<Vec<Complex64>>> {
    if signal.is_empty() {
        return Err(Error::data("awt of an empty signal"));
    }
    if let Some(a) = scales.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::config(format!("awt scales must be > 0, got {a}")));
    }
    let n = signal.len();
    let spectrum = fft_real(signal);
    Ok(scales
        .iter()
        .map(|&a| {
            let gains: Vec<f64> = (0..n)
                .map(|k| a.sqrt() * gmw_spectrum(params, a * dft_frequency(k, n)))
                .collect();
            filter_spectrum(&spectrum, &gains)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p42() -> GmwParams {
        GmwParams::new(4.0, 2.0).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(GmwParams::new(0.0, 2.0).is_err());
        assert!(GmwParams::new(-1.0, 2.0).is_err());
        assert!(GmwParams::new(4.0, 1.0).is_err());
        assert!(GmwParams::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn spectrum_vanishes_off_positive_axis() {
        assert_eq!(gmw_spectrum(&p42(), -1.0), 0.0);
        assert_eq!(gmw_spectrum(&p42(), 0.0), 0.0);
        assert_eq!(gmw_spectrum(&p42(), -1e-300), 0.0);
        // far tail underflows to zero, never NaN
        let far = gmw_spectrum(&p42(), 1e6);
        assert!(far == 0.0 && !far.is_nan());
    }

    #[test]
    fn peak_frequency_values() {
        assert!((peak_frequency(&p42()) - 2f64.sqrt()).abs() < 1e-15);
        for b in [1.5, 3.0, 7.0] {
            let p = GmwParams::new(b, b).unwrap();
            assert!((peak_frequency(&p) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn peak_matches_grid_argmax() {
        // dense grid search over (0, 8]
        let n = 800_000;
        let step = 8.0 / n as f64;
        let (mut best, mut best_w) = (f64::MIN, 0.0);
        for i in 1..=n {
            let w = i as f64 * step;
            let v = gmw_spectrum(&p42(), w);
            if v > best {
                best = v;
                best_w = w;
            }
        }
        assert!((best_w - peak_frequency(&p42())).abs() <= step);
    }

    #[test]
    fn normalization_constant_values() {
        // 2 (e/2)^2 = e^2 / 2
        let e = std::f64::consts::E;
        assert!((normalization_constant(&p42()) - e * e / 2.0).abs() < 1e-12);
        assert!((normalization_constant(&p42()) - 3.694528).abs() < 1e-6);
        let p22 = GmwParams::new(2.0, 2.0).unwrap();
        assert!((normalization_constant(&p22) - 2.0 * e).abs() < 1e-12);
        for (b, g) in [(4.0, 2.0), (3.0, 3.0), (1.0, 1.5), (20.0, 4.0), (0.5, 7.0)] {
            let p = GmwParams::new(b, g).unwrap();
            assert!((gmw_spectrum(&p, peak_frequency(&p)) - 2.0).abs() < 1e-12);
        }
        assert!((gmw_spectrum(&p42(), 2f64.sqrt()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn morlet_values() {
        let w0 = 6.0;
        assert!((morlet_spectrum(w0, w0) - (1.0 - (-w0 * w0).exp())).abs() < 1e-15);
        assert!(morlet_spectrum(w0, 0.0).abs() < 1e-300);
        let leak = morlet_spectrum(6.0, -1.0);
        let closed = (-24.5f64).exp() - (-18.5f64).exp();
        assert!((leak - closed).abs() < 1e-20);
        assert!(leak.abs() > 0.0);
    }

    #[test]
    fn morlet_neighbours_cross_at_half_power() {
        for q in [1.0, 4.0, 8.0] {
            let w0 = morlet_center(q);
            let a = 2f64.powf(1.0 / q);
            let cross = 2.0 * w0 / (1.0 + a);
            let g = |w: f64| (-0.5 * (w - w0).powi(2)).exp();
            assert!((g(cross).powi(2) - 0.5).abs() < 1e-12);
            assert!((g(a * cross).powi(2) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_values() {
        let c = 5.0;
        let p = 2f64.sqrt();
        assert_eq!(averaging_spectrum(c, p, 0.0), 1.0);
        assert_eq!(averaging_spectrum(c, p, 0.3), averaging_spectrum(c, p, -0.3));
        assert!((averaging_spectrum(c, p, p / c) - (-0.5f64).exp()).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 1..100 {
            let v = averaging_spectrum(c, p, i as f64 * 0.01);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn bank_sizes() {
        for (q, j, n) in [(8.0, 32, 33), (4.0, 13, 14), (4.0, 9, 10)] {
            let b = build_filter_bank(Family::Gmw, 4096, q, j, p42()).unwrap();
            assert_eq!(b.num_scales(), n);
            assert_eq!(b.filters().len(), n);
        }
        assert!(build_filter_bank(Family::Gmw, 1, 8.0, 4, p42()).is_err());
        assert!(build_filter_bank(Family::Gmw, 64, 0.0, 4, p42()).is_err());
    }

    #[test]
    fn scales_increase_coarse_to_fine() {
        let b = build_filter_bank(Family::Gmw, 512, 8.0, 32, p42()).unwrap();
        let s = b.scales();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s[32], 0.0);
        assert_eq!(s[0], -4.0);
    }

    #[test]
    fn gmw_rows_zero_on_nonpositive_bins() {
        for n in [64usize, 65, 1000] {
            let b = build_filter_bank(Family::Gmw, n, 4.0, 9, p42()).unwrap();
            for row in b.filters() {
                assert_eq!(row[0].to_bits(), 0);
                for (k, v) in row.iter().enumerate().skip(n / 2 + 1) {
                    assert_eq!(v.to_bits(), 0, "bin {k} of {n}");
                }
            }
        }
    }

    #[test]
    fn peaks_land_within_one_bin() {
        for family in [Family::Gmw, Family::Morlet] {
            let b = build_filter_bank(family, 4000, 8.0, 32, p42()).unwrap();
            for j in 0..b.num_scales() {
                let row = b.filter(j);
                let (argmax, max) = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
                assert!((argmax as f64 - b.peak_bin(j)).abs() <= 1.0, "{family} j={j}");
                assert!(max <= 2.0 + 1e-12 && max > 1.9);
            }
        }
    }

    #[test]
    fn morlet_rows_leak() {
        let b = build_filter_bank(Family::Morlet, 1024, 4.0, 9, p42()).unwrap();
        for row in b.filters() {
            let leak = row[513..].iter().copied().fold(0.0, f64::max);
            assert!(leak > 0.0);
        }
    }

    #[test]
    fn awt_rejects_bad_input() {
        assert!(awt(&[], &[1.0], &p42()).is_err());
        assert!(awt(&[1.0, 2.0], &[0.0], &p42()).is_err());
    }

    #[test]
    fn awt_of_zero_is_zero() {
        let w = awt(&[0.0; 128], &[1.0, 2.0, 4.0], &p42()).unwrap();
        assert!(w.iter().flatten().all(|c| c.norm() == 0.0));
    }
}
