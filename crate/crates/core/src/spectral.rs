//! Thin FFT helpers over `rustfft` with a per-thread plan cache.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Signed angular frequency (rad/sample) of DFT bin `k` on a length-`n` grid.
///
/// Bins above `n/2` alias to negative frequencies; bin `n/2` (even `n`) is
/// treated as +π.
#[inline]
pub fn dft_frequency(k: usize, n: usize) -> f64 {
    if 2 * k <= n {
        2.0 * PI * k as f64 / n as f64
    } else {
        -2.0 * PI * (n - k) as f64 / n as f64
    }
}

pub fn fft_in_place(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// Unnormalized inverse FFT followed by the 1/n scale.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    buf
}

pub fn fft_complex(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf);
    buf
}

/// `ifft(spectrum ⊙ gains)`.
pub fn filter_spectrum(spectrum: &[Complex64], gains: &[f64]) -> Vec<Complex64> {
    debug_assert_eq!(spectrum.len(), gains.len());
    let mut buf: Vec<Complex64> = spectrum
        .iter()
        .zip(gains)
        .map(|(s, &g)| s * g)
        .collect();
    ifft_in_place(&mut buf);
    buf
}
