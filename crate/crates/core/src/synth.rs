//! Synthetic two-genre corpus for desk-scale runs.
//!
//! Both genres draw notes from the same pitch range and harmonic profile and
//! carry the same share of broadband noise, so their long-term spectra
//! overlap. They differ in temporal structure: "classical" tracks have long
//! notes with soft attacks over steady noise, while "metal" tracks gate their
//! notes with fast tremolo and put the noise into percussive bursts on a beat.
//! A random overall gain per track keeps absolute level uninformative.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{load_corpus, write_wav, Dataset, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthGenre {
    Classical,
    Metal,
}

impl SynthGenre {
    pub const ALL: [SynthGenre; 2] = [SynthGenre::Classical, SynthGenre::Metal];

    pub fn name(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::Metal => "metal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub tracks_per_genre: usize,
    pub duration_s: f64,
    pub rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            tracks_per_genre: 50,
            duration_s: 30.0,
            rate: SAMPLE_RATE,
            seed: 0,
        }
    }
}

fn track_seed(seed: u64, genre: SynthGenre, index: usize) -> u64 {
    let g = match genre {
        SynthGenre::Classical => 1u64,
        SynthGenre::Metal => 2u64,
    };
    seed ^ (g << 56) ^ (index as u64).wrapping_mul(0x2545_F491_4F6C_DD1D)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

/// Adds one harmonic note `[start, start+len)` with envelope `env(t_seconds)`.
fn add_note(out: &mut [f64], rate: f64, start: usize, len: usize, f0: f64, harmonics: &[f64], vibrato: f64, env: impl Fn(f64) -> f64) {
    let end = (start + len).min(out.len());
    let nyquist_guard = 0.45 * rate;
    let mut phases = vec![0.0f64; harmonics.len()];
    for (n, o) in out.iter_mut().enumerate().take(end).skip(start) {
        let t = (n - start) as f64 / rate;
        let f = f0 * (1.0 + vibrato * (2.0 * PI * 5.0 * t).sin());
        let e = env(t);
        let mut s = 0.0;
        for (h, (a, ph)) in harmonics.iter().zip(phases.iter_mut()).enumerate() {
            let fh = f * (h + 1) as f64;
            if fh < nyquist_guard {
                s += a * ph.sin();
            }
            *ph += 2.0 * PI * fh / rate;
        }
        *o += e * s;
    }
}

fn harmonic_profile(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (1..=8)
        .map(|h| (h as f64).powf(-1.2) * rng.random_range(0.7..1.3))
        .collect()
}

fn voices(rng: &mut ChaCha8Rng, out: &mut [f64], rate: f64, count: usize, gate: &dyn Fn(f64) -> f64) {
    let total = out.len();
    for _ in 0..count {
        let mut pos = 0usize;
        while pos < total {
            let dur = rng.random_range(0.5..2.0);
            let len = (dur * rate) as usize;
            let f0 = 110.0 * 2f64.powf(rng.random_range(0.0..2.0));
            let harmonics = harmonic_profile(rng);
            let attack = rng.random_range(0.08..0.2);
            let offset = pos as f64 / rate;
            add_note(out, rate, pos, len, f0, &harmonics, 0.003, |t| {
                let a = if t < attack { 0.5 - 0.5 * (PI * t / attack).cos() } else { 1.0 };
                let r = ((dur - t) / (0.3 * dur)).clamp(0.0, 1.0);
                a * r * gate(offset + t)
            });
            pos += len;
        }
    }
}

/// One synthetic track of `len` samples.
pub fn synth_track(genre: SynthGenre, seed: u64, len: usize, rate: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = rate as f64;
    let mut tonal = vec![0.0; len];
    let mut noise = vec![0.0; len];
    match genre {
        SynthGenre::Classical => {
            voices(&mut rng, &mut tonal, fs, 3, &|_| 1.0);
            for v in noise.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
        }
        SynthGenre::Metal => {
            let trem = rng.random_range(8.0..14.0);
            let edge = 0.003 * trem;
            let gate = move |t: f64| {
                // raised-cosine-edged square wave with 50% duty
                let ph = (t * trem).fract();
                if ph < edge {
                    0.5 - 0.5 * (PI * ph / edge).cos()
                } else if ph < 0.5 {
                    1.0
                } else if ph < 0.5 + edge {
                    0.5 + 0.5 * (PI * (ph - 0.5) / edge).cos()
                } else {
                    0.0
                }
            };
            voices(&mut rng, &mut tonal, fs, 2, &gate);
            let beat = 60.0 / rng.random_range(140.0..200.0);
            let decay = rng.random_range(0.03..0.06);
            for (n, v) in noise.iter_mut().enumerate() {
                let t = n as f64 / fs;
                let since = t % (beat / 2.0);
                let w: f64 = StandardNormal.sample(&mut rng);
                *v = w * (-since / decay).exp();
            }
        }
    }
    normalize_rms(&mut tonal, 1.0);
    normalize_rms(&mut noise, rng.random_range(0.2..0.6));
    let gain = 0.05 * 10f64.powf(rng.random_range(0.0..1.0));
    let mut out: Vec<f64> = tonal.iter().zip(&noise).map(|(a, b)| gain * (a + b)).collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.99 {
        out.iter_mut().for_each(|v| *v *= 0.99 / peak);
    }
    out
}

/// Writes `<root>/<genre>/<genre>.NNNNN.wav` for both genres and loads the result.
pub fn write_corpus(root: &Path, cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.tracks_per_genre == 0 {
        return Err(Error::config("tracks_per_genre must be positive"));
    }
    let len = (cfg.duration_s * cfg.rate as f64).round() as usize;
    for genre in SynthGenre::ALL {
        let dir = root.join(genre.name());
        std::fs::create_dir_all(&dir)?;
        for i in 0..cfg.tracks_per_genre {
            let path = dir.join(format!("{}.{i:05}.wav", genre.name()));
            if path.exists() {
                continue;
            }
            let x = synth_track(genre, track_seed(cfg.seed, genre, i), len, cfg.rate);
            let tmp = path.with_extension("wav.part");
            write_wav(&tmp, &x, cfg.rate)?;
            std::fs::rename(&tmp, &path)?;
        }
    }
    load_corpus(root)
}
