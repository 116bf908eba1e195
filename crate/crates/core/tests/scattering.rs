use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stn_core::audio::SEGMENT_LEN;
use stn_core::filters::{awt, gmw_spectrum, peak_frequency, Family, GmwParams};
use stn_core::scattering::{layer_s, layer_u, Scatterer, ScatteringConfig};
use stn_core::spectral::dft_frequency;
use stn_core::synth::{synth_track, SynthGenre};

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

#[test]
fn scattering_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..16_384).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sc = Scatterer::new(&ScatteringConfig::default(), x.len()).unwrap();
    let a = sc.scatter(&x).unwrap();
    let b = sc.scatter(&x).unwrap();
    for m in 0..=3 {
        let bits = |d: &[f64]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.layer_data(m)), bits(b.layer_data(m)));
    }
}

#[test]
fn deeper_layers_are_more_shift_invariant() {
    let sc = Scatterer::new(&ScatteringConfig::default(), SEGMENT_LEN).unwrap();
    let tau = 64;
    let (mut d1, mut d3) = (0.0, 0.0);
    let draws = 20;
    for draw in 0..draws {
        let genre = SynthGenre::ALL[draw % 2];
        let x = synth_track(genre, 100 + draw as u64, SEGMENT_LEN, 22_050);
        let mut shifted = x.clone();
        shifted.rotate_right(tau);
        let a = sc.scatter(&x).unwrap();
        let b = sc.scatter(&shifted).unwrap();
        d1 += rel_l2(a.layer_data(1), b.layer_data(1)) / draws as f64;
        d3 += rel_l2(a.layer_data(3), b.layer_data(3)) / draws as f64;
    }
    assert!(d3 < d1, "S3 shift change {d3:.4} vs S1 {d1:.4}");
}

#[test]
fn rows_are_dilations_of_the_finest_row() {
    for family in [Family::Gmw, Family::Morlet] {
        let cfg = ScatteringConfig::with_family(family);
        for m in 0..3 {
            let spec = cfg.bank_spec(m);
            let n = 110_250;
            let bank = spec.build(n).unwrap();
            let fine = bank.filter(spec.j_max);
            let mut worst = 0.0f64;
            for j in 0..spec.j_max {
                let stretch = (-spec.lambda(j)).exp2();
                for k in 1..=n / 2 {
                    let pos = k as f64 * stretch;
                    if pos + 1.0 > (n / 2) as f64 {
                        break;
                    }
                    let (i, frac) = (pos.floor() as usize, pos.fract());
                    let interp = fine[i] * (1.0 - frac) + fine[i + 1] * frac;
                    worst = worst.max((bank.filter(j)[k] - interp).abs());
                }
            }
            assert!(worst <= 1e-6, "{family:?} layer {m}: dilation error {worst:.2e}");
        }
    }
}

/// `√a·Ψ(a·ω)` on a dense scale grid is the oracle for the tone response.
#[test]
fn awt_tone_response_matches_dense_oracle() {
    let p = GmwParams::default();
    let n = 4096;
    let bin = 200;
    let wc = 2.0 * PI * bin as f64 / n as f64;
    let x: Vec<f64> = (0..n).map(|t| (wc * t as f64).cos()).collect();
    let base = peak_frequency(&p) / wc;
    let scales: Vec<f64> = (0..81).map(|i| base * 2f64.powf((i as f64 - 40.0) / 40.0)).collect();
    let w = awt(&x, &scales, &p).unwrap();

    let interior = n / 8..7 * n / 8;
    let mean_mod: Vec<f64> = w
        .iter()
        .map(|row| row[interior.clone()].iter().map(|c| c.norm()).sum::<f64>() / interior.len() as f64)
        .collect();
    let argmax = |v: &[f64]| (0..v.len()).fold(0, |a, i| if v[i] > v[a] { i } else { a });
    let oracle: Vec<f64> = scales.iter().map(|&a| 0.5 * a.sqrt() * gmw_spectrum(&p, a * wc)).collect();
    assert_eq!(argmax(&mean_mod), argmax(&oracle));
    for (m, o) in mean_mod.iter().zip(&oracle) {
        assert!((m - o).abs() <= 1e-9 * o.max(1.0));
    }

    // the analytic response to a real tone has a flat modulus
    let row = &w[argmax(&mean_mod)];
    let mods: Vec<f64> = row[interior.clone()].iter().map(|c| c.norm()).collect();
    let mid = mean_mod[argmax(&mean_mod)];
    assert!(mods.iter().all(|v| (v - mid).abs() <= 0.05 * mid));
}

#[test]
fn awt_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1000;
    let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (a, b) = (1.7, -0.3);
    let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
    let scales = [1.0, 3.0, 10.0, 40.0];
    let p = GmwParams::default();
    let (wf, wg, wm) = (awt(&f, &scales, &p).unwrap(), awt(&g, &scales, &p).unwrap(), awt(&mix, &scales, &p).unwrap());
    for s in 0..scales.len() {
        for t in 0..n {
            assert!((wm[s][t] - (a * wf[s][t] + b * wg[s][t])).norm() <= 1e-10);
        }
    }
}

#[test]
fn tone_energy_peaks_at_its_filter() {
    let n = 8192;
    let bank = ScatteringConfig::default().bank_spec(0).build(n).unwrap();
    for j_star in [4, 12, 20, 28, 32] {
        let bin = bank.peak_bin(j_star).round() as usize;
        let w = dft_frequency(bin, n);
        let x: Vec<f64> = (0..n).map(|t| (w * t as f64).cos()).collect();
        let u = layer_u(&x, &bank, 8).unwrap();
        let energy: Vec<f64> = u.iter().map(|v| v.iter().map(|s| s * s).sum()).collect();
        let best = (0..energy.len()).fold(0, |a, i| if energy[i] > energy[a] { i } else { a });
        assert_eq!(best, j_star);
    }
}

#[test]
fn default_segment_layer_one_lengths() {
    let bank = ScatteringConfig::default().bank_spec(0).build(SEGMENT_LEN).unwrap();
    let x = vec![0.0; SEGMENT_LEN];
    let u = layer_u(&x, &bank, 8).unwrap();
    assert_eq!(u.len(), 33);
    assert!(u.iter().all(|v| v.len() == 13_782 && v.iter().all(|&s| s == 0.0)));
    let lp = ScatteringConfig::default().bank_spec(0).lowpass(13_782);
    assert_eq!(layer_s(&u[0], &lp, 32).unwrap().len(), 431);
}
