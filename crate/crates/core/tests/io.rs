use std::fs::File;
use std::io::{BufReader, BufWriter};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stn_core::audio::{
    decode_audio, load_corpus, segment_track, write_wav, DecodeOptions, Track, MIN_TRACK_LEN, SEGMENT_HOP, SEGMENT_LEN,
};
use stn_core::container::{read_bank, read_matrix, read_pca, read_scattering, write_bank, write_matrix, write_pca, write_scattering};
use stn_core::features::fit_pca_rows;
use stn_core::filters::Family;
use stn_core::scattering::{scatter, ScatteringConfig};

#[test]
fn silence_decodes_to_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("silence.wav");
    write_wav(&path, &vec![0.0; 22_050], 22_050).unwrap();
    let track = decode_audio(&path, &DecodeOptions::default()).unwrap();
    assert_eq!(track.samples.len(), 22_050);
    assert!(track.samples.iter().all(|&v| v == 0.0));
    assert_eq!(track.rate, 22_050);
    let again = decode_audio(&path, &DecodeOptions::default()).unwrap();
    assert_eq!(track, again);
}

#[test]
fn square_wave_decodes_to_unit_levels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.wav");
    let x: Vec<f64> = (0..4410).map(|i| if (i / 50) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    write_wav(&path, &x, 22_050).unwrap();
    let track = decode_audio(&path, &DecodeOptions::default()).unwrap();
    for (a, b) in track.samples.iter().zip(&x) {
        assert!((a - b).abs() <= 2.0 / 32_768.0);
    }
}

#[test]
fn wrong_rate_is_rejected_unless_resampling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fast.wav");
    write_wav(&path, &vec![0.25; 4410], 44_100).unwrap();
    assert!(decode_audio(&path, &DecodeOptions::default()).is_err());
    let opts = DecodeOptions {
        resample: true,
        ..DecodeOptions::default()
    };
    let track = decode_audio(&path, &opts).unwrap();
    assert_eq!(track.samples.len(), 2205);
    assert!((track.samples[1000] - 0.25).abs() < 1e-3);
}

#[test]
fn segments_reconstruct_the_used_prefix() {
    let samples: Vec<f64> = (0..661_500).map(|i| i as f64).collect();
    let track = Track {
        samples: samples.clone(),
        rate: 22_050,
        label: "jazz".into(),
        id: "jazz/jazz.00000.au".into(),
    };
    let segs = segment_track(&track).unwrap();
    assert_eq!(segs.len(), 15);
    let mut rebuilt: Vec<f64> = Vec::new();
    for s in &segs {
        assert_eq!(s.samples.len(), SEGMENT_LEN);
        rebuilt.extend_from_slice(&s.samples[..SEGMENT_HOP]);
    }
    rebuilt.extend_from_slice(&segs[14].samples[SEGMENT_HOP..]);
    assert_eq!(rebuilt.len(), MIN_TRACK_LEN);
    assert_eq!(rebuilt, samples[..MIN_TRACK_LEN]);
    assert_eq!(segs[14].samples[0], 514_500.0);
    assert_eq!(*segs[14].samples.last().unwrap(), 624_749.0);
}

#[test]
fn mini_corpus_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    for genre in ["blues", "rock"] {
        std::fs::create_dir(dir.path().join(genre)).unwrap();
        for i in 0..3 {
            write_wav(&dir.path().join(format!("{genre}/{genre}.{i:05}.wav")), &[0.0; 100], 22_050).unwrap();
        }
    }
    std::fs::write(dir.path().join("rock/notes.txt"), "not audio").unwrap();
    let ds = load_corpus(dir.path()).unwrap();
    assert_eq!(ds.len(), 6);
    assert_eq!(ds.labels(), vec![0, 0, 0, 1, 1, 1]);
    let t = ds.tracks[4].load(&ds.genres, &DecodeOptions::default()).unwrap();
    assert_eq!(t.label, "rock");
    assert_eq!(t.id, "rock/rock.00001.wav");
}

#[test]
fn containers_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();

    let bank = ScatteringConfig::with_family(Family::Morlet).bank_spec(1).build(1723).unwrap();
    let path = dir.path().join("bank.gmwb");
    write_bank(BufWriter::new(File::create(&path).unwrap()), &bank).unwrap();
    assert_eq!(read_bank(BufReader::new(File::open(&path).unwrap())).unwrap(), bank);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out = scatter(&x, &ScatteringConfig::default()).unwrap();
    let path = dir.path().join("coeffs.stnc");
    write_scattering(BufWriter::new(File::create(&path).unwrap()), &out).unwrap();
    let back = read_scattering(BufReader::new(File::open(&path).unwrap())).unwrap();
    for m in 0..=3 {
        assert_eq!(back.layer_shape(m), out.layer_shape(m));
        assert_eq!(back.layer_data(m), out.layer_data(m));
    }

    let data: Vec<Vec<f64>> = (0..10).map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
    let pca = fit_pca_rows(&rows, 4, 0).unwrap();
    let path = dir.path().join("model.pcam");
    write_pca(BufWriter::new(File::create(&path).unwrap()), &pca).unwrap();
    assert_eq!(read_pca(BufReader::new(File::open(&path).unwrap())).unwrap(), pca);

    let path = dir.path().join("m.feat");
    let flat: Vec<f64> = data.concat();
    write_matrix(BufWriter::new(File::create(&path).unwrap()), 10, 7, &flat).unwrap();
    assert_eq!(read_matrix(BufReader::new(File::open(&path).unwrap())).unwrap(), (10, 7, flat));
}
