//! Audio decoding (WAV and Sun/NeXT AU), corpus discovery and segmentation.
//!
//! A corpus is a directory with one subdirectory per genre. Each track is cut
//! into 15 overlapping 5-second segments with a hop of a third of a segment;
//! segment `k` covers samples `[k·L/3, k·L/3 + L)` (0-based).

use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use log::{info, warn};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 22_050;
pub const SEGMENT_LEN: usize = 5 * SAMPLE_RATE as usize;
pub const SEGMENT_HOP: usize = SEGMENT_LEN / 3;
pub const SEGMENTS_PER_TRACK: usize = 15;
/// Shortest track that yields all segments: `14·L/3 + L`.
pub const MIN_TRACK_LEN: usize = (SEGMENTS_PER_TRACK - 1) * SEGMENT_HOP + SEGMENT_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DecodeOptions {
    /// Decimate integer multiples of the target rate instead of rejecting them.
    pub resample: bool,
    /// Average multichannel audio to mono instead of rejecting it.
    pub downmix: bool,
    pub target_rate: u32,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            resample: false,
            downmix: true,
            target_rate: SAMPLE_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub samples: Vec<f64>,
    pub rate: u32,
    pub label: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub track_id: String,
    pub k: usize,
    pub samples: Vec<f64>,
}

/// Decodes `path` to mono samples in `[-1, 1]` at the target rate. The label
/// is the parent directory name and the id is the path as given.
pub fn decode_audio(path: &Path, opts: &DecodeOptions) -> Result<Track> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let (channels, rate, interleaved) = match ext.as_deref() {
        Some("wav") => read_wav(path)?,
        Some("au") | Some("snd") => read_au(path)?,
        _ => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: "unsupported file extension (expected .wav or .au)".into(),
            })
        }
    };
    let mono = to_mono(path, interleaved, channels, opts.downmix)?;
    let samples = match_rate(path, mono, rate, opts)?;
    let label = path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    Ok(Track {
        samples,
        rate: opts.target_rate,
        label,
        id: path.display().to_string(),
    })
}

fn decode_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_wav(path: &Path) -> Result<(usize, u32, Vec<f64>)> {
    let reader = hound::WavReader::open(path).map_err(|e| decode_err(path, e.to_string()))?;
    let spec = reader.spec();
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()
        }
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
    }
    .map_err(|e| decode_err(path, e.to_string()))?;
    Ok((spec.channels as usize, spec.sample_rate, samples))
}

const AU_MAGIC: u32 = 0x2e73_6e64; // ".snd"

/// Sun/NeXT AU reader for the encodings found in GTZAN: 8-bit µ-law (1),
/// 8-bit linear (2) and 16-bit linear (3), all big-endian.
fn read_au(path: &Path) -> Result<(usize, u32, Vec<f64>)> {
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(path)?).read_to_end(&mut bytes)?;
    parse_au(&bytes).map_err(|reason| decode_err(path, reason))
}

fn parse_au(bytes: &[u8]) -> std::result::Result<(usize, u32, Vec<f64>), String> {
    let word = |i: usize| -> std::result::Result<u32, String> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| "truncated AU header".to_string())
    };
    if word(0)? != AU_MAGIC {
        return Err("missing .snd magic".into());
    }
    let offset = word(1)? as usize;
    let size = word(2)?;
    let encoding = word(3)?;
    let rate = word(4)?;
    let channels = word(5)? as usize;
    if offset < 24 || offset > bytes.len() {
        return Err(format!("bad data offset {offset}"));
    }
    if channels == 0 {
        return Err("zero channels".into());
    }
    let available = &bytes[offset..];
    let data = if size == u32::MAX {
        available
    } else {
        available
            .get(..size as usize)
            .ok_or_else(|| format!("truncated: header promises {size} bytes, {} present", available.len()))?
    };
    let samples = match encoding {
        1 => data.iter().map(|&b| mulaw_to_linear(b)).collect(),
        2 => data.iter().map(|&b| f64::from(b as i8) / 128.0).collect(),
        3 => {
            if data.len() % 2 != 0 {
                return Err("odd byte count for 16-bit data".into());
            }
            data.chunks_exact(2)
                .map(|c| f64::from(i16::from_be_bytes([c[0], c[1]])) / 32768.0)
                .collect()
        }
        other => return Err(format!("unsupported AU encoding {other}")),
    };
    Ok((channels, rate, samples))
}

/// G.711 µ-law expansion, scaled to `[-1, 1]`.
fn mulaw_to_linear(byte: u8) -> f64 {
    let u = !byte;
    let sign = u & 0x80;
    let exponent = (u >> 4) & 0x07;
    let mantissa = u & 0x0f;
    let magnitude = ((i32::from(mantissa) << 3) + 0x84) << exponent;
    let value = magnitude - 0x84;
    let v = if sign != 0 { -value } else { value };
    f64::from(v) / 32124.0
}

fn to_mono(path: &Path, interleaved: Vec<f64>, channels: usize, downmix: bool) -> Result<Vec<f64>> {
    match channels {
        0 => Err(decode_err(path, "zero channels")),
        1 => Ok(interleaved),
        c if downmix => Ok(interleaved
            .chunks_exact(c)
            .map(|frame| frame.iter().sum::<f64>() / c as f64)
            .collect()),
        c => Err(decode_err(path, format!("{c}-channel audio and downmix disabled"))),
    }
}

fn match_rate(path: &Path, samples: Vec<f64>, rate: u32, opts: &DecodeOptions) -> Result<Vec<f64>> {
    if rate == opts.target_rate {
        return Ok(samples);
    }
    if !opts.resample {
        return Err(decode_err(
            path,
            format!("sample rate {rate} Hz, expected {} Hz (enable resampling)", opts.target_rate),
        ));
    }
    if !rate.is_multiple_of(opts.target_rate) {
        return Err(decode_err(
            path,
            format!("cannot resample {rate} Hz to {} Hz: not an integer factor", opts.target_rate),
        ));
    }
    Ok(decimate(&samples, (rate / opts.target_rate) as usize))
}

/// Hann-windowed sinc lowpass at 0.9× the new Nyquist, then keep every `factor`-th sample.
pub fn decimate(samples: &[f64], factor: usize) -> Vec<f64> {
    if factor <= 1 {
        return samples.to_vec();
    }
    let half = 16 * factor;
    let cutoff = 0.9 / factor as f64; // fraction of the input Nyquist
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            let sinc = if t == 0.0 {
                cutoff
            } else {
                (PI * cutoff * t).sin() / (PI * t)
            };
            let window = 0.5 - 0.5 * (2.0 * PI * i as f64 / (2 * half) as f64).cos();
            sinc * window
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    (0..samples.len())
        .step_by(factor)
        .map(|c| {
            let mut acc = 0.0;
            for (i, tap) in taps.iter().enumerate() {
                let idx = c as isize + i as isize - half as isize;
                if idx >= 0 && (idx as usize) < samples.len() {
                    acc += tap * samples[idx as usize];
                }
            }
            acc / gain
        })
        .collect()
}

/// Cuts a track into its 15 overlapping segments.
pub fn segment_track(track: &Track) -> Result<Vec<Segment>> {
    if track.samples.len() < MIN_TRACK_LEN {
        return Err(Error::data(format!(
            "track {} has {} samples, segmentation needs at least {MIN_TRACK_LEN}",
            track.id,
            track.samples.len()
        )));
    }
    Ok((0..SEGMENTS_PER_TRACK)
        .map(|k| {
            let start = k * SEGMENT_HOP;
            Segment {
                track_id: track.id.clone(),
                k,
                samples: track.samples[start..start + SEGMENT_LEN].to_vec(),
            }
        })
        .collect())
}

/// A track in a corpus, not yet decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackRef {
    /// Path relative to the corpus root, `/`-separated.
    pub id: String,
    pub path: PathBuf,
    pub label: usize,
}

impl TrackRef {
    pub fn load(&self, genres: &[String], opts: &DecodeOptions) -> Result<Track> {
        let mut track = decode_audio(&self.path, opts)?;
        track.id = self.id.clone();
        track.label = genres[self.label].clone();
        Ok(track)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub root: PathBuf,
    /// Sorted genre names; `TrackRef::label` indexes into this.
    pub genres: Vec<String>,
    /// Sorted by relative path.
    pub tracks: Vec<TrackRef>,
}

fn is_audio(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("wav" | "au" | "snd")
    )
}

/// Lists `root/<genre>/<file>` audio files. Files are not decoded here.
pub fn load_corpus(root: &Path) -> Result<Dataset> {
    let mut genre_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    genre_dirs.sort();

    let mut dataset = Dataset {
        root: root.to_path_buf(),
        ..Default::default()
    };
    for dir in genre_dirs {
        let genre = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::data(format!("non-UTF-8 genre directory {}", dir.display())))?
            .to_string();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut audio = Vec::new();
        for f in files {
            if is_audio(&f) {
                audio.push(f);
            } else {
                info!("skipping non-audio file {}", f.display());
            }
        }
        if audio.is_empty() {
            warn!("genre directory {} holds no audio files", dir.display());
            continue;
        }
        let label = dataset.genres.len();
        dataset.genres.push(genre.clone());
        for path in audio {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            dataset.tracks.push(TrackRef {
                id: format!("{genre}/{name}"),
                path,
                label,
            });
        }
    }
    Ok(dataset)
}

impl Dataset {
    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.tracks.iter().map(|t| t.label).collect()
    }

    /// Hash of the ordered (id, label, file size) list; changes when files do.
    pub fn content_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        for t in &self.tracks {
            h.update(t.id.as_bytes());
            h.update(self.genres[t.label].as_bytes());
            h.update(fs::metadata(&t.path)?.len().to_le_bytes());
        }
        Ok(h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    /// Decodes every track and writes `id,genre,samples,rate`.
    pub fn write_manifest<W: std::io::Write>(&self, out: W, opts: &DecodeOptions) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "genre", "samples", "rate"])?;
        for t in &self.tracks {
            let track = t.load(&self.genres, opts)?;
            w.write_record([
                t.id.as_str(),
                self.genres[t.label].as_str(),
                &track.samples.len().to_string(),
                &track.rate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes 16-bit mono PCM WAV, clipping to `[-1, 1]`.
pub fn write_wav(path: &Path, samples: &[f64], rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| decode_err(path, e.to_string()))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(|e| decode_err(path, e.to_string()))?;
    }
    w.finalize().map_err(|e| decode_err(path, e.to_string()))?;
    Ok(())
}
