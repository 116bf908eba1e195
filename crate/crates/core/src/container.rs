//! Self-describing little-endian binary containers.
//!
//! Every container starts with a 4-byte magic and a `u16` version:
//!
//! | magic  | payload                                                              |
//! |--------|----------------------------------------------------------------------|
//! | `GMWB` | family `u8`; N, Q, J, β, γ as `f64`; `(J+2) × N` `f64` rows (filters, then lowpass) |
//! | `STNC` | scattering config, input length, then each layer as rank `u8`, dims `u64`, `f64` data |
//! | `PCAM` | d `u64`, k `u64`, mean `[d]`, singular values `[k]`, components `k × d` |
//! | `FEAT` | rows `u64`, cols `u64`, row-major `f64` data                          |

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::features::PcaModel;
use crate::filters::{BankSpec, Family, FilterBank, GmwParams, DEFAULT_FINE_PEAK};
use crate::scattering::{Contraction, LayerConfig, ScatteringConfig, ScatteringOutput, Tensor};

pub const BANK_MAGIC: &[u8; 4] = b"GMWB";
pub const SCATTER_MAGIC: &[u8; 4] = b"STNC";
pub const PCA_MAGIC: &[u8; 4] = b"PCAM";
pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const VERSION: u16 = 1;

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4]) -> Result<()> {
    w.write_all(magic)?;
    w.write_u16::<LE>(VERSION)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&found)
        )));
    }
    let version = r.read_u16::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = r.read_u64::<LE>()?;
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in memory")))
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Format(format!("{what} must be a nonnegative integer, got {v}")))
    }
}

pub fn write_bank<W: Write>(mut w: W, bank: &FilterBank) -> Result<()> {
    let spec = bank.spec();
    write_header(&mut w, BANK_MAGIC)?;
    w.write_u8(spec.family.code())?;
    for v in [
        bank.signal_len() as f64,
        spec.quality,
        spec.j_max as f64,
        spec.params.beta(),
        spec.params.gamma(),
    ] {
        w.write_f64::<LE>(v)?;
    }
    for row in bank.filters() {
        write_f64s(&mut w, row)?;
    }
    write_f64s(&mut w, bank.lowpass())?;
    Ok(())
}

/// Reads a bank back. The stored rows are authoritative; the finest-peak
/// placement is not part of the format and is reported as the default.
pub fn read_bank<R: Read>(mut r: R) -> Result<FilterBank> {
    read_header(&mut r, BANK_MAGIC)?;
    let family = Family::from_code(r.read_u8()?)?;
    let n = as_count(r.read_f64::<LE>()?, "signal length")?;
    let quality = r.read_f64::<LE>()?;
    let j_max = as_count(r.read_f64::<LE>()?, "J")?;
    let beta = r.read_f64::<LE>()?;
    let gamma = r.read_f64::<LE>()?;
    let spec = BankSpec {
        family,
        params: GmwParams::new(beta, gamma)?,
        quality,
        j_max,
        fine_peak: DEFAULT_FINE_PEAK,
    };
    let filters = (0..=j_max)
        .map(|_| read_f64s(&mut r, n))
        .collect::<Result<Vec<_>>>()?;
    let lowpass = read_f64s(&mut r, n)?;
    FilterBank::from_parts(spec, n, filters, lowpass)
}

pub fn write_scattering<W: Write>(mut w: W, out: &ScatteringOutput) -> Result<()> {
    let cfg = &out.config;
    write_header(&mut w, SCATTER_MAGIC)?;
    w.write_u8(cfg.family.code())?;
    w.write_f64::<LE>(cfg.params.beta())?;
    w.write_f64::<LE>(cfg.params.gamma())?;
    w.write_f64::<LE>(cfg.fine_peak)?;
    w.write_u8(u8::from(cfg.prune))?;
    w.write_u8(cfg.num_layers() as u8)?;
    for l in &cfg.layers {
        w.write_f64::<LE>(l.quality)?;
        w.write_u64::<LE>(l.j_max as u64)?;
        w.write_u64::<LE>(l.subsample as u64)?;
    }
    for &r in &cfg.averaging_rates {
        w.write_u64::<LE>(r as u64)?;
    }
    w.write_u64::<LE>(out.input_len as u64)?;
    for m in 0..=out.num_layers() {
        let shape = out.layer_shape(m);
        w.write_u8(shape.len() as u8)?;
        for d in &shape {
            w.write_u64::<LE>(*d as u64)?;
        }
        write_f64s(&mut w, out.layer_data(m))?;
    }
    Ok(())
}

pub fn read_scattering<R: Read>(mut r: R) -> Result<ScatteringOutput> {
    read_header(&mut r, SCATTER_MAGIC)?;
    let family = Family::from_code(r.read_u8()?)?;
    let params = GmwParams::new(r.read_f64::<LE>()?, r.read_f64::<LE>()?)?;
    let fine_peak = r.read_f64::<LE>()?;
    let prune = r.read_u8()? != 0;
    let depth = r.read_u8()? as usize;
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        layers.push(LayerConfig {
            quality: r.read_f64::<LE>()?,
            j_max: read_len(&mut r, "J")?,
            subsample: read_len(&mut r, "subsampling rate")?,
        });
    }
    let averaging_rates = (0..=depth)
        .map(|_| read_len(&mut r, "averaging rate"))
        .collect::<Result<Vec<_>>>()?;
    let config = ScatteringConfig {
        family,
        params,
        fine_peak,
        layers,
        averaging_rates,
        contraction: Contraction::Modulus,
        prune,
    };
    config.validate()?;
    let input_len = read_len(&mut r, "input length")?;
    let mut tensors = Vec::with_capacity(depth + 1);
    for _ in 0..=depth {
        let rank = r.read_u8()? as usize;
        let shape = (0..rank)
            .map(|_| read_len(&mut r, "dimension"))
            .collect::<Result<Vec<_>>>()?;
        let len = shape.iter().product();
        tensors.push(Tensor::new(shape, read_f64s(&mut r, len)?)?);
    }
    let layer0 = tensors.remove(0).data().to_vec();
    Ok(ScatteringOutput {
        layer0,
        layers: tensors,
        config,
        input_len,
    })
}

pub fn write_pca<W: Write>(mut w: W, model: &PcaModel) -> Result<()> {
    write_header(&mut w, PCA_MAGIC)?;
    w.write_u64::<LE>(model.dim() as u64)?;
    w.write_u64::<LE>(model.k() as u64)?;
    write_f64s(&mut w, model.mean())?;
    write_f64s(&mut w, model.singular_values())?;
    write_f64s(&mut w, model.components_flat())?;
    Ok(())
}

pub fn read_pca<R: Read>(mut r: R) -> Result<PcaModel> {
    read_header(&mut r, PCA_MAGIC)?;
    let d = read_len(&mut r, "dimension")?;
    let k = read_len(&mut r, "component count")?;
    let mean = read_f64s(&mut r, d)?;
    let singular = read_f64s(&mut r, k)?;
    let components = read_f64s(&mut r, k * d)?;
    PcaModel::from_parts(mean, components, singular)
}

pub fn write_matrix<W: Write>(mut w: W, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::dim(rows * cols, data.len(), "matrix data"));
    }
    write_header(&mut w, FEATURE_MAGIC)?;
    w.write_u64::<LE>(rows as u64)?;
    w.write_u64::<LE>(cols as u64)?;
    write_f64s(&mut w, data)
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>)> {
    read_header(&mut r, FEATURE_MAGIC)?;
    let rows = read_len(&mut r, "rows")?;
    let cols = read_len(&mut r, "cols")?;
    let data = read_f64s(&mut r, rows * cols)?;
    Ok((rows, cols, data))
}
