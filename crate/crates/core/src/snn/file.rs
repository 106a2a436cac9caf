//! `SNM1` model files and the key=value LIF config.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! b"SNM1", u16 version
//! u32 decay_u, u32 decay_v, u32 v_threshold, u32 refractory_steps, f64 timestep_ms
//! u16 input height, u16 input width, u16 input channels
//! u16 layer count
//! per layer:
//!   u8 kind (0 = conv2d, 1 = dense)
//!   conv2d: u16 in_h, u16 in_w, u16 in_c, u16 features
//!   dense:  u16 inputs, u16 outputs
//!   i8 exponent, i8 x weight_count, u8 x input_size (delays)
//! ```

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::model::{Layer, LayerSpec, LifParams, NetworkModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"SNM1";
pub const MODEL_VERSION: u16 = 1;

fn put_u16(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u16::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u16")))?;
    out.write_u16::<LittleEndian>(v).unwrap();
    Ok(())
}

pub fn encode_model(m: &NetworkModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.write_all(MODEL_MAGIC).unwrap();
    out.write_u16::<LittleEndian>(MODEL_VERSION).unwrap();
    out.write_u32::<LittleEndian>(m.lif.decay_u).unwrap();
    out.write_u32::<LittleEndian>(m.lif.decay_v).unwrap();
    out.write_u32::<LittleEndian>(m.lif.v_threshold).unwrap();
    out.write_u32::<LittleEndian>(m.lif.refractory_steps).unwrap();
    out.write_f64::<LittleEndian>(m.lif.timestep_ms).unwrap();
    put_u16(&mut out, m.input.0)?;
    put_u16(&mut out, m.input.1)?;
    put_u16(&mut out, m.input.2)?;
    put_u16(&mut out, m.layers.len())?;
    for layer in &m.layers {
        match layer.spec {
            LayerSpec::Conv2d { input: (h, w, c), features } => {
                out.push(0);
                for v in [h, w, c, features] {
                    put_u16(&mut out, v)?;
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                out.push(1);
                put_u16(&mut out, inputs)?;
                put_u16(&mut out, outputs)?;
            }
        }
        out.write_i8(layer.exponent).unwrap();
        out.extend(layer.weights.iter().map(|&w| w as u8));
        out.extend_from_slice(&layer.delays);
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<NetworkModel> {
    let truncated = |_| Error::Format("truncated SNM1 data".into());
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected SNM1")));
    }
    let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let u16v = |r: &mut Cursor<&[u8]>| r.read_u16::<LittleEndian>().map(usize::from).map_err(truncated);
    let lif = LifParams {
        decay_u: r.read_u32::<LittleEndian>().map_err(truncated)?,
        decay_v: r.read_u32::<LittleEndian>().map_err(truncated)?,
        v_threshold: r.read_u32::<LittleEndian>().map_err(truncated)?,
        refractory_steps: r.read_u32::<LittleEndian>().map_err(truncated)?,
        timestep_ms: r.read_f64::<LittleEndian>().map_err(truncated)?,
    };
    let input = (u16v(&mut r)?, u16v(&mut r)?, u16v(&mut r)?);
    let count = u16v(&mut r)?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let spec = match r.read_u8().map_err(truncated)? {
            0 => LayerSpec::Conv2d {
                input: (u16v(&mut r)?, u16v(&mut r)?, u16v(&mut r)?),
                features: u16v(&mut r)?,
            },
            1 => LayerSpec::Dense {
                inputs: u16v(&mut r)?,
                outputs: u16v(&mut r)?,
            },
            kind => return Err(Error::Format(format!("unknown layer kind {kind}"))),
        };
        let exponent = r.read_i8().map_err(truncated)?;
        let mut weights = vec![0u8; spec.weight_count()];
        r.read_exact(&mut weights).map_err(truncated)?;
        let mut delays = vec![0u8; spec.input_size()];
        r.read_exact(&mut delays).map_err(truncated)?;
        layers.push(Layer {
            spec,
            weights: weights.into_iter().map(|b| b as i8).collect(),
            exponent,
            delays,
        });
    }
    if r.position() as usize != bytes.len() {
        return Err(Error::Format("trailing bytes after SNM1 layers".into()));
    }
    Ok(NetworkModel { input, layers, lif })
}

pub fn write_model(m: &NetworkModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(m)?).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<NetworkModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Applies `key=value` lines (`v_threshold`, `decay_u`, `decay_v`,
/// `refractory_steps`, `timestep_ms`) on top of `base`. Blank lines and `#`
/// comments are skipped; other keys are ignored.
pub fn parse_lif_config(text: &str, base: LifParams) -> Result<LifParams> {
    let mut lif = base;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { row: n + 1, message: format!("expected key=value, got `{line}`") })?;
        let value = value.trim();
        let bad = |_| Error::Parse { row: n + 1, message: format!("bad value `{value}` for {}", key.trim()) };
        match key.trim() {
            "v_threshold" => lif.v_threshold = value.parse().map_err(bad)?,
            "decay_u" => lif.decay_u = value.parse().map_err(bad)?,
            "decay_v" => lif.decay_v = value.parse().map_err(bad)?,
            "refractory_steps" => lif.refractory_steps = value.parse().map_err(bad)?,
            "timestep_ms" => {
                lif.timestep_ms = value
                    .parse()
                    .map_err(|_| Error::Parse { row: n + 1, message: format!("bad timestep_ms `{value}`") })?
            }
            _ => {}
        }
    }
    lif.validate()?;
    Ok(lif)
}
