//! `SPK1` spike files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"SPK1"
//! u16 signals, u16 thresholds, u16 polarities, u32 timesteps, u32 events
//! events x (u16 input index, u32 timestep)
//! ```
//!
//! The input index is `((signal * thresholds) + threshold) * 2 + plane`.
//! Events are written sorted by timestep, then input index.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{SpikeTensor, POLARITIES};
use crate::error::{Error, Result};

pub const SPIKE_MAGIC: &[u8; 4] = b"SPK1";

pub fn encode_spikes(tensor: &SpikeTensor) -> Vec<u8> {
    let frames = tensor.frames();
    let count: usize = frames.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(18 + count * 6);
    out.write_all(SPIKE_MAGIC).unwrap();
    out.write_u16::<LittleEndian>(tensor.signals() as u16).unwrap();
    out.write_u16::<LittleEndian>(tensor.thresholds() as u16).unwrap();
    out.write_u16::<LittleEndian>(POLARITIES as u16).unwrap();
    out.write_u32::<LittleEndian>(tensor.timesteps() as u32).unwrap();
    out.write_u32::<LittleEndian>(count as u32).unwrap();
    for (t, frame) in frames.iter().enumerate() {
        for &input in frame {
            out.write_u16::<LittleEndian>(input as u16).unwrap();
            out.write_u32::<LittleEndian>(t as u32).unwrap();
        }
    }
    out
}

pub fn decode_spikes(bytes: &[u8]) -> Result<SpikeTensor> {
    let truncated = |_| Error::Format("truncated SPK1 data".into());
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != SPIKE_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected SPK1")));
    }
    let signals = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
    let thresholds = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
    let polarities = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
    let timesteps = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    if polarities != POLARITIES {
        return Err(Error::Format(format!("{polarities} polarity planes, expected 2")));
    }
    if thresholds == 0 {
        return Err(Error::Format("zero thresholds".into()));
    }
    let mut tensor = SpikeTensor::zeros(signals, thresholds, timesteps);
    for _ in 0..count {
        let input = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
        let t = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        if t >= timesteps {
            return Err(Error::Format(format!("event at timestep {t} >= {timesteps}")));
        }
        tensor.set_input(input, t)?;
    }
    if (r.position() as usize) != bytes.len() {
        return Err(Error::Format("trailing bytes after SPK1 events".into()));
    }
    Ok(tensor)
}

pub fn write_spikes(tensor: &SpikeTensor, path: &Path) -> Result<()> {
    fs::write(path, encode_spikes(tensor)).map_err(|e| Error::io(path, e))
}

pub fn read_spikes(path: &Path) -> Result<SpikeTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_spikes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Polarity;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut t = SpikeTensor::zeros(7, 5, 300);
        t.set(1, 2, Polarity::Negative, 257).unwrap();
        let bytes = encode_spikes(&t);
        assert_eq!(&bytes[..4], b"SPK1");
        assert_eq!(&bytes[4..10], &[7, 0, 5, 0, 2, 0]);
        assert_eq!(&bytes[10..14], &300u32.to_le_bytes());
        assert_eq!(&bytes[14..18], &1u32.to_le_bytes());
        // ((1 * 5) + 2) * 2 + 1 = 15
        assert_eq!(&bytes[18..20], &15u16.to_le_bytes());
        assert_eq!(&bytes[20..24], &257u32.to_le_bytes());
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_spikes(b"SPK2").is_err());
        let mut bytes = encode_spikes(&SpikeTensor::zeros(7, 5, 3));
        bytes.push(0);
        assert!(decode_spikes(&bytes).is_err());
        assert!(decode_spikes(&bytes[..10]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(cells in proptest::collection::vec((0usize..7, 0usize..5, any::<bool>(), 0usize..40), 0..200)) {
            let mut t = SpikeTensor::zeros(7, 5, 40);
            for (s, i, neg, step) in cells {
                let p = if neg { Polarity::Negative } else { Polarity::Positive };
                let _ = t.set(s, i, p, step);
            }
            let back = decode_spikes(&encode_spikes(&t)).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
