//! `SDM1` binary maps.
//!
//! Layout: the magic `SDM1`, then little-endian `u32` width, height and
//! channel count, then `channels * height * width` little-endian `f32`
//! values, channel-planar and row-major within each plane.

use crate::codec::{LayeringMap, SemDistMap};
use crate::error::{Error, Result};

pub const SDM_MAGIC: &[u8; 4] = b"SDM1";
const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct SdmData {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub values: Vec<f32>,
}

pub fn encode_sdm(data: &SdmData) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.values.len());
    out.extend_from_slice(SDM_MAGIC);
    for v in [data.width, data.height, data.channels] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &data.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_sdm(bytes: &[u8]) -> Result<SdmData> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if &magic != SDM_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("length checked"));
    let (width, height, channels) = (word(0), word(1), word(2));
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::invalid("sdm header", format!("zero size {width}x{height}x{channels}")));
    }
    let expected = (width as u64)
        .checked_mul(height as u64)
        .and_then(|n| n.checked_mul(channels as u64))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::invalid("sdm header", "payload size overflows"))?;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes { expected, actual: bytes.len() - expected });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    Ok(SdmData { width, height, channels, values })
}

fn dim(v: usize, what: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(what, format!("{v} does not fit in u32")))
}

pub fn write_semdist(map: &SemDistMap) -> Result<Vec<u8>> {
    Ok(encode_sdm(&SdmData {
        width: dim(map.width(), "width")?,
        height: dim(map.height(), "height")?,
        channels: 1,
        values: map.values().to_vec(),
    }))
}

pub fn read_semdist(bytes: &[u8]) -> Result<SemDistMap> {
    let data = decode_sdm(bytes)?;
    if data.channels != 1 {
        return Err(Error::invalid(
            "channels",
            format!("sem-dist map must have 1 channel, file has {}", data.channels),
        ));
    }
    SemDistMap::new(data.width as usize, data.height as usize, data.values)
}

pub fn write_layering(map: &LayeringMap) -> Result<Vec<u8>> {
    Ok(encode_sdm(&SdmData {
        width: dim(map.width(), "width")?,
        height: dim(map.height(), "height")?,
        channels: dim(map.channels(), "channels")?,
        values: map.data().to_vec(),
    }))
}

pub fn read_layering(bytes: &[u8]) -> Result<LayeringMap> {
    let data = decode_sdm(bytes)?;
    LayeringMap::new(data.width as usize, data.height as usize, data.channels as usize, data.values)
}
