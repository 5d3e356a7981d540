//! Binary PPM (P6) and PGM (P5) with a maxval of 255.

use crate::compositor::RgbImage;
use crate::error::{Error, Result};
use crate::types::BinaryMask;

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().flatten());
    out
}

pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height, "gray buffer size");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

/// 255 for set pixels, 0 elsewhere.
pub fn encode_pgm_mask(mask: &BinaryMask) -> Vec<u8> {
    let gray: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_pgm(mask.width(), mask.height(), &gray)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<u8>,
}

/// Reads the P5 files written by [`encode_pgm`]: single-space or newline
/// separated header fields, no comments, maxval 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::schema("pgm header", "unexpected end of header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::schema("pgm header", "expected P5 with maxval 255"));
    }
    let parse =
        |s: &str| s.parse::<usize>().map_err(|_| Error::schema("pgm header", format!("bad size {s:?}")));
    let (width, height) = (parse(&fields[1])?, parse(&fields[2])?);
    let expected =
        width.checked_mul(height).ok_or_else(|| Error::schema("pgm header", "image size overflows"))?;
    let gray = bytes.get(pos..).unwrap_or_default().to_vec();
    if gray.len() != expected {
        return Err(Error::Truncated { expected, actual: gray.len() });
    }
    Ok(Pgm { width, height, gray })
}
