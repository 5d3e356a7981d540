use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::BinaryMask;

/// Uncompressed COCO-style run-length mask. Runs alternate 0s and 1s starting
/// with 0s, scanning column by column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RleDoc", into = "RleDoc")]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RleDoc {
    /// `[height, width]`, as in COCO.
    size: [usize; 2],
    counts: Vec<u32>,
}

impl From<RleMask> for RleDoc {
    fn from(rle: RleMask) -> Self {
        RleDoc { size: [rle.height, rle.width], counts: rle.counts }
    }
}

impl TryFrom<RleDoc> for RleMask {
    type Error = String;

    fn try_from(doc: RleDoc) -> std::result::Result<Self, String> {
        let rle = RleMask { width: doc.size[1], height: doc.size[0], counts: doc.counts };
        rle.check().map_err(|e| e.to_string())?;
        Ok(rle)
    }
}

impl RleMask {
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("rle", "width and height must be at least 1"));
        }
        let expected = (self.width as u64)
            .checked_mul(self.height as u64)
            .ok_or_else(|| Error::invalid("rle", "size overflows"))?;
        let sum: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if sum != expected {
            return Err(Error::RleCountMismatch { sum, expected });
        }
        Ok(())
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let (w, h) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let bit = mask.get(x, y);
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask { width: w, height: h, counts }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask> {
    rle.check()?;
    let (w, h) = (rle.width, rle.height);
    let mut mask = BinaryMask::empty(w, h)?;
    let mut index = 0usize;
    for (i, &count) in rle.counts.iter().enumerate() {
        let bit = i % 2 == 1;
        for _ in 0..count {
            if bit {
                mask.set(index / h, index % h, true);
            }
            index += 1;
        }
    }
    Ok(mask)
}
