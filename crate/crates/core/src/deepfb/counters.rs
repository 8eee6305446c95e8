//! Per-pixel fragment counts packed at 2, 4, 8 or 32 bits each.
//!
//! Wire form: `u8 width | u32 count | payload`, little-endian; entry `i`
//! occupies bits `[i*w, (i+1)*w)` of the payload, low bits first.

use super::fragment::DecodeError;

pub const WIDTHS: [u8; 4] = [2, 4, 8, 32];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterBlock {
    pub width: u8,
    pub count: u32,
    pub payload: Vec<u8>,
}

/// Smallest supported width `w` with `2^w > max`.
pub fn counter_width(max: u32) -> u8 {
    WIDTHS
        .into_iter()
        .find(|&w| w == 32 || (max as u64) < (1u64 << w))
        .expect("32 bits always fit")
}

pub fn encode_counters(counts: &[u32]) -> CounterBlock {
    let max = counts.iter().copied().max().unwrap_or(0);
    let width = counter_width(max);
    let payload = if width == 32 {
        counts.iter().flat_map(|c| c.to_le_bytes()).collect()
    } else {
        let w = width as usize;
        let per_byte = 8 / w;
        let mut out = vec![0u8; counts.len().div_ceil(per_byte)];
        for (i, &c) in counts.iter().enumerate() {
            out[i / per_byte] |= (c as u8) << ((i % per_byte) * w);
        }
        out
    };
    CounterBlock {
        width,
        count: counts.len() as u32,
        payload,
    }
}

pub fn decode_counters(block: &CounterBlock) -> Result<Vec<u32>, DecodeError> {
    let n = block.count as usize;
    let w = block.width as usize;
    if !WIDTHS.contains(&block.width) {
        return Err(DecodeError::CounterWidth(block.width));
    }
    let need = (n * w).div_ceil(8);
    if block.payload.len() < need {
        return Err(DecodeError::TruncatedCounters {
            need,
            have: block.payload.len(),
        });
    }
    if w == 32 {
        return Ok(block
            .payload
            .chunks_exact(4)
            .take(n)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect());
    }
    let per_byte = 8 / w;
    let mask = ((1u16 << w) - 1) as u8;
    Ok((0..n)
        .map(|i| ((block.payload[i / per_byte] >> ((i % per_byte) * w)) & mask) as u32)
        .collect())
}

impl CounterBlock {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.push(self.width);
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CounterBlock, DecodeError> {
        if bytes.len() < 5 {
            return Err(DecodeError::TruncatedCounters {
                need: 5,
                have: bytes.len(),
            });
        }
        let width = bytes[0];
        if !WIDTHS.contains(&width) {
            return Err(DecodeError::CounterWidth(width));
        }
        let count = u32::from_le_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]);
        let need = (count as usize * width as usize).div_ceil(8);
        let payload = &bytes[5..];
        if payload.len() != need {
            return Err(DecodeError::TruncatedCounters {
                need: need + 5,
                have: bytes.len(),
            });
        }
        Ok(CounterBlock {
            width,
            count,
            payload: payload.to_vec(),
        })
    }
}
