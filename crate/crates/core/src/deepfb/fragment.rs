use crate::marcher::Accumulator;
use thiserror::Error;

/// Premultiplied color, opacity and depth of one integrated segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub color: [f32; 3],
    pub alpha: f32,
    pub depth: f32,
}

impl Fragment {
    pub fn new(color: [f32; 3], alpha: f32, depth: f32) -> Self {
        Fragment {
            color,
            alpha,
            depth,
        }
    }

    pub fn from_accumulator(acc: &Accumulator, depth: f64) -> Self {
        Fragment {
            color: acc.color.map(|c| c as f32),
            alpha: acc.alpha as f32,
            depth: depth as f32,
        }
    }

    pub fn rgba(&self) -> [f64; 4] {
        [
            self.color[0] as f64,
            self.color[1] as f64,
            self.color[2] as f64,
            self.alpha as f64,
        ]
    }

    /// `self` over `back`, keeping this fragment's depth.
    pub fn over(&self, back: &Fragment) -> Fragment {
        let k = 1.0 - self.alpha;
        Fragment {
            color: [
                self.color[0] + k * back.color[0],
                self.color[1] + k * back.color[1],
                self.color[2] + k * back.color[2],
            ],
            alpha: self.alpha + k * back.alpha,
            depth: self.depth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    /// r, g, b, z, alpha as f32: 20 bytes.
    #[default]
    Float,
    /// r, g, b, alpha as u8 then z as f32: 8 bytes.
    Fixed,
}

impl Precision {
    pub fn fragment_bytes(self) -> usize {
        match self {
            Precision::Float => 20,
            Precision::Fixed => 8,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("fragment stream of {len} bytes is not a multiple of {size}")]
    TruncatedFragments { len: usize, size: usize },
    #[error("counter block truncated: need {need} bytes, have {have}")]
    TruncatedCounters { need: usize, have: usize },
    #[error("unsupported counter width {0}")]
    CounterWidth(u8),
}

fn quantize(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Worst decode error of a fixed-point channel: half a quantization step,
/// plus the f32 rounding of the decoded value.
pub const FIXED_TOLERANCE: f32 = 1.0 / 510.0 + f32::EPSILON;

pub fn encode_fragments_into(frags: &[Fragment], precision: Precision, out: &mut Vec<u8>) {
    out.reserve(frags.len() * precision.fragment_bytes());
    for f in frags {
        match precision {
            Precision::Float => {
                for v in [f.color[0], f.color[1], f.color[2], f.depth, f.alpha] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Precision::Fixed => {
                out.extend_from_slice(&[
                    quantize(f.color[0]),
                    quantize(f.color[1]),
                    quantize(f.color[2]),
                    quantize(f.alpha),
                ]);
                out.extend_from_slice(&f.depth.to_le_bytes());
            }
        }
    }
}

pub fn encode_fragments(frags: &[Fragment], precision: Precision) -> Vec<u8> {
    let mut out = Vec::new();
    encode_fragments_into(frags, precision, &mut out);
    out
}

pub fn decode_fragments(bytes: &[u8], precision: Precision) -> Result<Vec<Fragment>, DecodeError> {
    let size = precision.fragment_bytes();
    if !bytes.len().is_multiple_of(size) {
        return Err(DecodeError::TruncatedFragments {
            len: bytes.len(),
            size,
        });
    }
    let f32_at = |c: &[u8], i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]);
    Ok(bytes
        .chunks_exact(size)
        .map(|c| match precision {
            Precision::Float => Fragment {
                color: [f32_at(c, 0), f32_at(c, 4), f32_at(c, 8)],
                depth: f32_at(c, 12),
                alpha: f32_at(c, 16),
            },
            Precision::Fixed => Fragment {
                color: [
                    c[0] as f32 / 255.0,
                    c[1] as f32 / 255.0,
                    c[2] as f32 / 255.0,
                ],
                alpha: c[3] as f32 / 255.0,
                depth: f32_at(c, 4),
            },
        })
        .collect())
}
