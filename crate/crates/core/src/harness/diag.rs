//! Image differences and fragment-count heatmaps.

use super::image::{ramp_image, Image};
use super::render::RankStats;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("image sizes differ: {a:?} vs {b:?}")]
pub struct DimensionMismatch {
    pub a: (usize, usize),
    pub b: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct ImageDiff {
    /// Per-pixel rgb L2 distance through [`heat_ramp`](super::image::heat_ramp),
    /// scaled by the largest distance in the image.
    pub heatmap: Image,
    pub l2: Vec<f32>,
    /// Largest per-channel difference, alpha included.
    pub max_abs: f32,
    pub mean_l2: f64,
}

pub fn diff_images(a: &Image, b: &Image) -> Result<ImageDiff, DimensionMismatch> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(DimensionMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    let l2: Vec<f32> = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| {
            let d: f64 = (0..3).map(|c| (p[c] as f64 - q[c] as f64).powi(2)).sum();
            d.sqrt() as f32
        })
        .collect();
    let max_l2 = l2.iter().copied().fold(0.0, f32::max);
    let mean_l2 = if l2.is_empty() {
        0.0
    } else {
        l2.iter().map(|&v| v as f64).sum::<f64>() / l2.len() as f64
    };
    Ok(ImageDiff {
        heatmap: ramp_image(a.width, a.height, &l2, max_l2),
        max_abs: a.max_abs_diff(b),
        l2,
        mean_l2,
    })
}

#[derive(Clone, Debug)]
pub struct Heatmaps {
    pub per_rank: Vec<Image>,
    pub combined: Image,
    /// Elementwise sum of the per-rank counts.
    pub combined_counts: Vec<u32>,
}

/// Per-rank fragment-count images plus their sum, all on one scale so the
/// brightest pixel of the combined map is white.
pub fn fragment_heatmaps(ranks: &[RankStats], width: usize, height: usize) -> Heatmaps {
    let mut combined_counts = vec![0u32; width * height];
    for r in ranks {
        for (s, &c) in combined_counts.iter_mut().zip(&r.pixel_counts) {
            *s += c;
        }
    }
    let max = combined_counts.iter().copied().max().unwrap_or(0) as f32;
    let as_f32 = |v: &[u32]| v.iter().map(|&c| c as f32).collect::<Vec<_>>();
    Heatmaps {
        per_rank: ranks
            .iter()
            .map(|r| ramp_image(width, height, &as_f32(&r.pixel_counts), max))
            .collect(),
        combined: ramp_image(width, height, &as_f32(&combined_counts), max),
        combined_counts,
    }
}
