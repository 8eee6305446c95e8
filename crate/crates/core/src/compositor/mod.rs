//! Deep compositing: the over operator, per-pixel visibility-order merges and
//! the direct-send exchange of variable-length fragment lists.

mod protocol;
mod region;
pub mod transport;

pub use protocol::{
    deep_composite, frame, unframe, CompositeOutput, ExchangeStats, ProtocolError, Step,
};
pub use region::RegionAssignment;
pub use transport::{
    run_ranks, InProcessEndpoint, InProcessFabric, Transport, TransportError, MASTER,
};

use crate::deepfb::Fragment;
use crate::harness::image::Image;

pub type Rgba = [f64; 4];

/// Premultiplied `front` over `back`.
#[inline]
pub fn over(front: Rgba, back: Rgba) -> Rgba {
    let k = 1.0 - front[3];
    [
        front[0] + k * back[0],
        front[1] + k * back[1],
        front[2] + k * back[2],
        front[3] + k * back[3],
    ]
}

/// Front-to-back fold of fragments already in visibility order.
pub fn fold<'a>(frags: impl IntoIterator<Item = &'a Fragment>) -> Rgba {
    frags
        .into_iter()
        .fold([0.0; 4], |acc, f| over(acc, f.rgba()))
}

pub fn to_pixel(c: Rgba) -> [f32; 4] {
    c.map(|v| v as f32)
}

/// Merges depth-sorted lists by (depth, list index, position) and folds.
pub fn composite_pixel(lists: &[&[Fragment]]) -> Rgba {
    let mut heads = vec![0usize; lists.len()];
    let mut acc = [0.0; 4];
    loop {
        let mut best: Option<usize> = None;
        for (r, l) in lists.iter().enumerate() {
            if let Some(f) = l.get(heads[r]) {
                // Strict comparison keeps the lower rank on ties.
                if best.is_none_or(|b| f.depth < lists[b][heads[b]].depth) {
                    best = Some(r);
                }
            }
        }
        let Some(r) = best else {
            return acc;
        };
        acc = over(acc, lists[r][heads[r]].rgba());
        heads[r] += 1;
    }
}

/// One rank's fragments of a pixel folded into one, placed at the nearest depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreFolded {
    pub rgba: Rgba,
    pub depth: f32,
}

pub fn prefold(frags: &[Fragment]) -> Option<PreFolded> {
    let first = frags.first()?;
    Some(PreFolded {
        rgba: fold(frags),
        depth: first.depth,
    })
}

/// Baseline that sends a single fragment per rank and pixel: ordering is
/// only correct when each rank's fragments of a pixel are contiguous in depth.
pub fn single_fragment_composite(
    width: usize,
    height: usize,
    per_rank: &[Vec<Option<PreFolded>>],
) -> Image {
    let mut img = Image::new(width, height);
    for (p, out) in img.pixels.iter_mut().enumerate() {
        let mut v: Vec<(usize, PreFolded)> = per_rank
            .iter()
            .enumerate()
            .filter_map(|(r, img)| img[p].map(|f| (r, f)))
            .collect();
        v.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
        *out = to_pixel(v.iter().fold([0.0; 4], |acc, (_, f)| over(acc, f.rgba)));
    }
    img
}
