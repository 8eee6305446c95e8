//! Per-pixel fragment lists.
//!
//! Two-pass mode first counts fragments per pixel, then, after an exclusive
//! prefix sum sized the storage, writes them a second time into place.
//! Single-pass mode keeps a depth-sorted list of at most `K` fragments per
//! pixel and resolves overflow by dropping or merging.

use super::fragment::Fragment;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Overflow {
    /// Keep the nearest `K`.
    Drop,
    /// Fold the most transparent fragment into its neighbor.
    Merge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoreMode {
    TwoPass,
    SinglePass { k: usize, overflow: Overflow },
}

pub const DEFAULT_K: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("pixel {pixel} received more fragments than counted ({quota})")]
    QuotaExceeded { pixel: usize, quota: u32 },
    #[error("pixel {pixel} out of range ({pixels} pixels)")]
    PixelRange { pixel: usize, pixels: usize },
    #[error("store phase already begun or not in two-pass mode")]
    Phase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Counting,
    Storing,
}

#[derive(Clone, Debug)]
pub struct PixelFragmentStore {
    mode: StoreMode,
    phase: Phase,
    counts: Vec<u32>,
    // Two-pass: flat storage at prefix offsets. Single-pass: one list per pixel.
    offsets: Vec<u32>,
    flat: Vec<Fragment>,
    lists: Vec<Vec<Fragment>>,
    // Two-pass: fragments stored so far per pixel.
    fill: Vec<u32>,
    overflows: u64,
}

/// Result of the counting stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counts {
    pub counts: Vec<u32>,
    pub prefix: Vec<u32>,
    pub total: u32,
}

/// Exclusive prefix sum plus total.
pub fn exclusive_scan(counts: &[u32]) -> (Vec<u32>, u32) {
    let mut prefix = Vec::with_capacity(counts.len());
    let mut acc = 0u32;
    for &c in counts {
        prefix.push(acc);
        acc += c;
    }
    (prefix, acc)
}

fn insert_sorted(list: &mut Vec<Fragment>, f: Fragment) {
    // After any equal depths: ties keep arrival order.
    let at = list.partition_point(|g| g.depth <= f.depth);
    list.insert(at, f);
}

impl PixelFragmentStore {
    /// Panics if a single-pass capacity is zero.
    pub fn new(pixels: usize, mode: StoreMode) -> Self {
        if let StoreMode::SinglePass { k, .. } = mode {
            assert!(k >= 1, "single-pass lists need K >= 1");
        }
        let lists = match mode {
            StoreMode::TwoPass => Vec::new(),
            StoreMode::SinglePass { .. } => vec![Vec::new(); pixels],
        };
        PixelFragmentStore {
            mode,
            phase: Phase::Counting,
            counts: vec![0; pixels],
            offsets: Vec::new(),
            flat: Vec::new(),
            lists,
            fill: Vec::new(),
            overflows: 0,
        }
    }

    pub fn mode(&self) -> StoreMode {
        self.mode
    }

    pub fn pixels(&self) -> usize {
        self.counts.len()
    }

    /// Whether a two-pass store is still in its counting stage.
    pub fn is_counting(&self) -> bool {
        self.mode == StoreMode::TwoPass && self.phase == Phase::Counting
    }

    /// Number of single-pass writes that hit a full list.
    pub fn overflows(&self) -> u64 {
        self.overflows
    }

    /// Two-pass only: ends counting, sizes storage from the prefix sum.
    pub fn begin_store(&mut self) -> Result<(), StoreError> {
        if !self.is_counting() {
            return Err(StoreError::Phase);
        }
        let (prefix, total) = exclusive_scan(&self.counts);
        self.offsets = prefix;
        self.flat = Vec::with_capacity(total as usize);
        self.flat
            .resize(total as usize, Fragment::new([0.0; 3], 0.0, 0.0));
        self.phase = Phase::Storing;
        self.fill = vec![0; self.counts.len()];
        Ok(())
    }

    pub fn write(&mut self, pixel: usize, f: Fragment) -> Result<(), StoreError> {
        if pixel >= self.counts.len() {
            return Err(StoreError::PixelRange {
                pixel,
                pixels: self.counts.len(),
            });
        }
        if f.alpha == 0.0 {
            return Ok(());
        }
        match (self.mode, self.phase) {
            (StoreMode::TwoPass, Phase::Counting) => self.counts[pixel] += 1,
            (StoreMode::TwoPass, Phase::Storing) => {
                let quota = self.counts[pixel];
                let filled = self.fill[pixel];
                if filled >= quota {
                    return Err(StoreError::QuotaExceeded { pixel, quota });
                }
                self.flat[(self.offsets[pixel] + filled) as usize] = f;
                self.fill[pixel] += 1;
            }
            (StoreMode::SinglePass { k, overflow }, _) => {
                let list = &mut self.lists[pixel];
                if list.len() < k {
                    insert_sorted(list, f);
                } else {
                    self.overflows += 1;
                    match overflow {
                        Overflow::Drop => {
                            insert_sorted(list, f);
                            list.pop();
                        }
                        Overflow::Merge => merge_into(list, f, k),
                    }
                }
                self.counts[pixel] = list.len() as u32;
            }
        }
        Ok(())
    }

    pub fn count(&self, pixel: usize) -> u32 {
        self.counts[pixel]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Depth-sorted fragments of one pixel.
    pub fn pixel_fragments(&self, pixel: usize) -> Vec<Fragment> {
        match self.mode {
            StoreMode::TwoPass => {
                if self.phase == Phase::Counting {
                    return Vec::new();
                }
                let start = self.offsets[pixel] as usize;
                let mut v = self.flat[start..start + self.fill[pixel] as usize].to_vec();
                v.sort_by(|a, b| a.depth.total_cmp(&b.depth));
                v
            }
            StoreMode::SinglePass { .. } => self.lists[pixel].clone(),
        }
    }

    pub fn finalize_counts(&self) -> Counts {
        let counts = match self.mode {
            StoreMode::TwoPass if self.phase == Phase::Storing => self.fill.clone(),
            _ => self.counts.clone(),
        };
        let (prefix, total) = exclusive_scan(&counts);
        Counts {
            counts,
            prefix,
            total,
        }
    }

    /// All fragments in pixel order, each pixel's run depth-sorted, starting
    /// at `counts.prefix[p]`.
    pub fn build_send_buffer(&self, counts: &Counts) -> Vec<Fragment> {
        let mut out = Vec::with_capacity(counts.total as usize);
        for p in 0..self.pixels() {
            debug_assert_eq!(out.len(), counts.prefix[p] as usize);
            out.extend(self.pixel_fragments(p));
        }
        out
    }
}

/// Makes room in a full list by folding its most transparent fragment into
/// the one in front of it (or behind it, if it is the front-most), then
/// inserts `f`. With `k == 1` the new fragment is folded in directly.
fn merge_into(list: &mut Vec<Fragment>, f: Fragment, k: usize) {
    if k <= 1 {
        let old = list[0];
        list[0] = if f.depth < old.depth {
            f.over(&old)
        } else {
            old.over(&f)
        };
        return;
    }
    let mut lowest = 0;
    for (i, g) in list.iter().enumerate() {
        if g.alpha < list[lowest].alpha {
            lowest = i;
        }
    }
    let front = lowest.saturating_sub(1).min(list.len() - 2);
    list[front] = list[front].over(&list[front + 1]);
    list.remove(front + 1);
    insert_sorted(list, f);
}
