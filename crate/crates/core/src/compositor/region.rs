use std::ops::Range;

/// Contiguous row-major pixel ranges, one per rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionAssignment {
    pixels: usize,
    ranks: usize,
}

impl RegionAssignment {
    pub fn new(pixels: usize, ranks: usize) -> Self {
        assert!(ranks >= 1);
        RegionAssignment { pixels, ranks }
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    fn bound(&self, r: usize) -> usize {
        r * self.pixels / self.ranks
    }

    pub fn range(&self, rank: usize) -> Range<usize> {
        self.bound(rank)..self.bound(rank + 1)
    }

    pub fn owner(&self, pixel: usize) -> usize {
        // Largest r with bound(r) <= pixel.
        let mut r = (pixel * self.ranks / self.pixels.max(1)).min(self.ranks - 1);
        while self.bound(r) > pixel {
            r -= 1;
        }
        while r + 1 < self.ranks && self.bound(r + 1) <= pixel {
            r += 1;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_partition_evenly() {
        for pixels in [0, 1, 7, 64, 1000] {
            for ranks in 1..10 {
                let a = RegionAssignment::new(pixels, ranks);
                let mut next = 0;
                let mut sizes = Vec::new();
                for r in 0..ranks {
                    let range = a.range(r);
                    assert_eq!(range.start, next);
                    next = range.end;
                    sizes.push(range.len());
                    for p in range {
                        assert_eq!(a.owner(p), r);
                    }
                }
                assert_eq!(next, pixels);
                assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }
}
