//! Binned-SAH bounding volume hierarchy over shell triangles.

use super::intersect::{intersect_back_face, Shear};
use crate::geom::{Aabb, Ray, Vec3};

const BINS: usize = 12;
const MAX_LEAF: usize = 4;
const TRAVERSAL_COST: f64 = 1.0;
const INTERSECT_COST: f64 = 1.0;

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    // Leaf: first triangle. Inner: index of the left child (right is +1).
    first: u32,
    count: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct ShellBvh {
    nodes: Vec<Node>,
    tris: Vec<[Vec3; 3]>,
    // Original triangle index for each slot of `tris`.
    ids: Vec<u32>,
}

struct Prim {
    bounds: Aabb,
    centroid: Vec3,
    id: u32,
}

impl ShellBvh {
    pub fn build(triangles: &[[Vec3; 3]]) -> Self {
        let mut prims: Vec<Prim> = triangles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut b = Aabb::empty();
                t.iter().for_each(|p| b.grow(p));
                Prim {
                    bounds: b,
                    centroid: b.centroid(),
                    id: i as u32,
                }
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * prims.len().max(1));
        nodes.push(Node {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        });
        if !prims.is_empty() {
            let n = prims.len();
            subdivide(&mut nodes, 0, &mut prims, 0, n);
        }
        let tris = prims.iter().map(|p| triangles[p.id as usize]).collect();
        let ids = prims.iter().map(|p| p.id).collect();
        ShellBvh { nodes, tris, ids }
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Nearest back-face hit in `(t_min, t_max)`: (triangle index, t).
    pub fn trace(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<(u32, f64)> {
        if self.tris.is_empty() {
            return None;
        }
        let shear = Shear::new(&ray.dir);
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<(u32, f64)> = None;
        let mut t_far = t_max;
        self.nodes[0].bounds.intersect(ray, &inv, t_min, t_far)?;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.is_leaf() {
                let range = node.first as usize..(node.first + node.count) as usize;
                for i in range {
                    let [a, b, c] = &self.tris[i];
                    if let Some(t) = intersect_back_face(ray, &shear, a, b, c, t_min, t_far) {
                        t_far = t;
                        best = Some((self.ids[i], t));
                    }
                }
                continue;
            }
            let l = node.first as usize;
            let hl = self.nodes[l].bounds.intersect(ray, &inv, t_min, t_far);
            let hr = self.nodes[l + 1].bounds.intersect(ray, &inv, t_min, t_far);
            match (hl, hr) {
                (Some((tl, _)), Some((tr, _))) => {
                    // Push the farther child first so the nearer is popped next.
                    let (near, far) = if tl <= tr { (l, l + 1) } else { (l + 1, l) };
                    stack.push(far as u32);
                    stack.push(near as u32);
                }
                (Some(_), None) => stack.push(l as u32),
                (None, Some(_)) => stack.push((l + 1) as u32),
                (None, None) => {}
            }
        }
        best
    }

    /// Checks that every leaf box encloses its triangles and every triangle sits in one leaf.
    pub fn check_invariants(&self) -> bool {
        let mut seen = vec![false; self.tris.len()];
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.is_leaf() {
                for i in node.first as usize..(node.first + node.count) as usize {
                    if seen[i] {
                        return false;
                    }
                    seen[i] = true;
                    for p in &self.tris[i] {
                        let inside = (0..3)
                            .all(|a| p[a] >= node.bounds.min[a] && p[a] <= node.bounds.max[a]);
                        if !inside {
                            return false;
                        }
                    }
                }
            } else if !self.tris.is_empty() {
                stack.push(node.first as usize);
                stack.push(node.first as usize + 1);
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn subdivide(nodes: &mut Vec<Node>, at: usize, prims: &mut [Prim], first: usize, count: usize) {
    let slice = &mut prims[first..first + count];
    let bounds = slice.iter().fold(Aabb::empty(), |b, p| b.union(&p.bounds));
    nodes[at] = Node {
        bounds,
        first: first as u32,
        count: count as u32,
    };
    if count <= 1 {
        return;
    }

    let mut cbounds = Aabb::empty();
    slice.iter().for_each(|p| cbounds.grow(&p.centroid));
    let extent = cbounds.max - cbounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };

    let mid = if extent[axis] <= 0.0 {
        if count <= MAX_LEAF {
            return;
        }
        // All centroids coincide: split by count.
        count / 2
    } else {
        let lo = cbounds.min[axis];
        let scale = BINS as f64 / extent[axis];
        let bin_of = |p: &Prim| (((p.centroid[axis] - lo) * scale) as usize).min(BINS - 1);
        let mut bin_bounds = [Aabb::empty(); BINS];
        let mut bin_count = [0usize; BINS];
        for p in slice.iter() {
            let b = bin_of(p);
            bin_bounds[b] = bin_bounds[b].union(&p.bounds);
            bin_count[b] += 1;
        }
        let mut best = (f64::INFINITY, 0usize);
        for split in 1..BINS {
            let (mut lb, mut lc) = (Aabb::empty(), 0);
            for b in 0..split {
                lb = lb.union(&bin_bounds[b]);
                lc += bin_count[b];
            }
            let (mut rb, mut rc) = (Aabb::empty(), 0);
            for b in split..BINS {
                rb = rb.union(&bin_bounds[b]);
                rc += bin_count[b];
            }
            if lc == 0 || rc == 0 {
                continue;
            }
            let cost = lc as f64 * lb.surface_area() + rc as f64 * rb.surface_area();
            if cost < best.0 {
                best = (cost, split);
            }
        }
        let leaf_cost = INTERSECT_COST * count as f64;
        let sa = bounds.surface_area().max(f64::MIN_POSITIVE);
        let split_cost = TRAVERSAL_COST + INTERSECT_COST * best.0 / sa;
        if count <= MAX_LEAF && split_cost >= leaf_cost {
            return;
        }
        if best.0.is_infinite() {
            count / 2
        } else {
            let split = best.1;
            partition(slice, |p| bin_of(p) < split)
        }
    };
    let mid = if mid == 0 || mid == count {
        slice.sort_by(|a, b| a.centroid[axis].total_cmp(&b.centroid[axis]));
        count / 2
    } else {
        mid
    };

    let left = nodes.len();
    let empty = Node {
        bounds: Aabb::empty(),
        first: 0,
        count: 0,
    };
    nodes.push(empty);
    nodes.push(empty);
    nodes[at].first = left as u32;
    nodes[at].count = 0;
    subdivide(nodes, left, prims, first, mid);
    subdivide(nodes, left + 1, prims, first + mid, count - mid);
}

fn partition<F: Fn(&Prim) -> bool>(slice: &mut [Prim], pred: F) -> usize {
    let mut i = 0;
    for j in 0..slice.len() {
        if pred(&slice[j]) {
            slice.swap(i, j);
            i += 1;
        }
    }
    i
}
