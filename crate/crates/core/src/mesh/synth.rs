//! Structured test volumes split into (possibly non-convex) clusters.
//!
//! A box is divided into `nx × ny × nz` cells. Each cell is meshed with one
//! element kind using decompositions that stay conforming across cells:
//! Kuhn tets and xy-split wedges both cut every axis-aligned face along the
//! diagonal through the cell's low corner, pyramid cells put an extra vertex
//! at the cell center. Cells are then assigned to clusters by a pattern.

use super::{Cluster, Element, ElementKind, Mesh, MeshError, ScalarFields};
use crate::geom::{orient3d, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementMix {
    Tet,
    Pyr,
    Wed,
    Hex,
    /// z-layers of hex/pyramid cells, a pyramid+tet transition layer, wedges, then tets.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionPattern {
    /// Contiguous slabs along x.
    Slabs,
    /// Octant blocks; 8 clusters take one octant each, 2 clusters alternate by parity.
    Checkerboard,
    /// Single-cell-wide teeth along x cycling through the clusters. Clusters 0 and 1
    /// are joined by spines on the low and high y rows.
    InterleavedCombs,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarFieldKind {
    /// Distance from the (time-shifted) box center over the half diagonal.
    CenterDistance,
    /// Smooth bump `max(0, 1 - (r / radius)^2)` around the center.
    SphereDensity { radius: f64 },
    /// Normalized x coordinate.
    LinearX,
}

impl ScalarFieldKind {
    fn eval(&self, p: &Vec3, lo: &Vec3, hi: &Vec3, timestep: usize) -> f64 {
        let mut c = (lo + hi) * 0.5;
        c.x += 0.05 * (hi.x - lo.x) * timestep as f64;
        match *self {
            ScalarFieldKind::CenterDistance => (p - c).norm() / ((hi - lo).norm() * 0.5),
            ScalarFieldKind::SphereDensity { radius } => {
                let r = (p - c).norm() / radius;
                (1.0 - r * r).max(0.0)
            }
            ScalarFieldKind::LinearX => (p.x - lo.x) / (hi.x - lo.x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    /// Cell counts per axis.
    pub dims: [usize; 3],
    pub mix: ElementMix,
    pub pattern: PartitionPattern,
    pub clusters: usize,
    /// Ranks to spread clusters over (contiguous blocks of cluster ids).
    pub ranks: usize,
    pub lo: Vec3,
    pub hi: Vec3,
    pub fields: Vec<ScalarFieldKind>,
    pub timesteps: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dims: [4, 4, 4],
            mix: ElementMix::Tet,
            pattern: PartitionPattern::Slabs,
            clusters: 2,
            ranks: 1,
            lo: Vec3::repeat(-1.0),
            hi: Vec3::repeat(1.0),
            fields: vec![ScalarFieldKind::CenterDistance],
            timesteps: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CellKind {
    Tet,
    Pyr,
    Wed,
    Hex,
    /// Five pyramids plus the top face split into two tets.
    Transition,
}

/// Builds the clusters described by `spec`.
pub fn make_synthetic_partition(spec: &SyntheticSpec) -> Result<Vec<Cluster>, MeshError> {
    let [nx, ny, nz] = spec.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(MeshError::Unsupported(format!(
            "dims {:?} must be at least 2 per axis",
            spec.dims
        )));
    }
    if spec.clusters == 0 || spec.ranks == 0 {
        return Err(MeshError::Unsupported(
            "need at least one cluster and one rank".into(),
        ));
    }
    if spec.mix == ElementMix::Mixed && nz < 4 {
        return Err(MeshError::Unsupported("mixed elements need nz >= 4".into()));
    }
    let c = spec.clusters;
    match spec.pattern {
        PartitionPattern::Slabs if c > nx => {
            return Err(MeshError::Unsupported(format!(
                "{c} slabs do not fit in {nx} cells"
            )));
        }
        PartitionPattern::Checkerboard if c != 2 && c != 8 => {
            return Err(MeshError::Unsupported(
                "checkerboard supports 2 or 8 clusters".into(),
            ));
        }
        PartitionPattern::InterleavedCombs if c < 2 || ny < 3 || nx <= c => {
            return Err(MeshError::Unsupported(
                "interleaved combs need >= 2 clusters, ny >= 3 and nx > clusters".into(),
            ));
        }
        _ => {}
    }

    let cell_kind = |k: usize, i: usize, j: usize| -> CellKind {
        match spec.mix {
            ElementMix::Tet => CellKind::Tet,
            ElementMix::Pyr => CellKind::Pyr,
            ElementMix::Wed => CellKind::Wed,
            ElementMix::Hex => CellKind::Hex,
            ElementMix::Mixed => {
                let q = nz / 4;
                if k < q {
                    if (i + j + k).is_multiple_of(2) {
                        CellKind::Hex
                    } else {
                        CellKind::Pyr
                    }
                } else if k == q {
                    CellKind::Transition
                } else if k <= 2 * q {
                    CellKind::Wed
                } else {
                    CellKind::Tet
                }
            }
        }
    };
    let cluster_of = |i: usize, j: usize, k: usize| -> usize {
        match spec.pattern {
            PartitionPattern::Slabs => i * c / nx,
            PartitionPattern::Checkerboard => {
                let (bi, bj, bk) = (2 * i / nx, 2 * j / ny, 2 * k / nz);
                if c == 8 {
                    bi + 2 * bj + 4 * bk
                } else {
                    (bi + bj + bk) % 2
                }
            }
            PartitionPattern::InterleavedCombs => {
                if j == 0 {
                    0
                } else if j == ny - 1 {
                    1
                } else {
                    i % c
                }
            }
        }
    };

    // Global lattice vertices, then cell centers appended on demand.
    let ext = spec.hi - spec.lo;
    let grid_id = |i: usize, j: usize, k: usize| (i + (nx + 1) * (j + (ny + 1) * k)) as u32;
    let mut positions = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                positions.push(Vec3::new(
                    spec.lo.x + ext.x * i as f64 / nx as f64,
                    spec.lo.y + ext.y * j as f64 / ny as f64,
                    spec.lo.z + ext.z * k as f64 / nz as f64,
                ));
            }
        }
    }

    let mut per_cluster: Vec<Vec<Element>> = vec![Vec::new(); c];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let corner = |dx: usize, dy: usize, dz: usize| grid_id(i + dx, j + dy, k + dz);
                let hex = [
                    corner(0, 0, 0),
                    corner(1, 0, 0),
                    corner(1, 1, 0),
                    corner(0, 1, 0),
                    corner(0, 0, 1),
                    corner(1, 0, 1),
                    corner(1, 1, 1),
                    corner(0, 1, 1),
                ];
                let out = &mut per_cluster[cluster_of(i, j, k)];
                mesh_cell(cell_kind(k, i, j), &hex, &mut positions, out)?;
            }
        }
    }

    let (lo, hi) = (spec.lo, spec.hi);
    let global_fields: Vec<Vec<f64>> = spec
        .fields
        .iter()
        .flat_map(|f| (0..spec.timesteps).map(move |t| (f, t)))
        .map(|(f, t)| positions.iter().map(|p| f.eval(p, &lo, &hi, t)).collect())
        .collect();

    let mut clusters = Vec::with_capacity(c);
    for (id, elements) in per_cluster.into_iter().enumerate() {
        let mut remap = vec![u32::MAX; positions.len()];
        let mut local_pos = Vec::new();
        let mut local_elems = Vec::with_capacity(elements.len());
        for e in &elements {
            let ids: Vec<u32> = e
                .ids()
                .iter()
                .map(|&g| {
                    if remap[g as usize] == u32::MAX {
                        remap[g as usize] = local_pos.len() as u32;
                        local_pos.push(positions[g as usize]);
                    }
                    remap[g as usize]
                })
                .collect();
            local_elems.push(Element::new(e.kind(), &ids)?);
        }
        let mut blocks = Vec::with_capacity(global_fields.len());
        for g in &global_fields {
            let mut b = vec![0f32; local_pos.len()];
            for (gi, &li) in remap.iter().enumerate() {
                if li != u32::MAX {
                    b[li as usize] = g[gi] as f32;
                }
            }
            blocks.push(b);
        }
        let fields = ScalarFields::new(spec.fields.len(), spec.timesteps, blocks);
        let mut mesh = Mesh::new(local_pos, fields);
        // Kind-segregated storage: push tets, pyramids, wedges, hexes in that order.
        for kind in ElementKind::ALL {
            for e in local_elems.iter().filter(|e| e.kind() == kind) {
                mesh.push(e);
            }
        }
        mesh.validate()?;
        clusters.push(Cluster {
            id: id as u32,
            rank: (id * spec.ranks / c) as u32,
            mesh,
        });
    }
    Ok(clusters)
}

fn mesh_cell(
    kind: CellKind,
    h: &[u32; 8],
    positions: &mut Vec<Vec3>,
    out: &mut Vec<Element>,
) -> Result<(), MeshError> {
    let p = |positions: &Vec<Vec3>, i: u32| positions[i as usize];
    match kind {
        CellKind::Hex => out.push(Element::new(ElementKind::Hex, h)?),
        CellKind::Tet => {
            // Kuhn: one tet per axis permutation, all sharing the 0-6 diagonal.
            const PATHS: [[usize; 2]; 6] = [[1, 2], [1, 5], [3, 2], [3, 7], [4, 5], [4, 7]];
            for [a, b] in PATHS {
                let mut t = [h[0], h[a], h[b], h[6]];
                if orient3d(
                    &p(positions, t[0]),
                    &p(positions, t[1]),
                    &p(positions, t[2]),
                    &p(positions, t[3]),
                ) < 0.0
                {
                    t.swap(1, 2);
                }
                out.push(Element::new(ElementKind::Tet, &t)?);
            }
        }
        CellKind::Wed => {
            // Bottom triangles wound downward (outward), split along the 0-2 diagonal.
            for [a, b, c] in [[0, 2, 1], [0, 3, 2]] {
                out.push(Element::new(
                    ElementKind::Wed,
                    &[h[a], h[b], h[c], h[a + 4], h[b + 4], h[c + 4]],
                )?);
            }
        }
        CellKind::Pyr | CellKind::Transition => {
            let center = (0..8).map(|i| p(positions, h[i])).sum::<Vec3>() / 8.0;
            let m = positions.len() as u32;
            positions.push(center);
            for (slot, face) in ElementKind::Hex.faces().iter().enumerate() {
                let top = slot == 5;
                if top && kind == CellKind::Transition {
                    for tri in [[4, 5, 6], [4, 6, 7]] {
                        let mut t = [h[tri[0]], h[tri[1]], h[tri[2]], m];
                        if orient3d(
                            &p(positions, t[0]),
                            &p(positions, t[1]),
                            &p(positions, t[2]),
                            &p(positions, t[3]),
                        ) < 0.0
                        {
                            t.swap(1, 2);
                        }
                        out.push(Element::new(ElementKind::Tet, &t)?);
                    }
                    continue;
                }
                // Outward cube face reversed: base normal points at the apex.
                let ids = [
                    h[face[3] as usize],
                    h[face[2] as usize],
                    h[face[1] as usize],
                    h[face[0] as usize],
                    m,
                ];
                out.push(Element::new(ElementKind::Pyr, &ids)?);
            }
        }
    }
    Ok(())
}
