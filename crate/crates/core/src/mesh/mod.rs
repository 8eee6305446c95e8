//! Mixed-element meshes in VTK vertex ordering, cluster partitions, face
//! matching and the cluster file format.
//!
//! Elements are stored in four kind-segregated index arrays. An element is
//! addressed by an [`ElementRef`] (kind + index into that kind's array), which
//! is also what the 2-bit/30-bit shell handle encodes.
//!
//! Face slots follow the VTK cell definitions and every face is wound so the
//! right-hand normal points out of the element:
//!
//! | kind | VTK type | slot: vertices |
//! |------|----------|----------------|
//! | Tet  | 10 | 0:(0,1,3) 1:(1,2,3) 2:(2,0,3) 3:(0,2,1) |
//! | Pyr  | 14 | 0:(0,3,2,1) 1:(0,1,4) 2:(1,2,4) 3:(2,3,4) 4:(3,0,4) |
//! | Wed  | 13 | 0:(0,1,2) 1:(3,5,4) 2:(0,3,4,1) 3:(1,4,5,2) 4:(2,5,3,0) |
//! | Hex  | 12 | 0:(0,4,7,3) 1:(1,2,6,5) 2:(0,1,5,4) 3:(3,7,6,2) 4:(0,3,2,1) 5:(4,5,6,7) |

mod connectivity;
mod io;
mod synth;

pub use connectivity::{
    brute_force_neighbors, build_connectivity, Connectivity, FaceKey, Neighbor,
};
pub use io::{
    load_cluster, load_scene, parse_manifest, read_mesh, save_cluster, save_scene, write_mesh,
    SceneEntry,
};
pub use synth::{
    make_synthetic_partition, ElementMix, PartitionPattern, ScalarFieldKind, SyntheticSpec,
};

use crate::geom::{orient3d, Aabb, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error(
        "element {kind:?}#{index} references vertex {vertex} but the mesh has {count} vertices"
    )]
    IndexOutOfRange {
        kind: ElementKind,
        index: usize,
        vertex: u32,
        count: usize,
    },
    #[error("element {kind:?}#{index} repeats vertex {vertex}")]
    RepeatedVertex {
        kind: ElementKind,
        index: usize,
        vertex: u32,
    },
    #[error("element {kind:?}#{index} is degenerate or inverted")]
    Degenerate { kind: ElementKind, index: usize },
    #[error("vertex {0} has a non-finite position")]
    NonFinite(usize),
    #[error("scalar block {block} has {got} values, expected {expected}")]
    FieldShape {
        block: usize,
        got: usize,
        expected: usize,
    },
    #[error("{kind:?} elements need {expected} vertex ids, got {got}")]
    WrongArity {
        kind: ElementKind,
        expected: usize,
        got: usize,
    },
    #[error("face {0:?} is shared by more than two element faces")]
    NonManifold(FaceKey),
    #[error("element index {0} does not fit in 30 bits")]
    TooManyElements(usize),
    #[error("unsupported synthetic configuration: {0}")]
    Unsupported(String),
    #[error("bad cluster file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four supported cell kinds. The discriminant is the 2-bit handle code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ElementKind {
    Tet = 0,
    Pyr = 1,
    Wed = 2,
    Hex = 3,
}

const TET_FACES: &[&[u8]] = &[&[0, 1, 3], &[1, 2, 3], &[2, 0, 3], &[0, 2, 1]];
const PYR_FACES: &[&[u8]] = &[
    &[0, 3, 2, 1],
    &[0, 1, 4],
    &[1, 2, 4],
    &[2, 3, 4],
    &[3, 0, 4],
];
const WED_FACES: &[&[u8]] = &[
    &[0, 1, 2],
    &[3, 5, 4],
    &[0, 3, 4, 1],
    &[1, 4, 5, 2],
    &[2, 5, 3, 0],
];
const HEX_FACES: &[&[u8]] = &[
    &[0, 4, 7, 3],
    &[1, 2, 6, 5],
    &[0, 1, 5, 4],
    &[3, 7, 6, 2],
    &[0, 3, 2, 1],
    &[4, 5, 6, 7],
];

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::Tet,
        ElementKind::Pyr,
        ElementKind::Wed,
        ElementKind::Hex,
    ];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ElementKind::Tet),
            1 => Some(ElementKind::Pyr),
            2 => Some(ElementKind::Wed),
            3 => Some(ElementKind::Hex),
            _ => None,
        }
    }

    pub fn vtk_cell_type(self) -> u8 {
        match self {
            ElementKind::Tet => 10,
            ElementKind::Pyr => 14,
            ElementKind::Wed => 13,
            ElementKind::Hex => 12,
        }
    }

    pub fn vertex_count(self) -> usize {
        match self {
            ElementKind::Tet => 4,
            ElementKind::Pyr => 5,
            ElementKind::Wed => 6,
            ElementKind::Hex => 8,
        }
    }

    /// Local vertex slots of each face, outward winding.
    pub fn faces(self) -> &'static [&'static [u8]] {
        match self {
            ElementKind::Tet => TET_FACES,
            ElementKind::Pyr => PYR_FACES,
            ElementKind::Wed => WED_FACES,
            ElementKind::Hex => HEX_FACES,
        }
    }

    pub fn face_count(self) -> usize {
        self.faces().len()
    }

    /// Unordered local edges, each as `(lo, hi)`.
    pub fn edges(self) -> Vec<(u8, u8)> {
        let mut edges = Vec::new();
        for face in self.faces() {
            for i in 0..face.len() {
                let (a, b) = (face[i], face[(i + 1) % face.len()]);
                let e = (a.min(b), a.max(b));
                if !edges.contains(&e) {
                    edges.push(e);
                }
            }
        }
        edges
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaceShape {
    Tri,
    Quad,
}

impl FaceShape {
    pub fn of_len(n: usize) -> FaceShape {
        if n == 3 {
            FaceShape::Tri
        } else {
            FaceShape::Quad
        }
    }
}

/// Up to four ordered vertex ids of one element face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaceIds {
    ids: [u32; 4],
    len: u8,
}

impl FaceIds {
    pub fn new(ids: &[u32]) -> Self {
        assert!(
            ids.len() == 3 || ids.len() == 4,
            "faces have 3 or 4 vertices"
        );
        let mut buf = [0; 4];
        buf[..ids.len()].copy_from_slice(ids);
        FaceIds {
            ids: buf,
            len: ids.len() as u8,
        }
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.ids[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn shape(&self) -> FaceShape {
        FaceShape::of_len(self.len())
    }
}

/// One face of a concrete element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalFace {
    pub slot: u8,
    pub ids: FaceIds,
}

impl LocalFace {
    pub fn shape(&self) -> FaceShape {
        self.ids.shape()
    }
}

/// An element's kind together with its vertex ids in VTK order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Element {
    kind: ElementKind,
    ids: [u32; 8],
}

impl std::fmt::Debug for Element {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}{:?}", self.kind, self.ids())
    }
}

impl Element {
    pub fn new(kind: ElementKind, ids: &[u32]) -> Result<Self, MeshError> {
        if ids.len() != kind.vertex_count() {
            return Err(MeshError::WrongArity {
                kind,
                expected: kind.vertex_count(),
                got: ids.len(),
            });
        }
        let mut buf = [0; 8];
        buf[..ids.len()].copy_from_slice(ids);
        Ok(Element { kind, ids: buf })
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids[..self.kind.vertex_count()]
    }

    /// Faces in slot order with outward winding.
    pub fn local_faces(&self) -> Vec<LocalFace> {
        (0..self.kind.face_count() as u8)
            .map(|s| self.face(s))
            .collect()
    }

    pub fn face(&self, slot: u8) -> LocalFace {
        let local = self.kind.faces()[slot as usize];
        let mut ids = [0u32; 4];
        for (dst, &l) in ids.iter_mut().zip(local) {
            *dst = self.ids[l as usize];
        }
        LocalFace {
            slot,
            ids: FaceIds::new(&ids[..local.len()]),
        }
    }
}

/// Kind + index into that kind's element array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementRef {
    pub kind: ElementKind,
    pub index: u32,
}

impl ElementRef {
    pub fn new(kind: ElementKind, index: u32) -> Self {
        ElementRef { kind, index }
    }
}

/// Per-vertex scalar data, one block per (field, timestep).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarFields {
    field_count: usize,
    timestep_count: usize,
    blocks: Vec<Vec<f32>>,
}

impl ScalarFields {
    /// `blocks` is ordered field-major: `blocks[field * timesteps + t]`.
    pub fn new(field_count: usize, timestep_count: usize, blocks: Vec<Vec<f32>>) -> Self {
        assert_eq!(blocks.len(), field_count * timestep_count);
        ScalarFields {
            field_count,
            timestep_count,
            blocks,
        }
    }

    pub fn field_count(&self) -> usize {
        self.field_count
    }

    pub fn timestep_count(&self) -> usize {
        self.timestep_count
    }

    pub fn block(&self, field: usize, timestep: usize) -> Option<&[f32]> {
        if field >= self.field_count || timestep >= self.timestep_count {
            return None;
        }
        Some(&self.blocks[field * self.timestep_count + timestep])
    }

    pub fn blocks(&self) -> &[Vec<f32>] {
        &self.blocks
    }
}

/// Vertices, scalar fields and kind-segregated element index arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    /// Flattened VTK-ordered ids per kind, indexed by `ElementKind as usize`.
    pub indices: [Vec<u32>; 4],
    pub fields: ScalarFields,
}

impl Mesh {
    pub fn new(positions: Vec<Vec3>, fields: ScalarFields) -> Self {
        Mesh {
            positions,
            indices: Default::default(),
            fields,
        }
    }

    pub fn push(&mut self, element: &Element) -> ElementRef {
        let k = element.kind();
        let index = self.count(k) as u32;
        self.indices[k as usize].extend_from_slice(element.ids());
        ElementRef::new(k, index)
    }

    pub fn count(&self, kind: ElementKind) -> usize {
        self.indices[kind as usize].len() / kind.vertex_count()
    }

    pub fn counts(&self) -> [usize; 4] {
        ElementKind::ALL.map(|k| self.count(k))
    }

    pub fn element_count(&self) -> usize {
        self.counts().iter().sum()
    }

    pub fn ids(&self, r: ElementRef) -> &[u32] {
        let n = r.kind.vertex_count();
        let i = r.index as usize * n;
        &self.indices[r.kind as usize][i..i + n]
    }

    pub fn element(&self, r: ElementRef) -> Element {
        Element::new(r.kind, self.ids(r)).expect("stored arity matches kind")
    }

    pub fn refs(&self) -> impl Iterator<Item = ElementRef> + '_ {
        ElementKind::ALL
            .into_iter()
            .flat_map(move |k| (0..self.count(k) as u32).map(move |i| ElementRef::new(k, i)))
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for p in &self.positions {
            b.grow(p);
        }
        b
    }

    pub fn centroid(&self, r: ElementRef) -> Vec3 {
        let ids = self.ids(r);
        ids.iter()
            .map(|&i| self.positions[i as usize])
            .sum::<Vec3>()
            / ids.len() as f64
    }

    /// Volume from the outward faces; `None` if any face fan is not outward.
    pub fn element_volume(&self, r: ElementRef) -> Option<f64> {
        let c = self.centroid(r);
        let el = self.element(r);
        let mut vol = 0.0;
        for face in el.local_faces() {
            let ids = face.ids.as_slice();
            let p0 = self.positions[ids[0] as usize];
            for w in 1..ids.len() - 1 {
                let p1 = self.positions[ids[w] as usize];
                let p2 = self.positions[ids[w + 1] as usize];
                let v = -orient3d(&p0, &p1, &p2, &c) / 6.0;
                if !(v > 0.0) {
                    return None;
                }
                vol += v;
            }
        }
        Some(vol)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        for (i, p) in self.positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
        }
        let nv = self.positions.len();
        for (b, block) in self.fields.blocks().iter().enumerate() {
            if block.len() != nv {
                return Err(MeshError::FieldShape {
                    block: b,
                    got: block.len(),
                    expected: nv,
                });
            }
        }
        for kind in ElementKind::ALL {
            if !self.indices[kind as usize]
                .len()
                .is_multiple_of(kind.vertex_count())
            {
                return Err(MeshError::Format(format!(
                    "{kind:?} index array length is not a multiple of its arity"
                )));
            }
            if self.count(kind) >= 1 << 30 {
                return Err(MeshError::TooManyElements(self.count(kind)));
            }
        }
        for r in self.refs() {
            let ids = self.ids(r);
            for (j, &v) in ids.iter().enumerate() {
                if v as usize >= nv {
                    return Err(MeshError::IndexOutOfRange {
                        kind: r.kind,
                        index: r.index as usize,
                        vertex: v,
                        count: nv,
                    });
                }
                if ids[..j].contains(&v) {
                    return Err(MeshError::RepeatedVertex {
                        kind: r.kind,
                        index: r.index as usize,
                        vertex: v,
                    });
                }
            }
            if self.element_volume(r).is_none() {
                return Err(MeshError::Degenerate {
                    kind: r.kind,
                    index: r.index as usize,
                });
            }
        }
        Ok(())
    }
}

/// One data-parallel partition of the volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub id: u32,
    pub rank: u32,
    pub mesh: Mesh,
}

/// Unit-sized element of each kind with ids `0..n` and positive orientation.
pub fn reference_element(kind: ElementKind) -> (Vec<Vec3>, Element) {
    let pts: Vec<Vec3> = match kind {
        ElementKind::Tet => vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ],
        ElementKind::Pyr => vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.5, 0.5, 1.0),
        ],
        ElementKind::Wed => vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
        ],
        ElementKind::Hex => vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
        ],
    };
    let ids: Vec<u32> = (0..kind.vertex_count() as u32).collect();
    (pts, Element::new(kind, &ids).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_counts_and_shapes() {
        let shapes = |k: ElementKind| {
            let (_, e) = reference_element(k);
            let f = e.local_faces();
            let tris = f.iter().filter(|f| f.shape() == FaceShape::Tri).count();
            (f.len(), tris)
        };
        assert_eq!(shapes(ElementKind::Tet), (4, 4));
        assert_eq!(shapes(ElementKind::Pyr), (5, 4));
        assert_eq!(shapes(ElementKind::Wed), (5, 2));
        assert_eq!(shapes(ElementKind::Hex), (6, 0));
    }

    #[test]
    fn tet_faces_each_omit_one_vertex() {
        let e = Element::new(ElementKind::Tet, &[0, 1, 2, 3]).unwrap();
        let mut omitted: Vec<u32> = e
            .local_faces()
            .iter()
            .map(|f| (0..4).find(|v| !f.ids.as_slice().contains(v)).unwrap())
            .collect();
        omitted.sort();
        assert_eq!(omitted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn pyramid_quad_is_the_base_and_triangles_share_apex() {
        let e = Element::new(ElementKind::Pyr, &[0, 1, 2, 3, 4]).unwrap();
        let faces = e.local_faces();
        let quad: Vec<_> = faces
            .iter()
            .filter(|f| f.shape() == FaceShape::Quad)
            .collect();
        assert_eq!(quad.len(), 1);
        let mut q = quad[0].ids.as_slice().to_vec();
        q.sort();
        assert_eq!(q, vec![0, 1, 2, 3]);
        for f in faces.iter().filter(|f| f.shape() == FaceShape::Tri) {
            assert!(f.ids.as_slice().contains(&4));
        }
    }

    #[test]
    fn hex_opposite_faces_are_disjoint() {
        let e = Element::new(ElementKind::Hex, &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let f = e.local_faces();
        for (a, b) in [(0, 1), (2, 3), (4, 5)] {
            let fa = f[a].ids.as_slice();
            assert!(f[b].ids.as_slice().iter().all(|v| !fa.contains(v)));
        }
    }

    #[test]
    fn face_normals_point_outward_for_all_kinds() {
        for kind in ElementKind::ALL {
            let (pts, e) = reference_element(kind);
            let c = pts.iter().sum::<Vec3>() / pts.len() as f64;
            for face in e.local_faces() {
                let ids = face.ids.as_slice();
                let p = |i: usize| pts[ids[i] as usize];
                let fc = ids.iter().map(|&i| pts[i as usize]).sum::<Vec3>() / ids.len() as f64;
                let n = if ids.len() == 3 {
                    (p(1) - p(0)).cross(&(p(2) - p(0)))
                } else {
                    (p(2) - p(0)).cross(&(p(3) - p(1)))
                };
                assert!(
                    n.dot(&(fc - c)) > 0.0,
                    "{kind:?} slot {} points inward",
                    face.slot
                );
            }
        }
    }

    #[test]
    fn edge_counts() {
        assert_eq!(ElementKind::Tet.edges().len(), 6);
        assert_eq!(ElementKind::Pyr.edges().len(), 8);
        assert_eq!(ElementKind::Wed.edges().len(), 9);
        assert_eq!(ElementKind::Hex.edges().len(), 12);
    }

    #[test]
    fn validation_rejects_bad_elements() {
        let (pts, e) = reference_element(ElementKind::Tet);
        let mut m = Mesh::new(pts.clone(), ScalarFields::default());
        m.push(&e);
        m.validate().unwrap();
        assert!(
            (m.element_volume(ElementRef::new(ElementKind::Tet, 0))
                .unwrap()
                - 1.0 / 6.0)
                .abs()
                < 1e-12
        );

        let mut inverted = Mesh::new(pts.clone(), ScalarFields::default());
        inverted.push(&Element::new(ElementKind::Tet, &[0, 2, 1, 3]).unwrap());
        assert!(matches!(
            inverted.validate(),
            Err(MeshError::Degenerate { .. })
        ));

        let mut flat = Mesh::new(
            vec![
                Vec3::zeros(),
                Vec3::x(),
                Vec3::y(),
                Vec3::new(1.0, 1.0, 0.0),
            ],
            ScalarFields::default(),
        );
        flat.push(&e);
        assert!(matches!(flat.validate(), Err(MeshError::Degenerate { .. })));

        let mut oob = Mesh::new(pts.clone(), ScalarFields::default());
        oob.push(&Element::new(ElementKind::Tet, &[0, 1, 2, 9]).unwrap());
        assert!(matches!(
            oob.validate(),
            Err(MeshError::IndexOutOfRange { vertex: 9, .. })
        ));

        let mut rep = Mesh::new(pts, ScalarFields::default());
        rep.push(&Element::new(ElementKind::Tet, &[0, 1, 1, 3]).unwrap());
        assert!(matches!(
            rep.validate(),
            Err(MeshError::RepeatedVertex { .. })
        ));
    }

    #[test]
    fn all_unit_elements_have_positive_volume() {
        for kind in ElementKind::ALL {
            let (pts, e) = reference_element(kind);
            let mut m = Mesh::new(pts, ScalarFields::default());
            let r = m.push(&e);
            assert!(m.element_volume(r).unwrap() > 0.0, "{kind:?}");
        }
    }
}
