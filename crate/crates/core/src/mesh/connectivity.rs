//! Face-neighbor connectivity by matching canonical face keys.

use super::{ElementRef, LocalFace, Mesh, MeshError};
use std::collections::HashMap;

/// Sorted vertex ids of a face; equal keys mean the same geometric face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaceKey {
    Tri([u32; 3]),
    Quad([u32; 4]),
}

impl FaceKey {
    pub fn of(ids: &[u32]) -> FaceKey {
        match *ids {
            [a, b, c] => {
                let mut k = [a, b, c];
                k.sort_unstable();
                FaceKey::Tri(k)
            }
            [a, b, c, d] => {
                let mut k = [a, b, c, d];
                k.sort_unstable();
                FaceKey::Quad(k)
            }
            _ => panic!("faces have 3 or 4 vertices"),
        }
    }
}

/// The element across one face.
///
/// `slot` is the neighbor's own face slot for the shared face, and `rotation`
/// is the position, within this element's ordered face ids, of the neighbor
/// face's first id. Since both faces are wound outward, the neighbor's ordered
/// ids are `mine[(rotation - i) mod n]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub element: ElementRef,
    pub slot: u8,
    pub rotation: u8,
}

impl Neighbor {
    /// Reorders this element's face ids into the neighbor's slot order.
    pub fn neighbor_face_ids(&self, mine: &[u32], out: &mut [u32; 4]) -> usize {
        let n = mine.len();
        let r = self.rotation as usize;
        for (i, dst) in out.iter_mut().take(n).enumerate() {
            *dst = mine[(r + n - i) % n];
        }
        n
    }
}

/// Per element, per face slot: the neighbor or `None` for a boundary face.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Connectivity {
    neighbors: [Vec<Option<Neighbor>>; 4],
}

impl Connectivity {
    pub fn neighbor(&self, r: ElementRef, slot: u8) -> Option<Neighbor> {
        let nf = r.kind.face_count();
        self.neighbors[r.kind as usize][r.index as usize * nf + slot as usize]
    }

    pub fn boundary_face_count(&self) -> usize {
        self.neighbors
            .iter()
            .flatten()
            .filter(|n| n.is_none())
            .count()
    }

    /// Number of shared faces (each counted once).
    pub fn interior_face_count(&self) -> usize {
        self.neighbors
            .iter()
            .flatten()
            .filter(|n| n.is_some())
            .count()
            / 2
    }

    /// Bytes the neighbor buffer would take as one u32 per face.
    pub fn packed_bytes(&self) -> usize {
        self.neighbors.iter().map(|v| v.len() * 4).sum()
    }
}

/// Matches element faces through a hash of their sorted ids.
pub fn build_connectivity(mesh: &Mesh) -> Result<Connectivity, MeshError> {
    let mut open: HashMap<FaceKey, (ElementRef, LocalFace)> = HashMap::new();
    let mut conn = Connectivity::default();
    for kind in super::ElementKind::ALL {
        conn.neighbors[kind as usize] = vec![None; mesh.count(kind) * kind.face_count()];
    }
    let mut closed: HashMap<FaceKey, ()> = HashMap::new();

    for r in mesh.refs() {
        let el = mesh.element(r);
        for face in el.local_faces() {
            let key = FaceKey::of(face.ids.as_slice());
            if closed.contains_key(&key) {
                return Err(MeshError::NonManifold(key));
            }
            match open.remove(&key) {
                None => {
                    open.insert(key, (r, face));
                }
                Some((other, other_face)) => {
                    link(&mut conn, r, &face, other, &other_face);
                    closed.insert(key, ());
                }
            }
        }
    }
    Ok(conn)
}

fn link(conn: &mut Connectivity, a: ElementRef, fa: &LocalFace, b: ElementRef, fb: &LocalFace) {
    let rot = |mine: &LocalFace, theirs: &LocalFace| {
        mine.ids
            .as_slice()
            .iter()
            .position(|&v| v == theirs.ids.as_slice()[0])
            .expect("matched faces share ids") as u8
    };
    let ia = a.index as usize * a.kind.face_count() + fa.slot as usize;
    let ib = b.index as usize * b.kind.face_count() + fb.slot as usize;
    conn.neighbors[a.kind as usize][ia] = Some(Neighbor {
        element: b,
        slot: fb.slot,
        rotation: rot(fa, fb),
    });
    conn.neighbors[b.kind as usize][ib] = Some(Neighbor {
        element: a,
        slot: fa.slot,
        rotation: rot(fb, fa),
    });
}

/// All-pairs face comparison. Quadratic; kept as a test oracle.
///
/// Returns, for every (element, slot), the matching (element, slot) if any.
pub fn brute_force_neighbors(mesh: &Mesh) -> Vec<((ElementRef, u8), Option<(ElementRef, u8)>)> {
    let faces: Vec<(ElementRef, u8, Vec<u32>)> = mesh
        .refs()
        .flat_map(|r| {
            mesh.element(r).local_faces().into_iter().map(move |f| {
                let mut ids = f.ids.as_slice().to_vec();
                ids.sort_unstable();
                (r, f.slot, ids)
            })
        })
        .collect();
    faces
        .iter()
        .enumerate()
        .map(|(i, (r, s, ids))| {
            let other = faces
                .iter()
                .enumerate()
                .find(|(j, (_, _, o))| *j != i && o == ids)
                .map(|(_, (r2, s2, _))| (*r2, *s2));
            ((*r, *s), other)
        })
        .collect()
}
