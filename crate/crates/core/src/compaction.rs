//! XOR-compacted element records.
//!
//! Neighboring elements share the vertices of their common face, so a marcher
//! that knows the face it entered through only needs the ids it has not seen
//! yet. Records keep just enough to recover those:
//!
//! | kind | record | bytes |
//! |------|--------|-------|
//! | Tet  | `vx = v0^v1^v2^v3` | 4 |
//! | Pyr  | `dx = v0^v2`, `diag = [v1, v3]`, `top = v4` | 16 |
//! | Wed  | `dx = [v2^v3, v1^v5]`, `diag = [v0, v4]` | 16 |
//! | Hex  | all eight ids | 32 |
//!
//! Reconstruction places the entry face ids in the slots of that face and
//! fills every other slot from an explicit field or by XOR-ing the partner id
//! out of a `dx` field, which yields the exact original VTK ordering.

use crate::mesh::{Element, ElementKind, ElementRef, FaceIds, Mesh};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompactionError {
    #[error("{kind:?} entry face slot {slot} is inconsistent with the record: {reason}")]
    Corrupt {
        kind: ElementKind,
        slot: u8,
        reason: &'static str,
    },
    #[error("all element counts are zero")]
    EmptyAccount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[repr(C)]
pub struct CompactTet {
    pub vx: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[repr(C)]
pub struct CompactPyr {
    pub dx: u32,
    pub diag: [u32; 2],
    pub top: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[repr(C)]
pub struct CompactWed {
    pub dx: [u32; 2],
    pub diag: [u32; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[repr(C)]
pub struct HexRecord {
    pub v: [u32; 8],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompactRecord {
    Tet(CompactTet),
    Pyr(CompactPyr),
    Wed(CompactWed),
    Hex(HexRecord),
}

impl CompactRecord {
    pub fn kind(&self) -> ElementKind {
        match self {
            CompactRecord::Tet(_) => ElementKind::Tet,
            CompactRecord::Pyr(_) => ElementKind::Pyr,
            CompactRecord::Wed(_) => ElementKind::Wed,
            CompactRecord::Hex(_) => ElementKind::Hex,
        }
    }
}

/// The face a ray crossed into an element: its slot and ids in that slot's order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntryFace {
    pub slot: u8,
    pub ids: FaceIds,
}

pub fn compact(e: &Element) -> CompactRecord {
    let v = e.ids();
    match e.kind() {
        ElementKind::Tet => CompactRecord::Tet(CompactTet {
            vx: v[0] ^ v[1] ^ v[2] ^ v[3],
        }),
        ElementKind::Pyr => CompactRecord::Pyr(CompactPyr {
            dx: v[0] ^ v[2],
            diag: [v[1], v[3]],
            top: v[4],
        }),
        ElementKind::Wed => CompactRecord::Wed(CompactWed {
            dx: [v[2] ^ v[3], v[1] ^ v[5]],
            diag: [v[0], v[4]],
        }),
        ElementKind::Hex => {
            let mut r = HexRecord::default();
            r.v.copy_from_slice(v);
            CompactRecord::Hex(r)
        }
    }
}

// Where a slot's id comes from when it is not on the entry face.
#[derive(Clone, Copy)]
enum Source {
    /// XOR of the tet's `vx` with the three known ids.
    XorAll,
    /// Stored explicitly (pyramid diag/top, wedge diag).
    Explicit(u32),
    /// `field ^ id at partner slot`.
    Pair { field: u32, partner: usize },
}

fn sources(record: &CompactRecord) -> [Source; 8] {
    let mut s = [Source::XorAll; 8];
    match *record {
        CompactRecord::Tet(_) | CompactRecord::Hex(_) => {}
        CompactRecord::Pyr(p) => {
            s[0] = Source::Pair {
                field: p.dx,
                partner: 2,
            };
            s[2] = Source::Pair {
                field: p.dx,
                partner: 0,
            };
            s[1] = Source::Explicit(p.diag[0]);
            s[3] = Source::Explicit(p.diag[1]);
            s[4] = Source::Explicit(p.top);
        }
        CompactRecord::Wed(w) => {
            s[0] = Source::Explicit(w.diag[0]);
            s[4] = Source::Explicit(w.diag[1]);
            s[2] = Source::Pair {
                field: w.dx[0],
                partner: 3,
            };
            s[3] = Source::Pair {
                field: w.dx[0],
                partner: 2,
            };
            s[1] = Source::Pair {
                field: w.dx[1],
                partner: 5,
            };
            s[5] = Source::Pair {
                field: w.dx[1],
                partner: 1,
            };
        }
    }
    s
}

/// Rebuilds the full VTK-ordered vertex list from a record and the entry face.
///
/// Only index arithmetic is involved; vertex positions are never consulted.
pub fn reconstruct(record: &CompactRecord, entry: &EntryFace) -> Result<Element, CompactionError> {
    let kind = record.kind();
    let corrupt = |reason| CompactionError::Corrupt {
        kind,
        slot: entry.slot,
        reason,
    };
    let faces = kind.faces();
    let local = *faces
        .get(entry.slot as usize)
        .ok_or_else(|| corrupt("face slot out of range"))?;
    let ids = entry.ids.as_slice();
    if local.len() != ids.len() {
        return Err(corrupt("face shape does not match slot"));
    }

    let n = kind.vertex_count();
    let mut out = [0u32; 8];
    let mut known = [false; 8];
    for (&l, &id) in local.iter().zip(ids) {
        out[l as usize] = id;
        known[l as usize] = true;
    }

    if let CompactRecord::Hex(h) = record {
        if local.iter().zip(ids).any(|(&l, &id)| h.v[l as usize] != id) {
            return Err(corrupt("entry ids differ from stored hexahedron"));
        }
        return Ok(Element::new(kind, &h.v).expect("hex arity"));
    }

    let src = sources(record);
    // Explicit fields must sit exactly where the face says, and nowhere else:
    // an id matching a diagonal/top field in the wrong slot means the face and
    // record disagree.
    for slot in 0..n {
        if let Source::Explicit(v) = src[slot] {
            if known[slot] && out[slot] != v {
                return Err(corrupt("explicit field does not match entry id"));
            }
            if !known[slot] && ids.contains(&v) {
                return Err(corrupt("explicit field matches an id in the wrong slot"));
            }
        }
        if let Source::Pair { field, partner } = src[slot] {
            if known[slot] && known[partner] && out[slot] ^ out[partner] != field {
                return Err(corrupt("dx field does not match entry pair"));
            }
        }
    }

    for slot in 0..n {
        if known[slot] {
            continue;
        }
        out[slot] = match (src[slot], record) {
            (Source::XorAll, CompactRecord::Tet(t)) => {
                let v = ids.iter().fold(t.vx, |acc, &id| acc ^ id);
                if ids.contains(&v) {
                    return Err(corrupt("recovered tet vertex repeats an entry id"));
                }
                v
            }
            (Source::Explicit(v), _) => v,
            (Source::Pair { field, partner }, _) => {
                if !known[partner] {
                    return Err(corrupt("dx partner not on entry face"));
                }
                field ^ out[partner]
            }
            _ => unreachable!("hexahedra returned above"),
        };
    }
    Ok(Element::new(kind, &out[..n]).expect("arity matches kind"))
}

/// Kind-segregated record arrays, indexed like the mesh's element arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompactElements {
    pub tets: Vec<CompactTet>,
    pub pyrs: Vec<CompactPyr>,
    pub wedges: Vec<CompactWed>,
    pub hexes: Vec<HexRecord>,
}

impl CompactElements {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let mut out = CompactElements::default();
        for r in mesh.refs() {
            match compact(&mesh.element(r)) {
                CompactRecord::Tet(t) => out.tets.push(t),
                CompactRecord::Pyr(p) => out.pyrs.push(p),
                CompactRecord::Wed(w) => out.wedges.push(w),
                CompactRecord::Hex(h) => out.hexes.push(h),
            }
        }
        out
    }

    pub fn record(&self, r: ElementRef) -> CompactRecord {
        let i = r.index as usize;
        match r.kind {
            ElementKind::Tet => CompactRecord::Tet(self.tets[i]),
            ElementKind::Pyr => CompactRecord::Pyr(self.pyrs[i]),
            ElementKind::Wed => CompactRecord::Wed(self.wedges[i]),
            ElementKind::Hex => CompactRecord::Hex(self.hexes[i]),
        }
    }

    pub fn byte_size(&self) -> usize {
        use std::mem::size_of;
        self.tets.len() * size_of::<CompactTet>()
            + self.pyrs.len() * size_of::<CompactPyr>()
            + self.wedges.len() * size_of::<CompactWed>()
            + self.hexes.len() * size_of::<HexRecord>()
    }

    /// Records serialized as little-endian u32 words, tets first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut words: Vec<u32> = Vec::new();
        words.extend(self.tets.iter().map(|t| t.vx));
        for p in &self.pyrs {
            words.extend([p.dx, p.diag[0], p.diag[1], p.top]);
        }
        for w in &self.wedges {
            words.extend([w.dx[0], w.dx[1], w.diag[0], w.diag[1]]);
        }
        for h in &self.hexes {
            words.extend(h.v);
        }
        words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }
}

/// Index storage with and without compaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeAccount {
    pub full_bytes: f64,
    pub compact_bytes: f64,
    /// `1 - compact / full`.
    pub reduction: f64,
}

/// Counts are per kind in `ElementKind` order; reals so that table-sized
/// counts (hundreds of millions) can be passed directly.
pub fn size_account(counts: [f64; 4]) -> Result<SizeAccount, CompactionError> {
    const FULL: [f64; 4] = [16.0, 20.0, 24.0, 32.0];
    const COMPACT: [f64; 4] = [4.0, 16.0, 16.0, 32.0];
    let full: f64 = counts.iter().zip(FULL).map(|(c, b)| c * b).sum();
    let compact: f64 = counts.iter().zip(COMPACT).map(|(c, b)| c * b).sum();
    if full <= 0.0 {
        return Err(CompactionError::EmptyAccount);
    }
    Ok(SizeAccount {
        full_bytes: full,
        compact_bytes: compact,
        reduction: 1.0 - compact / full,
    })
}
