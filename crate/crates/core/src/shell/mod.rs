//! Cluster boundary shells and ray segment generation.
//!
//! A cluster's shell is the set of element faces without a neighbor. Every
//! boundary face becomes one or two outward-wound triangles carrying a packed
//! handle of the owning element. Tracing a ray against the shell with
//! front faces culled finds where the ray leaves the cluster; a second,
//! backward ray from that point finds where it entered. Repeating from just
//! past the exit yields every interval the ray spends inside the cluster,
//! including re-entries into non-convex clusters.

mod bvh;
mod intersect;

pub use bvh::ShellBvh;
pub use intersect::{intersect_back_face, Shear};

use crate::compaction::EntryFace;
use crate::geom::{Ray, Vec3};
use crate::mesh::{Cluster, Connectivity, ElementKind, ElementRef};
use thiserror::Error;

/// Largest element index that fits in a handle.
pub const MAX_HANDLE_INDEX: u32 = (1 << 30) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShellError {
    #[error("element index {0} does not fit in 30 bits")]
    HandleOverflow(u64),
}

/// Low two bits: kind code. High 30 bits: index within that kind.
pub fn pack_handle(kind: ElementKind, index: u64) -> Result<u32, ShellError> {
    if index > MAX_HANDLE_INDEX as u64 {
        return Err(ShellError::HandleOverflow(index));
    }
    Ok(((index as u32) << 2) | kind.code())
}

pub fn unpack_handle(handle: u32) -> (ElementKind, u32) {
    let kind = ElementKind::from_code(handle & 3).expect("two bits always decode");
    (kind, handle >> 2)
}

pub fn handle_ref(handle: u32) -> ElementRef {
    let (k, i) = unpack_handle(handle);
    ElementRef::new(k, i)
}

/// One boundary triangle.
///
/// `entry` keeps the full boundary face (slot and ordered ids) so that a ray
/// entering through this triangle can rebuild the owning element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShellFace {
    pub tri: [u32; 3],
    pub handle: u32,
    pub entry: EntryFace,
}

pub fn extract_shell(cluster: &Cluster, conn: &Connectivity) -> Result<Vec<ShellFace>, ShellError> {
    let mesh = &cluster.mesh;
    let mut out = Vec::new();
    for r in mesh.refs() {
        let el = mesh.element(r);
        for face in el.local_faces() {
            if conn.neighbor(r, face.slot).is_some() {
                continue;
            }
            let handle = pack_handle(r.kind, r.index as u64)?;
            let entry = EntryFace {
                slot: face.slot,
                ids: face.ids,
            };
            let ids = face.ids.as_slice();
            out.push(ShellFace {
                tri: [ids[0], ids[1], ids[2]],
                handle,
                entry,
            });
            if ids.len() == 4 {
                out.push(ShellFace {
                    tri: [ids[0], ids[2], ids[3]],
                    handle,
                    entry,
                });
            }
        }
    }
    Ok(out)
}

/// Shell faces of one cluster plus their BVH.
#[derive(Clone, Debug)]
pub struct Shell {
    pub cluster_id: u32,
    pub faces: Vec<ShellFace>,
    pub bvh: ShellBvh,
}

impl Shell {
    pub fn build(cluster: &Cluster, conn: &Connectivity) -> Result<Shell, ShellError> {
        let faces = extract_shell(cluster, conn)?;
        let pos = &cluster.mesh.positions;
        let tris: Vec<[Vec3; 3]> = faces
            .iter()
            .map(|f| {
                [
                    pos[f.tri[0] as usize],
                    pos[f.tri[1] as usize],
                    pos[f.tri[2] as usize],
                ]
            })
            .collect();
        Ok(Shell {
            cluster_id: cluster.id,
            faces,
            bvh: ShellBvh::build(&tris),
        })
    }

    /// Nearest shell triangle the ray leaves through: (face index, t).
    pub fn trace_front_face_culled(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<(u32, f64)> {
        self.bvh.trace(ray, t_min, t_max)
    }
}

/// One interval `[t_entry, t_exit]` a ray spends inside a cluster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub pixel: u32,
    pub t_entry: f64,
    pub t_exit: f64,
    pub entry_handle: u32,
    pub cluster_id: u32,
    /// Shell face the ray entered through; `None` when the ray started inside.
    pub entry_face: Option<u32>,
}

impl Segment {
    pub fn entry_element(&self) -> ElementRef {
        handle_ref(self.entry_handle)
    }

    pub fn entry_face_ids(&self, shell: &Shell) -> Option<EntryFace> {
        self.entry_face.map(|f| shell.faces[f as usize].entry)
    }
}

/// Walks the ray through the cluster shell, emitting sorted disjoint segments.
///
/// `locate` finds the element containing a point; it is only consulted when
/// the ray starts inside the cluster and no entry face exists.
pub fn generate_segments<L>(
    shell: &Shell,
    ray: &Ray,
    pixel: u32,
    eps: f64,
    locate: L,
) -> Vec<Segment>
where
    L: Fn(&Vec3) -> Option<ElementRef>,
{
    let mut out = Vec::new();
    let mut t_min = eps;
    while let Some((_, t_exit)) = shell.trace_front_face_culled(ray, t_min, f64::INFINITY) {
        let back = Ray {
            origin: ray.at(t_exit),
            dir: -ray.dir,
        };
        let range = t_exit - t_min - eps;
        let hit = if range > eps {
            shell.trace_front_face_culled(&back, eps, range)
        } else {
            None
        };
        let seg = match hit {
            Some((face, s)) => Some(Segment {
                pixel,
                t_entry: t_exit - s,
                t_exit,
                entry_handle: shell.faces[face as usize].handle,
                cluster_id: shell.cluster_id,
                entry_face: Some(face),
            }),
            None => {
                let probe = ray.at((t_min + eps).min(0.5 * (t_min + t_exit)));
                locate(&probe).map(|r| Segment {
                    pixel,
                    t_entry: t_min,
                    t_exit,
                    entry_handle: pack_handle(r.kind, r.index as u64).expect("mesh indices fit"),
                    cluster_id: shell.cluster_id,
                    entry_face: None,
                })
            }
        };
        if let Some(seg) = seg {
            if seg.t_exit > seg.t_entry && seg.t_entry >= 0.0 {
                out.push(seg);
            }
        }
        t_min = t_exit + eps;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{
        build_connectivity, make_synthetic_partition, reference_element, Element, ElementMix, Mesh,
        PartitionPattern, ScalarFields, SyntheticSpec,
    };

    fn single(kind: ElementKind) -> Cluster {
        let (pts, e) = reference_element(kind);
        let mut m = Mesh::new(pts, ScalarFields::default());
        m.push(&e);
        Cluster {
            id: 0,
            rank: 0,
            mesh: m,
        }
    }

    fn shell_of(c: &Cluster) -> Shell {
        Shell::build(c, &build_connectivity(&c.mesh).unwrap()).unwrap()
    }

    fn no_locate(_: &Vec3) -> Option<ElementRef> {
        None
    }

    #[test]
    fn handle_layout() {
        assert_eq!(pack_handle(ElementKind::Tet, 0), Ok(0));
        assert_eq!(pack_handle(ElementKind::Hex, 5), Ok(23));
        assert_eq!(
            pack_handle(ElementKind::Pyr, 1 << 30),
            Err(ShellError::HandleOverflow(1 << 30))
        );
        let h = pack_handle(ElementKind::Wed, MAX_HANDLE_INDEX as u64).unwrap();
        assert_eq!(unpack_handle(h), (ElementKind::Wed, MAX_HANDLE_INDEX));
    }

    #[test]
    fn single_element_shells() {
        let s = shell_of(&single(ElementKind::Tet));
        assert_eq!(s.faces.len(), 4);
        assert!(s
            .faces
            .iter()
            .all(|f| unpack_handle(f.handle) == (ElementKind::Tet, 0)));
        assert_eq!(shell_of(&single(ElementKind::Hex)).faces.len(), 12);
        assert_eq!(shell_of(&single(ElementKind::Pyr)).faces.len(), 6);
        assert_eq!(shell_of(&single(ElementKind::Wed)).faces.len(), 8);
    }

    #[test]
    fn shell_triangles_wind_outward() {
        for kind in ElementKind::ALL {
            let c = single(kind);
            let s = shell_of(&c);
            let center = c.mesh.centroid(ElementRef::new(kind, 0));
            for f in &s.faces {
                let [a, b, d] = f.tri.map(|i| c.mesh.positions[i as usize]);
                let n = (b - a).cross(&(d - a));
                assert!(n.dot(&(a - center)) > 0.0, "{kind:?}");
            }
        }
    }

    #[test]
    fn glued_tets_drop_the_shared_face() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
        ];
        let mut m = Mesh::new(pts, ScalarFields::default());
        m.push(&Element::new(ElementKind::Tet, &[0, 1, 2, 3]).unwrap());
        m.push(&Element::new(ElementKind::Tet, &[1, 2, 3, 4]).unwrap());
        let c = Cluster {
            id: 0,
            rank: 0,
            mesh: m,
        };
        let s = shell_of(&c);
        assert_eq!(s.faces.len(), 6);

        // Oracle: faces whose sorted ids occur exactly once across all elements.
        let mut all: Vec<Vec<u32>> = Vec::new();
        for r in c.mesh.refs() {
            for f in c.mesh.element(r).local_faces() {
                let mut k = f.ids.as_slice().to_vec();
                k.sort_unstable();
                all.push(k);
            }
        }
        let mut boundary: Vec<Vec<u32>> = all
            .iter()
            .filter(|k| all.iter().filter(|o| o == k).count() == 1)
            .cloned()
            .collect();
        let mut got: Vec<Vec<u32>> = s
            .faces
            .iter()
            .map(|f| {
                let mut k = f.tri.to_vec();
                k.sort_unstable();
                k
            })
            .collect();
        boundary.sort();
        got.sort();
        assert_eq!(got, boundary);
        assert!(!got.contains(&vec![1, 2, 3]));
    }

    #[test]
    fn hits_far_face_of_tet() {
        let c = single(ElementKind::Tet);
        let s = shell_of(&c);
        let ray = Ray::new(Vec3::new(0.2, 0.2, -1.0), Vec3::z());
        let (face, t) = s.trace_front_face_culled(&ray, 0.0, f64::INFINITY).unwrap();
        // Far face is the slanted (1,2,3) face x+y+z=1, slot 1.
        assert_eq!(s.faces[face as usize].entry.slot, 1);
        assert!((t - 1.6).abs() < 1e-12);
        let miss = Ray::new(Vec3::new(5.0, 5.0, -1.0), Vec3::z());
        assert_eq!(s.trace_front_face_culled(&miss, 0.0, f64::INFINITY), None);
    }

    #[test]
    fn grazing_shared_shell_edge_hits_once() {
        // Hex bottom quad is split along its (0,2) diagonal; aim exactly at it.
        let c = single(ElementKind::Hex);
        let s = shell_of(&c);
        for p in [0.25, 0.5, 0.75] {
            let ray = Ray::new(Vec3::new(p, p, 2.0), -Vec3::z());
            let shear = Shear::new(&ray.dir);
            let pos = &c.mesh.positions;
            let n = s
                .faces
                .iter()
                .filter(|f| {
                    let [a, b, d] = f.tri.map(|i| pos[i as usize]);
                    intersect_back_face(&ray, &shear, &a, &b, &d, 0.0, f64::INFINITY).is_some()
                })
                .count();
            assert_eq!(n, 1);
            let (face, t) = s.trace_front_face_culled(&ray, 0.0, f64::INFINITY).unwrap();
            assert_eq!(s.faces[face as usize].entry.slot, 4);
            assert!((t - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn convex_tet_gives_one_segment() {
        let c = single(ElementKind::Tet);
        let s = shell_of(&c);
        let ray = Ray::new(Vec3::new(0.2, 0.2, -1.0), Vec3::z());
        let segs = generate_segments(&s, &ray, 7, 1e-9, no_locate);
        assert_eq!(segs.len(), 1);
        let seg = segs[0];
        assert_eq!(seg.pixel, 7);
        assert!((seg.t_entry - 1.0).abs() < 1e-12);
        assert!((seg.t_exit - 1.6).abs() < 1e-12);
        assert_eq!(seg.entry_element(), ElementRef::new(ElementKind::Tet, 0));
        // Entered through the z=0 face, slot 3.
        assert_eq!(seg.entry_face_ids(&s).unwrap().slot, 3);
    }

    #[test]
    fn comb_is_entered_twice() {
        let clusters = make_synthetic_partition(&SyntheticSpec {
            dims: [4, 3, 2],
            mix: ElementMix::Hex,
            pattern: PartitionPattern::InterleavedCombs,
            clusters: 2,
            ..Default::default()
        })
        .unwrap();
        let c = &clusters[0];
        let s = shell_of(c);
        // Middle row j=1 holds teeth of cluster 0 at i=0 and i=2; cells are 0.5 wide.
        let ray = Ray::new(Vec3::new(-2.0, 0.0, 0.1), Vec3::x());
        let segs = generate_segments(&s, &ray, 0, 1e-9, no_locate);
        assert_eq!(segs.len(), 2);
        let want = [(1.0, 1.5), (2.0, 2.5)];
        for (seg, (a, b)) in segs.iter().zip(want) {
            assert!(
                (seg.t_entry - a).abs() < 1e-12 && (seg.t_exit - b).abs() < 1e-12,
                "{seg:?}"
            );
        }
        assert!(segs[0].t_exit < segs[1].t_entry);
    }

    #[test]
    fn coincident_cluster_boundaries_give_well_formed_segments() {
        let clusters = make_synthetic_partition(&SyntheticSpec {
            dims: [4, 4, 4],
            mix: ElementMix::Mixed,
            pattern: PartitionPattern::Slabs,
            clusters: 2,
            ..Default::default()
        })
        .unwrap();
        // Rays across the shared plane x=0, and one lying inside it.
        for (o, d, crosses) in [
            (Vec3::new(-2.0, 0.1, 0.3), Vec3::x(), true),
            (Vec3::new(0.0, -2.0, 0.3), Vec3::y(), false),
            (Vec3::new(-2.0, -1.7, -1.5), Vec3::new(1.0, 0.9, 0.8), true),
        ] {
            let ray = Ray::new(o, d);
            let mut total = 0;
            for c in &clusters {
                let segs = generate_segments(&shell_of(c), &ray, 0, 1e-9, no_locate);
                for w in segs.windows(2) {
                    assert!(w[0].t_exit < w[1].t_entry);
                }
                for s in &segs {
                    assert!(s.t_entry < s.t_exit && s.t_entry >= 0.0);
                }
                total += segs.len();
            }
            assert!(!crosses || total == 2);
        }
    }

    #[test]
    fn start_inside_uses_locator() {
        let c = single(ElementKind::Hex);
        let s = shell_of(&c);
        let ray = Ray::new(Vec3::new(0.5, 0.5, 0.5), Vec3::x());
        let segs = generate_segments(&s, &ray, 0, 1e-9, |_| {
            Some(ElementRef::new(ElementKind::Hex, 0))
        });
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].entry_face, None);
        assert!((segs[0].t_exit - 0.5).abs() < 1e-12);
        // Without a locator the interval cannot be attributed and is dropped.
        assert!(generate_segments(&s, &ray, 0, 1e-9, no_locate).is_empty());
    }
}
