//! Exit face selection by 2D left tests in the ray-centric projection.
//!
//! Looking down the ray, an outward-wound face the ray leaves through appears
//! counter-clockwise and contains the origin. Every element edge is shared by
//! two faces that traverse it in opposite directions, so one left test on a
//! shared edge rules out one of the two faces.
//!
//! Tets, pyramids and wedges are resolved by elimination over edges shared by
//! two remaining candidates; the last candidate standing is the exit. Hexes
//! test whole faces, the face opposite the entry first, then the side faces in
//! slot order, and accept the last side untested. Edges shared with the entry
//! face are never tested: the ray came in through that face, so they pass.

use crate::mesh::ElementKind;
use std::sync::OnceLock;

/// Per-kind worst cases.
pub const MAX_LEFT_TESTS: [u32; 4] = [2, 5, 7, 13];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExitFace {
    pub slot: u8,
    pub left_tests: u32,
}

/// No face contains the ray footprint; only possible for degenerate input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoExit {
    pub left_tests: u32,
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    a: u8,
    b: u8,
    // The other face using this edge.
    other: u8,
}

struct Tables {
    faces: [Vec<Vec<Edge>>; 4],
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let build = |kind: ElementKind| {
            let faces = kind.faces();
            faces
                .iter()
                .enumerate()
                .map(|(fi, f)| {
                    (0..f.len())
                        .map(|i| {
                            let (a, b) = (f[i], f[(i + 1) % f.len()]);
                            let other = faces
                                .iter()
                                .enumerate()
                                .find(|(gi, g)| {
                                    *gi != fi
                                        && (0..g.len())
                                            .any(|j| g[j] == b && g[(j + 1) % g.len()] == a)
                                })
                                .map(|(gi, _)| gi as u8)
                                .expect("closed element");
                            Edge { a, b, other }
                        })
                        .collect()
                })
                .collect()
        };
        Tables {
            faces: ElementKind::ALL.map(build),
        }
    })
}

/// Positive when the origin lies left of `a -> b`.
#[inline]
pub fn left(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Finds the face the ray leaves through. `p` holds the element's vertices
/// projected into the ray frame, in VTK order.
pub fn find_exit_face(
    kind: ElementKind,
    entry: Option<u8>,
    p: &[[f64; 2]],
) -> Result<ExitFace, NoExit> {
    let faces = &tables().faces[kind as usize];
    let mut tests = 0u32;
    let pass = |e: &Edge, tests: &mut u32| {
        *tests += 1;
        left(&p[e.a as usize], &p[e.b as usize]) >= 0.0
    };

    let Some(entry) = entry else {
        // Started inside: no edge is known to pass, test every face fully.
        for (slot, f) in faces.iter().enumerate() {
            if f.iter().all(|e| pass(e, &mut tests)) {
                return Ok(ExitFace {
                    slot: slot as u8,
                    left_tests: tests,
                });
            }
        }
        return Err(NoExit { left_tests: tests });
    };

    if kind == ElementKind::Hex {
        let opposite = entry ^ 1;
        let order =
            std::iter::once(opposite).chain((0..6u8).filter(|&s| s != entry && s != opposite));
        let order: Vec<u8> = order.collect();
        for (i, &slot) in order.iter().enumerate() {
            if i + 1 == order.len() {
                return Ok(ExitFace {
                    slot,
                    left_tests: tests,
                });
            }
            let f = &faces[slot as usize];
            if f.iter()
                .filter(|e| e.other != entry)
                .all(|e| pass(e, &mut tests))
            {
                return Ok(ExitFace {
                    slot,
                    left_tests: tests,
                });
            }
        }
        unreachable!("hex has six faces");
    }

    let mut cand: u8 = ((1u16 << faces.len()) - 1) as u8 & !(1 << entry);
    while cand.count_ones() > 1 {
        let pair = (0..faces.len())
            .filter(|&f| cand & (1 << f) != 0)
            .flat_map(|f| faces[f].iter().map(move |e| (f, e)))
            .find(|(_, e)| cand & (1 << e.other) != 0);
        match pair {
            Some((f, e)) => {
                if pass(e, &mut tests) {
                    cand &= !(1 << e.other);
                } else {
                    cand &= !(1 << f);
                }
            }
            None => {
                // Remaining candidates share no edge: test one of them whole.
                let f = cand.trailing_zeros() as usize;
                if faces[f]
                    .iter()
                    .filter(|e| e.other != entry)
                    .all(|e| pass(e, &mut tests))
                {
                    return Ok(ExitFace {
                        slot: f as u8,
                        left_tests: tests,
                    });
                }
                cand &= !(1 << f);
            }
        }
    }
    match cand {
        0 => Err(NoExit { left_tests: tests }),
        c => Ok(ExitFace {
            slot: c.trailing_zeros() as u8,
            left_tests: tests,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Ray, Vec3};
    use crate::marcher::frame::RayFrame;
    use crate::mesh::reference_element;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn project(ray: &Ray, pts: &[Vec3]) -> Vec<[f64; 2]> {
        let f = RayFrame::new(ray);
        pts.iter().map(|p| f.project(p)).collect()
    }

    // Ray parameter where the ray crosses face `slot` (fan-triangulated), if it does.
    fn face_hit(ray: &Ray, pts: &[Vec3], face: &[u8]) -> Option<f64> {
        let a = pts[face[0] as usize];
        (1..face.len() - 1).find_map(|i| {
            let b = pts[face[i] as usize];
            let c = pts[face[i + 1] as usize];
            let e1 = b - a;
            let e2 = c - a;
            let h = ray.dir.cross(&e2);
            let det = e1.dot(&h);
            if det.abs() < 1e-14 {
                return None;
            }
            let s = ray.origin - a;
            let u = s.dot(&h) / det;
            let q = s.cross(&e1);
            let v = ray.dir.dot(&q) / det;
            let t = e2.dot(&q) / det;
            (u >= 0.0 && v >= 0.0 && u + v <= 1.0).then_some(t)
        })
    }

    #[test]
    fn tet_needs_at_most_two_tests() {
        let (pts, _) = reference_element(ElementKind::Tet);
        // Axis ray entering through the face opposite v2 (slot 0, y=0 plane).
        let ray = Ray::new(Vec3::new(0.2, -1.0, 0.2), Vec3::y());
        let p = project(&ray, &pts);
        let exit = find_exit_face(ElementKind::Tet, Some(0), &p).unwrap();
        assert_eq!(exit.slot, 1);
        assert!(exit.left_tests <= 2);
    }

    #[test]
    fn hex_straight_through_exits_opposite() {
        let (pts, _) = reference_element(ElementKind::Hex);
        let ray = Ray::new(Vec3::new(0.3, 0.6, -1.0), Vec3::z());
        let exit = find_exit_face(ElementKind::Hex, Some(4), &project(&ray, &pts)).unwrap();
        assert_eq!(exit.slot, 5);
        assert_eq!(exit.left_tests, 4);
    }

    // Random rays through randomly distorted elements; compare against the
    // smallest 3D ray-face intersection beyond the entry face.
    #[test]
    fn agrees_with_3d_intersection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in ElementKind::ALL {
            let mut checked = 0;
            while checked < 400 {
                // An affine map keeps the faces planar.
                let (mut pts, _) = reference_element(kind);
                let m = nalgebra::Matrix3::from_fn(
                    |i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3),
                );
                if m.determinant() < 0.3 {
                    continue;
                }
                for q in pts.iter_mut() {
                    *q = m * *q;
                }
                let centroid = pts.iter().sum::<Vec3>() / pts.len() as f64;
                let inner = centroid
                    + Vec3::new(
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                    );
                let dir = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if dir.norm() < 0.1 {
                    continue;
                }
                let through = Ray::new(inner, dir);
                let faces = kind.faces();
                let hits: Vec<(usize, f64)> = faces
                    .iter()
                    .enumerate()
                    .filter_map(|(s, f)| face_hit(&through, &pts, f).map(|t| (s, t)))
                    .collect();
                let Some(&(entry, t_in)) = hits
                    .iter()
                    .filter(|h| h.1 < 0.0)
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                else {
                    continue;
                };
                let Some(&(expect, _)) = hits
                    .iter()
                    .filter(|h| h.1 > 0.0)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                else {
                    continue;
                };
                let ray = Ray::new(through.at(t_in - 1.0), through.dir);
                let got = find_exit_face(kind, Some(entry as u8), &project(&ray, &pts)).unwrap();
                assert_eq!(got.slot as usize, expect, "{kind:?}");
                assert!(got.left_tests <= MAX_LEFT_TESTS[kind as usize]);
                let inside = find_exit_face(kind, None, &project(&through, &pts)).unwrap();
                assert_eq!(inside.slot as usize, expect, "{kind:?} from inside");
                checked += 1;
            }
        }
    }
}
