//! Watertight ray/triangle intersection restricted to back faces.
//!
//! The triangle is moved into a sheared frame in which the ray runs along +z
//! from the origin, and the three 2D edge functions are evaluated there. Two
//! triangles sharing an edge evaluate that edge function on bitwise identical
//! inputs with opposite sign, so no ray slips between them. When an edge
//! function is exactly zero the hit is only kept by the triangle that owns the
//! edge, so a ray through a shared edge hits exactly one of the two.

use crate::geom::{Ray, Vec3};

/// Per-ray constants of the shear transform.
#[derive(Clone, Copy, Debug)]
pub struct Shear {
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl Shear {
    pub fn new(dir: &Vec3) -> Self {
        let abs = dir.abs();
        let kz = if abs.x >= abs.y && abs.x >= abs.z {
            0
        } else if abs.y >= abs.z {
            1
        } else {
            2
        };
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        // Keep the frame right-handed so the winding test keeps its meaning.
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        Shear {
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        }
    }

    #[inline]
    fn apply(&self, p: &Vec3, origin: &Vec3) -> [f64; 3] {
        let q = p - origin;
        [
            q[self.kx] - self.sx * q[self.kz],
            q[self.ky] - self.sy * q[self.kz],
            self.sz * q[self.kz],
        ]
    }
}

// Antisymmetric in (p, q): exactly one direction of an edge owns it.
#[inline]
fn owns(p: &[f64; 3], q: &[f64; 3]) -> bool {
    let dy = q[1] - p[1];
    let dx = q[0] - p[0];
    dy > 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Hit distance if the ray crosses the triangle from inside to outside,
/// i.e. the outward normal `(b-a)x(c-a)` has a positive component along the ray.
#[inline]
pub fn intersect_back_face(
    ray: &Ray,
    shear: &Shear,
    a: &Vec3,
    b: &Vec3,
    c: &Vec3,
    t_min: f64,
    t_max: f64,
) -> Option<f64> {
    let pa = shear.apply(a, &ray.origin);
    let pb = shear.apply(b, &ray.origin);
    let pc = shear.apply(c, &ray.origin);

    // Edge functions: twice the signed area of (origin, edge).
    let w_ab = pa[0] * pb[1] - pa[1] * pb[0];
    let w_bc = pb[0] * pc[1] - pb[1] * pc[0];
    let w_ca = pc[0] * pa[1] - pc[1] * pa[0];
    if w_ab < 0.0 || w_bc < 0.0 || w_ca < 0.0 {
        return None;
    }
    let det = w_ab + w_bc + w_ca;
    // det > 0: counter-clockwise seen along the ray, which is a back face.
    if det <= 0.0 {
        return None;
    }
    if (w_ab == 0.0 && !owns(&pa, &pb))
        || (w_bc == 0.0 && !owns(&pb, &pc))
        || (w_ca == 0.0 && !owns(&pc, &pa))
    {
        return None;
    }
    let t = (w_bc * pa[2] + w_ca * pb[2] + w_ab * pc[2]) / det;
    if t > t_min && t < t_max {
        Some(t)
    } else {
        None
    }
}
