//! Point containment and scalar interpolation inside one element.
//!
//! Tets use barycentric coordinates. Pyramids, wedges and hexes invert the
//! standard isoparametric map of their cell type with Newton's method and
//! test the reference coordinates.

use crate::geom::Vec3;
use crate::mesh::ElementKind;
use nalgebra::Matrix3;

/// Containment slack in barycentric / reference units.
pub const TAU: f64 = 1e-8;
const NEWTON_ITERS: usize = 10;

/// Shape function values and their reference-space gradients.
pub fn shape_functions(kind: ElementKind, xi: &Vec3) -> ([f64; 8], [Vec3; 8]) {
    let (r, s, t) = (xi.x, xi.y, xi.z);
    let mut n = [0.0; 8];
    let mut d = [Vec3::zeros(); 8];
    match kind {
        ElementKind::Tet => {
            n[..4].copy_from_slice(&[1.0 - r - s - t, r, s, t]);
            d[0] = Vec3::new(-1.0, -1.0, -1.0);
            d[1] = Vec3::x();
            d[2] = Vec3::y();
            d[3] = Vec3::z();
        }
        ElementKind::Pyr => {
            let (rm, sm, tm) = (1.0 - r, 1.0 - s, 1.0 - t);
            n[..5].copy_from_slice(&[rm * sm * tm, r * sm * tm, r * s * tm, rm * s * tm, t]);
            d[0] = Vec3::new(-sm * tm, -rm * tm, -rm * sm);
            d[1] = Vec3::new(sm * tm, -r * tm, -r * sm);
            d[2] = Vec3::new(s * tm, r * tm, -r * s);
            d[3] = Vec3::new(-s * tm, rm * tm, -rm * s);
            d[4] = Vec3::z();
        }
        ElementKind::Wed => {
            let (q, tm) = (1.0 - r - s, 1.0 - t);
            n[..6].copy_from_slice(&[q * tm, r * tm, s * tm, q * t, r * t, s * t]);
            d[0] = Vec3::new(-tm, -tm, -q);
            d[1] = Vec3::new(tm, 0.0, -r);
            d[2] = Vec3::new(0.0, tm, -s);
            d[3] = Vec3::new(-t, -t, q);
            d[4] = Vec3::new(t, 0.0, r);
            d[5] = Vec3::new(0.0, t, s);
        }
        ElementKind::Hex => {
            let corners = [
                (0.0, 0.0, 0.0),
                (1.0, 0.0, 0.0),
                (1.0, 1.0, 0.0),
                (0.0, 1.0, 0.0),
                (0.0, 0.0, 1.0),
                (1.0, 0.0, 1.0),
                (1.0, 1.0, 1.0),
                (0.0, 1.0, 1.0),
            ];
            for (i, &(cr, cs, ct)) in corners.iter().enumerate() {
                // 1D factor: c=1 -> x, c=0 -> 1-x
                let f = |c: f64, x: f64| if c > 0.5 { x } else { 1.0 - x };
                let g = |c: f64| if c > 0.5 { 1.0 } else { -1.0 };
                let (fr, fs, ft) = (f(cr, r), f(cs, s), f(ct, t));
                n[i] = fr * fs * ft;
                d[i] = Vec3::new(g(cr) * fs * ft, fr * g(cs) * ft, fr * fs * g(ct));
            }
        }
    }
    (n, d)
}

pub fn reference_centroid(kind: ElementKind) -> Vec3 {
    match kind {
        ElementKind::Tet => Vec3::new(0.25, 0.25, 0.25),
        ElementKind::Pyr => Vec3::new(0.5, 0.5, 0.2),
        ElementKind::Wed => Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.5),
        ElementKind::Hex => Vec3::new(0.5, 0.5, 0.5),
    }
}

/// Whether reference coordinates lie in the element's parameter domain.
pub fn in_reference_domain(kind: ElementKind, xi: &Vec3) -> bool {
    let unit = |x: f64| (-TAU..=1.0 + TAU).contains(&x);
    match kind {
        ElementKind::Tet => {
            xi.x >= -TAU && xi.y >= -TAU && xi.z >= -TAU && xi.x + xi.y + xi.z <= 1.0 + TAU
        }
        ElementKind::Pyr | ElementKind::Hex => unit(xi.x) && unit(xi.y) && unit(xi.z),
        ElementKind::Wed => xi.x >= -TAU && xi.y >= -TAU && xi.x + xi.y <= 1.0 + TAU && unit(xi.z),
    }
}

/// Reference coordinates of `p`, or `None` if Newton fails to converge.
pub fn reference_coords(kind: ElementKind, x: &[Vec3], p: &Vec3) -> Option<Vec3> {
    if kind == ElementKind::Tet {
        let m = Matrix3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]]);
        return m.lu().solve(&(p - x[0]));
    }
    let scale = x
        .iter()
        .skip(1)
        .map(|q| (q - x[0]).norm())
        .fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut xi = reference_centroid(kind);
    for _ in 0..NEWTON_ITERS {
        let (n, d) = shape_functions(kind, &xi);
        let mut res = -p;
        let mut j = Matrix3::zeros();
        for i in 0..kind.vertex_count() {
            res += x[i] * n[i];
            j += x[i] * d[i].transpose();
        }
        if res.norm() <= tol {
            return Some(xi);
        }
        let step = j.lu().solve(&res)?;
        xi -= step;
        if !xi.iter().all(|c| c.is_finite()) {
            return None;
        }
        if step.norm() < 1e-14 {
            return Some(xi);
        }
    }
    let (n, _) = shape_functions(kind, &xi);
    let res: Vec3 = (0..kind.vertex_count()).map(|i| x[i] * n[i]).sum::<Vec3>() - p;
    (res.norm() <= 1e3 * tol).then_some(xi)
}

/// `(inside, scalar)` for point `p` in an element with vertex positions `x`
/// and vertex scalars `f`, both in VTK order.
pub fn contains_and_interpolate(kind: ElementKind, x: &[Vec3], f: &[f64], p: &Vec3) -> (bool, f64) {
    let Some(xi) = reference_coords(kind, x, p) else {
        return (false, 0.0);
    };
    if !in_reference_domain(kind, &xi) {
        return (false, 0.0);
    }
    let (n, _) = shape_functions(kind, &xi);
    let s = (0..kind.vertex_count()).map(|i| n[i] * f[i]).sum();
    (true, s)
}
