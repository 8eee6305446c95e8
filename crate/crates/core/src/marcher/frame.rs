use crate::geom::{Ray, Vec3};

/// Right-handed orthonormal basis with `w` along the ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayFrame {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub w: Vec3,
}

impl RayFrame {
    pub fn new(ray: &Ray) -> Self {
        let w = ray.dir;
        let a = w.abs();
        let helper = if a.x <= a.y && a.x <= a.z {
            Vec3::x()
        } else if a.y <= a.z {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let u = helper.cross(&w).normalize();
        let v = w.cross(&u);
        RayFrame {
            origin: ray.origin,
            u,
            v,
            w,
        }
    }

    /// Coordinates of `p` with the ray along +z through (0, 0).
    #[inline]
    pub fn to_ray_centric(&self, p: &Vec3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(self.u.dot(&d), self.v.dot(&d), self.w.dot(&d))
    }

    #[inline]
    pub fn project(&self, p: &Vec3) -> [f64; 2] {
        let d = p - self.origin;
        [self.u.dot(&d), self.v.dot(&d)]
    }

    pub fn from_ray_centric(&self, q: &Vec3) -> Vec3 {
        self.origin + self.u * q.x + self.v * q.y + self.w * q.z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_is_orthonormal_and_right_handed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if d.norm() < 1e-3 {
                continue;
            }
            let f = RayFrame::new(&Ray::new(Vec3::zeros(), d));
            assert!(
                f.u.dot(&f.v).abs() < 1e-12
                    && f.u.dot(&f.w).abs() < 1e-12
                    && f.v.dot(&f.w).abs() < 1e-12
            );
            assert!((f.u.norm() - 1.0).abs() < 1e-12 && (f.v.norm() - 1.0).abs() < 1e-12);
            assert!((f.u.cross(&f.v) - f.w).norm() < 1e-12);
        }
    }

    #[test]
    fn points_on_ray_map_to_axis() {
        let ray = Ray::new(Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.3, 0.4, -1.0));
        let f = RayFrame::new(&ray);
        assert!(f.to_ray_centric(&ray.origin).norm() < 1e-15);
        let q = f.to_ray_centric(&ray.at(3.0));
        assert!((q - Vec3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
        let p = Vec3::new(-4.0, 2.5, 7.0);
        assert!((f.from_ray_centric(&f.to_ray_centric(&p)) - p).norm() < 1e-12);
    }
}
