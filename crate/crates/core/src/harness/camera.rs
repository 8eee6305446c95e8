use crate::geom::{Ray, Vec3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("field of view {0} outside (0, 180) degrees")]
    Fov(f64),
    #[error("up vector is parallel to the view direction")]
    Up,
    #[error("image size must be positive")]
    Size,
    #[error("camera spec needs 10 comma-separated numbers (pos, look, up, fov), got {0:?}")]
    Parse(String),
}

/// Pinhole camera, one primary ray through each pixel center. Row 0 is the top.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
    right: Vec3,
    true_up: Vec3,
    forward: Vec3,
}

impl Camera {
    pub fn new(
        position: Vec3,
        look_at: Vec3,
        up: Vec3,
        fov_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(CameraError::Fov(fov_deg));
        }
        if width == 0 || height == 0 {
            return Err(CameraError::Size);
        }
        let forward = (look_at - position).normalize();
        let right = forward.cross(&up);
        if !forward.iter().all(|c| c.is_finite())
            || right.norm() < 1e-12 * up.norm()
            || up.norm() == 0.0
        {
            return Err(CameraError::Up);
        }
        let right = right.normalize();
        Ok(Camera {
            position,
            look_at,
            up,
            fov_deg,
            width,
            height,
            right,
            true_up: right.cross(&forward),
            forward,
        })
    }

    /// Parses `px,py,pz,lx,ly,lz,ux,uy,uz,fov`.
    pub fn parse(spec: &str, width: usize, height: usize) -> Result<Self, CameraError> {
        let v: Vec<f64> = spec
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CameraError::Parse(spec.into()))?;
        if v.len() != 10 {
            return Err(CameraError::Parse(spec.into()));
        }
        Camera::new(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3], v[4], v[5]),
            Vec3::new(v[6], v[7], v[8]),
            v[9],
            width,
            height,
        )
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn ray(&self, x: usize, y: usize) -> Ray {
        let tan = (self.fov_deg.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = ((x as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * tan * aspect;
        let sy = (1.0 - (y as f64 + 0.5) / self.height as f64 * 2.0) * tan;
        Ray::new(
            self.position,
            self.forward + self.right * sx + self.true_up * sy,
        )
    }

    /// Ray of row-major pixel `p`.
    pub fn pixel_ray(&self, p: usize) -> Ray {
        self.ray(p % self.width, p / self.width)
    }
}
