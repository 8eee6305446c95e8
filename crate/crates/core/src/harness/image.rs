//! RGBA float images, binary PPM output and diagnostic color ramps.

use std::io::Write;
use std::path::Path;

/// Row-major, row 0 at the top. Colors are premultiplied.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 4]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0.0; 4]; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 4] {
        self.pixels[y * self.width + x]
    }

    /// Largest per-channel absolute difference.
    pub fn max_abs_diff(&self, other: &Image) -> f32 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..4).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f32::max)
    }

    /// Binary P6 of the color channels, composited over black.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            for c in &p[..3] {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_ppm())?;
        f.flush()
    }
}

/// Maps `v` in [0, 1] to black, blue, cyan, yellow, white.
pub fn heat_ramp(v: f32) -> [f32; 3] {
    const STOPS: [[f32; 3]; 5] = [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, 1.0, 0.0],
        [1.0, 1.0, 1.0],
    ];
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let x = v * (STOPS.len() - 1) as f32;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f32;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    [
        a[0] + (b[0] - a[0]) * f,
        a[1] + (b[1] - a[1]) * f,
        a[2] + (b[2] - a[2]) * f,
    ]
}

/// Scalar field rendered through [`heat_ramp`], scaled so `max` maps to 1.
pub fn ramp_image(width: usize, height: usize, values: &[f32], max: f32) -> Image {
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    Image {
        width,
        height,
        pixels: values
            .iter()
            .map(|&v| {
                let c = heat_ramp(v * scale);
                [c[0], c[1], c[2], 1.0]
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_bytes() {
        let mut img = Image::new(2, 1);
        img.pixels[1] = [1.0, 0.5, 0.0, 1.0];
        let b = img.to_ppm();
        assert!(b.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(&b[b.len() - 6..], &[0, 0, 0, 255, 128, 0]);
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(heat_ramp(0.0), [0.0, 0.0, 0.0]);
        assert_eq!(heat_ramp(1.0), [1.0, 1.0, 1.0]);
        assert_eq!(heat_ramp(0.25), [0.0, 0.0, 1.0]);
        let img = ramp_image(2, 1, &[0.0, 3.0], 3.0);
        assert_eq!(img.pixels[1], [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            ramp_image(1, 1, &[0.0], 0.0).pixels[0],
            [0.0, 0.0, 0.0, 1.0]
        );
    }
}
