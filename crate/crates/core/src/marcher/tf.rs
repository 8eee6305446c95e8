//! Piecewise-linear transfer functions.
//!
//! Text form: a `domain sMin sMax` line, then one `s r g b a` line per control
//! point with increasing `s`. Blank lines and `#` comments are ignored.

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TfError {
    #[error("transfer function needs at least one control point")]
    Empty,
    #[error("control scalars must be strictly increasing (at point {0})")]
    NotIncreasing(usize),
    #[error("opacity {0} outside [0, 1]")]
    Opacity(f64),
    #[error("empty or inverted domain [{0}, {1}]")]
    Domain(f64, f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlPoint {
    pub s: f64,
    pub rgb: [f64; 3],
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    s_min: f64,
    s_max: f64,
    points: Vec<ControlPoint>,
}

impl TransferFunction {
    pub fn new(domain: (f64, f64), points: Vec<ControlPoint>) -> Result<Self, TfError> {
        if points.is_empty() {
            return Err(TfError::Empty);
        }
        if !(domain.0 <= domain.1) {
            return Err(TfError::Domain(domain.0, domain.1));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].s > w[0].s) {
                return Err(TfError::NotIncreasing(i + 1));
            }
        }
        if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(&p.alpha)) {
            return Err(TfError::Opacity(p.alpha));
        }
        Ok(TransferFunction {
            s_min: domain.0,
            s_max: domain.1,
            points,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn is_transparent(&self) -> bool {
        self.points.iter().all(|p| p.alpha == 0.0)
    }

    /// Color and opacity at `s`, clamped to the domain and the outer control points.
    pub fn eval(&self, s: f64) -> ([f64; 3], f64) {
        let s = s.clamp(self.s_min, self.s_max);
        let pts = &self.points;
        let first = &pts[0];
        if s <= first.s {
            return (first.rgb, first.alpha);
        }
        let last = &pts[pts.len() - 1];
        if s >= last.s {
            return (last.rgb, last.alpha);
        }
        let i = pts.partition_point(|p| p.s <= s);
        let (a, b) = (&pts[i - 1], &pts[i]);
        let f = (s - a.s) / (b.s - a.s);
        let lerp = |x: f64, y: f64| x + (y - x) * f;
        (
            [
                lerp(a.rgb[0], b.rgb[0]),
                lerp(a.rgb[1], b.rgb[1]),
                lerp(a.rgb[2], b.rgb[2]),
            ],
            lerp(a.alpha, b.alpha),
        )
    }

    pub fn parse(text: &str) -> Result<Self, TfError> {
        let mut domain = None;
        let mut points = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| TfError::Parse { line: n + 1, msg };
            let mut words = line.split_whitespace().peekable();
            if words.peek() == Some(&"domain") {
                words.next();
                let v: Vec<f64> = words
                    .map(|w| w.parse::<f64>().map_err(|e| err(format!("{w:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                if v.len() != 2 {
                    return Err(err("domain takes two numbers".into()));
                }
                domain = Some((v[0], v[1]));
                continue;
            }
            let v: Vec<f64> = words
                .map(|w| w.parse::<f64>().map_err(|e| err(format!("{w:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            if v.len() != 5 {
                return Err(err(format!("expected `s r g b a`, got {} values", v.len())));
            }
            points.push(ControlPoint {
                s: v[0],
                rgb: [v[1], v[2], v[3]],
                alpha: v[4],
            });
        }
        let domain = domain.ok_or(TfError::Parse {
            line: 1,
            msg: "missing `domain sMin sMax` line".into(),
        })?;
        TransferFunction::new(domain, points)
    }

    pub fn load(path: &Path) -> Result<Self, TfError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("domain {} {}\n", self.s_min, self.s_max);
        for p in &self.points {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                p.s, p.rgb[0], p.rgb[1], p.rgb[2], p.alpha
            ));
        }
        out
    }
}
