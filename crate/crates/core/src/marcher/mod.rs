//! Element marching along one segment.
//!
//! A march starts at the element owning the segment's entry face, rebuilt from
//! its compact record and that face. Samples sit at
//! `t_entry + (k + 1/2) * dt`. Before each sample the march moves forward
//! through exit faces until the current element contains the sample point;
//! each move reads the neighbor across the exit face from the connectivity
//! and rebuilds it from the exit face ids. Samples are mapped through the
//! transfer function and accumulated front to back.

pub mod exit;
pub mod frame;
pub mod interp;
pub mod tf;

pub use exit::{find_exit_face, ExitFace, NoExit, MAX_LEFT_TESTS};
pub use frame::RayFrame;
pub use interp::{contains_and_interpolate, reference_coords, shape_functions, TAU};
pub use tf::{ControlPoint, TfError, TransferFunction};

use crate::compaction::{reconstruct, CompactElements, EntryFace};
use crate::deepfb::Fragment;
use crate::geom::{Aabb, Ray, Vec3};
use crate::mesh::{
    build_connectivity, Cluster, Connectivity, Element, ElementRef, FaceIds, FaceShape, MeshError,
};
use crate::shell::{generate_segments, Segment, Shell, ShellError};
use serde::Serialize;
use thiserror::Error;

/// Accumulated opacity at which a ray counts as opaque.
pub const OPAQUE: f64 = 0.999;

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Shell(#[from] ShellError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarchError {
    #[error("cluster {cluster} has no scalar block for field {field}, timestep {timestep}")]
    MissingField {
        cluster: u32,
        field: usize,
        timestep: usize,
    },
}

/// Everything the renderer needs for one cluster, built once per scene.
#[derive(Clone, Debug)]
pub struct ClusterData {
    pub cluster: Cluster,
    pub conn: Connectivity,
    pub compact: CompactElements,
    pub shell: Shell,
    pub bounds: Aabb,
}

impl ClusterData {
    pub fn prepare(cluster: Cluster) -> Result<Self, PrepareError> {
        let conn = build_connectivity(&cluster.mesh)?;
        let compact = CompactElements::from_mesh(&cluster.mesh);
        let shell = Shell::build(&cluster, &conn)?;
        let bounds = cluster.mesh.bounds();
        Ok(ClusterData {
            cluster,
            conn,
            compact,
            shell,
            bounds,
        })
    }

    pub fn id(&self) -> u32 {
        self.cluster.id
    }

    fn gather(&self, ids: &[u32], scalars: Option<&[f32]>, x: &mut [Vec3; 8], f: &mut [f64; 8]) {
        let pos = &self.cluster.mesh.positions;
        for (i, &id) in ids.iter().enumerate() {
            x[i] = pos[id as usize];
            f[i] = scalars.map_or(0.0, |s| s[id as usize] as f64);
        }
    }

    /// First element (in storage order) containing `p`. Linear scan.
    pub fn locate(&self, p: &Vec3) -> Option<ElementRef> {
        let mesh = &self.cluster.mesh;
        let mut x = [Vec3::zeros(); 8];
        let mut f = [0.0; 8];
        mesh.refs().find(|&r| {
            let ids = mesh.ids(r);
            self.gather(ids, None, &mut x, &mut f);
            let n = ids.len();
            let mut b = Aabb::empty();
            x[..n].iter().for_each(|q| b.grow(q));
            let pad = 1e-9 * b.diagonal();
            let near = (0..3).all(|a| p[a] >= b.min[a] - pad && p[a] <= b.max[a] + pad);
            near && contains_and_interpolate(r.kind, &x[..n], &f[..n], p).0
        })
    }

    /// Scalar at `p` from the first containing element, by linear scan.
    pub fn sample_brute_force(
        &self,
        p: &Vec3,
        field: usize,
        timestep: usize,
    ) -> Option<(ElementRef, f64)> {
        let scalars = self.cluster.mesh.fields.block(field, timestep)?;
        let r = self.locate(p)?;
        let ids = self.cluster.mesh.ids(r);
        let mut x = [Vec3::zeros(); 8];
        let mut f = [0.0; 8];
        self.gather(ids, Some(scalars), &mut x, &mut f);
        let (_, s) = contains_and_interpolate(r.kind, &x[..ids.len()], &f[..ids.len()], p);
        Some((r, s))
    }

    pub fn segments(&self, ray: &Ray, pixel: u32, eps: f64) -> Vec<Segment> {
        generate_segments(&self.shell, ray, pixel, eps, |p| self.locate(p))
    }
}

/// Bookkeeping carried from element to element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MarchState {
    pub last_face_shape: Option<FaceShape>,
    pub current: ElementRef,
    /// VTK-ordered ids; the entry face ids sit in their slot positions.
    pub ids: Element,
    pub entry_slot: Option<u8>,
}

/// Front-to-back accumulation of premultiplied color.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accumulator {
    pub color: [f64; 3],
    pub alpha: f64,
}

impl Accumulator {
    pub fn add_sample(&mut self, rgb: [f64; 3], alpha: f64) {
        let w = (1.0 - self.alpha) * alpha;
        for c in 0..3 {
            self.color[c] += w * rgb[c];
        }
        self.alpha += w;
    }

    /// `self` in front of `back`.
    pub fn over(&self, back: &Accumulator) -> Accumulator {
        let k = 1.0 - self.alpha;
        Accumulator {
            color: [
                self.color[0] + k * back.color[0],
                self.color[1] + k * back.color[1],
                self.color[2] + k * back.color[2],
            ],
            alpha: self.alpha + k * back.alpha,
        }
    }

    pub fn is_opaque(&self) -> bool {
        self.alpha >= OPAQUE
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MarchOptions {
    pub step: f64,
    pub field: usize,
    pub timestep: usize,
    /// Compare every reconstructed element against the stored original.
    pub verify: bool,
}

impl Default for MarchOptions {
    fn default() -> Self {
        MarchOptions {
            step: 0.01,
            field: 0,
            timestep: 0,
            verify: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MarchStats {
    pub segments: u64,
    pub samples: u64,
    pub element_steps: u64,
    /// Worst left-test count seen in one step, per element kind.
    pub max_left_tests: [u32; 4],
    pub left_tests: u64,
    pub reconstructions: u64,
    pub reconstruction_mismatches: u64,
    pub march_failures: u64,
}

impl MarchStats {
    pub fn merge(&mut self, o: &MarchStats) {
        self.segments += o.segments;
        self.samples += o.samples;
        self.element_steps += o.element_steps;
        for k in 0..4 {
            self.max_left_tests[k] = self.max_left_tests[k].max(o.max_left_tests[k]);
        }
        self.left_tests += o.left_tests;
        self.reconstructions += o.reconstructions;
        self.reconstruction_mismatches += o.reconstruction_mismatches;
        self.march_failures += o.march_failures;
    }
}

/// One sample as taken by the march, for comparisons against brute force.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub element: ElementRef,
    pub scalar: f64,
}

struct Marcher<'a> {
    data: &'a ClusterData,
    scalars: &'a [f32],
    frame: RayFrame,
    opts: &'a MarchOptions,
    state: MarchState,
    x: [Vec3; 8],
    f: [f64; 8],
}

impl Marcher<'_> {
    fn load(&mut self) {
        let ids = self.state.ids;
        self.data
            .gather(ids.ids(), Some(self.scalars), &mut self.x, &mut self.f);
    }

    fn sample(&self, p: &Vec3) -> (bool, f64) {
        let n = self.state.current.kind.vertex_count();
        contains_and_interpolate(self.state.current.kind, &self.x[..n], &self.f[..n], p)
    }

    fn rebuild(&self, at: ElementRef, entry: EntryFace, stats: &mut MarchStats) -> Option<Element> {
        stats.reconstructions += 1;
        let rebuilt = reconstruct(&self.data.compact.record(at), &entry);
        let ok = match &rebuilt {
            Ok(e) => !self.opts.verify || *e == self.data.cluster.mesh.element(at),
            Err(_) => false,
        };
        if !ok {
            stats.reconstruction_mismatches += 1;
        }
        rebuilt.ok()
    }

    /// Moves through the exit face. `Ok(false)` when the ray leaves the cluster.
    fn advance(&mut self, stats: &mut MarchStats) -> Result<bool, ()> {
        let kind = self.state.current.kind;
        let mut p2 = [[0.0; 2]; 8];
        for (i, q) in self.x[..kind.vertex_count()].iter().enumerate() {
            p2[i] = self.frame.project(q);
        }
        let exit = find_exit_face(kind, self.state.entry_slot, &p2[..kind.vertex_count()]);
        let tests = match exit {
            Ok(e) => e.left_tests,
            Err(e) => e.left_tests,
        };
        stats.left_tests += tests as u64;
        let k = kind as usize;
        stats.max_left_tests[k] = stats.max_left_tests[k].max(tests);
        let exit = exit.map_err(|_| ())?;

        let face = self.state.ids.face(exit.slot);
        let Some(n) = self.data.conn.neighbor(self.state.current, exit.slot) else {
            return Ok(false);
        };
        let mut ids = [0u32; 4];
        let len = n.neighbor_face_ids(face.ids.as_slice(), &mut ids);
        let entry = EntryFace {
            slot: n.slot,
            ids: FaceIds::new(&ids[..len]),
        };
        let el = self.rebuild(n.element, entry, stats).ok_or(())?;
        self.state = MarchState {
            last_face_shape: Some(face.ids.shape()),
            current: n.element,
            ids: el,
            entry_slot: Some(n.slot),
        };
        stats.element_steps += 1;
        self.load();
        Ok(true)
    }
}

/// Integrates one segment. Returns `None` when nothing visible was accumulated
/// or the march failed (counted in `stats`).
pub fn integrate_segment(
    seg: &Segment,
    ray: &Ray,
    data: &ClusterData,
    tf: &TransferFunction,
    opts: &MarchOptions,
    stats: &mut MarchStats,
    mut trace: Option<&mut Vec<SampleRecord>>,
) -> Result<Option<Fragment>, MarchError> {
    let scalars = data
        .cluster
        .mesh
        .fields
        .block(opts.field, opts.timestep)
        .ok_or(MarchError::MissingField {
            cluster: data.id(),
            field: opts.field,
            timestep: opts.timestep,
        })?;
    stats.segments += 1;
    let start = seg.entry_element();
    let mut m = Marcher {
        data,
        scalars,
        frame: RayFrame::new(ray),
        opts,
        state: MarchState {
            last_face_shape: None,
            current: start,
            ids: data.cluster.mesh.element(start),
            entry_slot: None,
        },
        x: [Vec3::zeros(); 8],
        f: [0.0; 8],
    };
    if let Some(entry) = seg.entry_face_ids(&data.shell) {
        let Some(el) = m.rebuild(start, entry, stats) else {
            stats.march_failures += 1;
            return Ok(None);
        };
        m.state.ids = el;
        m.state.entry_slot = Some(entry.slot);
        m.state.last_face_shape = Some(entry.ids.shape());
    }
    m.load();

    let max_steps = data.cluster.mesh.element_count() as u64 + 8;
    let mut steps = 0u64;
    let mut acc = Accumulator::default();
    let mut k = 0u64;
    'samples: loop {
        let t = seg.t_entry + (k as f64 + 0.5) * opts.step;
        if t >= seg.t_exit {
            break;
        }
        let p = ray.at(t);
        let s = loop {
            let (inside, s) = m.sample(&p);
            if inside {
                break s;
            }
            steps += 1;
            match m.advance(stats) {
                Ok(true) if steps <= max_steps => {}
                Ok(true) | Err(()) => {
                    stats.march_failures += 1;
                    return Ok(None);
                }
                // Numerically past the last element before t_exit.
                Ok(false) => break 'samples,
            }
        };
        stats.samples += 1;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(SampleRecord {
                t,
                element: m.state.current,
                scalar: s,
            });
        }
        let (rgb, a) = tf.eval(s);
        acc.add_sample(rgb, a);
        if acc.is_opaque() {
            break;
        }
        k += 1;
    }
    Ok((acc.alpha > 0.0).then(|| Fragment::from_accumulator(&acc, seg.t_entry)))
}

#[cfg(test)]
mod tests;
