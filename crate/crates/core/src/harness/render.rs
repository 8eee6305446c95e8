//! Scene rendering: per-rank integration into fragment stores followed by
//! deep compositing, plus the single-process oracle, the single-fragment
//! baseline and a fine-step reference integrator.

use super::camera::Camera;
use super::image::Image;
use crate::compositor::{
    deep_composite, fold, prefold, run_ranks, single_fragment_composite, to_pixel, ExchangeStats,
    PreFolded, ProtocolError, RegionAssignment, Transport, TransportError,
};
use crate::deepfb::{Fragment, PixelFragmentStore, Precision, StoreError, StoreMode};
use crate::geom::{Aabb, Vec3};
use crate::marcher::{
    integrate_segment, Accumulator, ClusterData, MarchError, MarchOptions, MarchStats,
    PrepareError, TransferFunction,
};
use crate::mesh::{load_scene, Cluster, MeshError};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("cluster {cluster}: {source}")]
    Prepare { cluster: u32, source: PrepareError },
    #[error(transparent)]
    March(#[from] MarchError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("cluster {cluster} is assigned to rank {rank}, but only {ranks} ranks run")]
    RankRange {
        cluster: u32,
        rank: u32,
        ranks: usize,
    },
    #[error("need at least one rank")]
    NoRanks,
}

/// Prepared clusters, sorted by id.
#[derive(Clone, Debug)]
pub struct Scene {
    pub clusters: Vec<ClusterData>,
}

impl Scene {
    pub fn prepare(clusters: Vec<Cluster>) -> Result<Scene, RenderError> {
        let mut clusters: Vec<ClusterData> = clusters
            .into_par_iter()
            .map(|c| {
                let id = c.id;
                ClusterData::prepare(c).map_err(|source| RenderError::Prepare {
                    cluster: id,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        clusters.sort_by_key(|c| c.id());
        Ok(Scene { clusters })
    }

    pub fn load(manifest: &Path) -> Result<Scene, RenderError> {
        Scene::prepare(load_scene(manifest)?)
    }

    pub fn bounds(&self) -> Aabb {
        self.clusters
            .iter()
            .fold(Aabb::empty(), |b, c| b.union(&c.bounds))
    }

    /// Offset used to step past shell hits, relative to the scene size.
    pub fn epsilon(&self) -> f64 {
        let d = self.bounds().diagonal();
        if d.is_finite() && d > 0.0 {
            1e-6 * d
        } else {
            1e-9
        }
    }

    /// Ranks the manifest asks for.
    pub fn rank_count(&self) -> usize {
        self.clusters
            .iter()
            .map(|c| c.cluster.rank as usize + 1)
            .max()
            .unwrap_or(1)
    }

    /// Reassigns clusters to `ranks` ranks in contiguous blocks of ids.
    pub fn assign_ranks(&mut self, ranks: usize) {
        let n = self.clusters.len().max(1);
        for (i, c) in self.clusters.iter_mut().enumerate() {
            c.cluster.rank = (i * ranks / n) as u32;
        }
    }

    pub fn element_count(&self) -> usize {
        self.clusters
            .iter()
            .map(|c| c.cluster.mesh.element_count())
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RenderConfig {
    pub camera: Camera,
    pub ranks: usize,
    pub march: MarchOptions,
    pub store: StoreMode,
    pub precision: Precision,
}

impl RenderConfig {
    /// Two-pass float stores and default marching options.
    pub fn new(camera: Camera, ranks: usize) -> Self {
        RenderConfig {
            camera,
            ranks,
            march: MarchOptions::default(),
            store: StoreMode::TwoPass,
            precision: Precision::Float,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RankStats {
    pub rank: usize,
    pub clusters: Vec<u32>,
    pub elements: usize,
    pub total_fragments: u64,
    pub avg_fragments_non_empty: f64,
    pub integration_ms: f64,
    pub compositing_ms: f64,
    pub overflows: u64,
    pub march: MarchStats,
    pub exchange: ExchangeStats,
    /// Stored fragments per pixel.
    #[serde(skip)]
    pub pixel_counts: Vec<u32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Timings {
    /// Slowest rank's integration phase.
    pub integration_ms: f64,
    /// Wall time of the compositing phase across all ranks.
    pub compositing_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: Image,
    /// Same fragments composited one pre-folded fragment per rank and pixel.
    pub baseline: Image,
    pub ranks: Vec<RankStats>,
    pub march: MarchStats,
    pub timings: Timings,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatsReport<'a> {
    pub ranks: &'a [RankStats],
    pub timings: Timings,
    pub march: MarchStats,
}

impl RenderOutput {
    pub fn report(&self) -> StatsReport<'_> {
        StatsReport {
            ranks: &self.ranks,
            timings: self.timings,
            march: self.march,
        }
    }
}

/// Per pixel: `(cluster id, fragment)` pairs.
pub type PixelFragments = Vec<Vec<(u32, Fragment)>>;

/// Fragments of every pixel from the clusters selected by `owned`, in
/// cluster-id then segment order, tagged with their cluster id.
pub fn integrate_pixels(
    scene: &Scene,
    tf: &TransferFunction,
    camera: &Camera,
    opts: &MarchOptions,
    owned: impl Fn(&ClusterData) -> bool,
) -> Result<(PixelFragments, MarchStats), MarchError> {
    let clusters: Vec<&ClusterData> = scene.clusters.iter().filter(|c| owned(c)).collect();
    let eps = scene.epsilon();
    let per_pixel: Vec<(Vec<(u32, Fragment)>, MarchStats)> = (0..camera.pixels())
        .into_par_iter()
        .map(|p| {
            let ray = camera.pixel_ray(p);
            let mut stats = MarchStats::default();
            let mut out = Vec::new();
            for c in &clusters {
                for seg in c.segments(&ray, p as u32, eps) {
                    if let Some(f) = integrate_segment(&seg, &ray, c, tf, opts, &mut stats, None)? {
                        out.push((c.id(), f));
                    }
                }
            }
            Ok((out, stats))
        })
        .collect::<Result<_, MarchError>>()?;
    let mut stats = MarchStats::default();
    let frags = per_pixel
        .into_iter()
        .map(|(f, s)| {
            stats.merge(&s);
            f
        })
        .collect();
    Ok((frags, stats))
}

fn fill_store(
    mode: StoreMode,
    frags: &[Vec<(u32, Fragment)>],
) -> Result<PixelFragmentStore, StoreError> {
    let mut store = PixelFragmentStore::new(frags.len(), mode);
    let write_all = |store: &mut PixelFragmentStore| -> Result<(), StoreError> {
        for (p, list) in frags.iter().enumerate() {
            for &(_, f) in list {
                store.write(p, f)?;
            }
        }
        Ok(())
    };
    write_all(&mut store)?;
    if mode == StoreMode::TwoPass {
        store.begin_store()?;
        write_all(&mut store)?;
    }
    Ok(store)
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Renders with `cfg.ranks` simulated ranks and deep compositing.
///
/// Ranks integrate one after another, each using the whole thread pool, so
/// per-rank integration times reflect only that rank's work. Compositing
/// then runs all ranks concurrently.
pub fn render_distributed(
    scene: &Scene,
    tf: &TransferFunction,
    cfg: &RenderConfig,
) -> Result<RenderOutput, RenderError> {
    if cfg.ranks == 0 {
        return Err(RenderError::NoRanks);
    }
    if let Some(c) = scene
        .clusters
        .iter()
        .find(|c| c.cluster.rank as usize >= cfg.ranks)
    {
        return Err(RenderError::RankRange {
            cluster: c.id(),
            rank: c.cluster.rank,
            ranks: cfg.ranks,
        });
    }
    let (w, h) = (cfg.camera.width, cfg.camera.height);
    let mut stores = Vec::with_capacity(cfg.ranks);
    let mut ranks = Vec::with_capacity(cfg.ranks);
    let mut march = MarchStats::default();
    for rank in 0..cfg.ranks {
        let t0 = Instant::now();
        let (frags, stats) = integrate_pixels(scene, tf, &cfg.camera, &cfg.march, |c| {
            c.cluster.rank as usize == rank
        })?;
        let store = fill_store(cfg.store, &frags)?;
        let integration_ms = ms(t0);
        march.merge(&stats);
        let pixel_counts = store.finalize_counts().counts;
        let total: u64 = pixel_counts.iter().map(|&c| c as u64).sum();
        let non_empty = pixel_counts.iter().filter(|&&c| c > 0).count();
        let owned: Vec<&ClusterData> = scene
            .clusters
            .iter()
            .filter(|c| c.cluster.rank as usize == rank)
            .collect();
        ranks.push(RankStats {
            rank,
            clusters: owned.iter().map(|c| c.id()).collect(),
            elements: owned.iter().map(|c| c.cluster.mesh.element_count()).sum(),
            total_fragments: total,
            avg_fragments_non_empty: if non_empty > 0 {
                total as f64 / non_empty as f64
            } else {
                0.0
            },
            integration_ms,
            overflows: store.overflows(),
            march: stats,
            pixel_counts,
            ..RankStats::default()
        });
        stores.push(store);
    }

    let regions = RegionAssignment::new(w * h, cfg.ranks);
    let t0 = Instant::now();
    let results = run_ranks(cfg.ranks, |ep| {
        let t = Instant::now();
        let out = deep_composite(ep, &regions, &stores[ep.rank()], cfg.precision, w, h)?;
        Ok::<_, ProtocolError>((out, ms(t)))
    });
    let compositing_ms = ms(t0);
    let mut image = None;
    let mut first_err: Option<ProtocolError> = None;
    for (rank, r) in results.into_iter().enumerate() {
        match r {
            Ok((out, t)) => {
                ranks[rank].compositing_ms = t;
                ranks[rank].exchange = out.stats;
                if out.image.is_some() {
                    image = out.image;
                }
            }
            // Prefer the rank that failed over ranks that were only released.
            Err(e) => {
                let secondary = matches!(
                    e,
                    ProtocolError::Transport {
                        source: TransportError::Aborted,
                        ..
                    }
                );
                if first_err.is_none() || !secondary {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e.into());
    }
    let image = image.expect("master returns the frame");

    let per_rank: Vec<Vec<Option<PreFolded>>> = stores
        .par_iter()
        .map(|s| (0..w * h).map(|p| prefold(&s.pixel_fragments(p))).collect())
        .collect();
    let baseline = single_fragment_composite(w, h, &per_rank);

    let integration_ms = ranks.iter().map(|r| r.integration_ms).fold(0.0, f64::max);
    Ok(RenderOutput {
        image,
        baseline,
        ranks,
        march,
        timings: Timings {
            integration_ms,
            compositing_ms,
            total_ms: integration_ms + compositing_ms,
        },
    })
}

/// All clusters in one process; each pixel's fragments sorted by
/// (depth, cluster id, generation order) and folded. No stores, no transport.
pub fn render_oracle(
    scene: &Scene,
    tf: &TransferFunction,
    camera: &Camera,
    opts: &MarchOptions,
) -> Result<(Image, MarchStats), RenderError> {
    let (frags, stats) = integrate_pixels(scene, tf, camera, opts, |_| true)?;
    let mut img = Image::new(camera.width, camera.height);
    img.pixels
        .par_iter_mut()
        .zip(frags.into_par_iter())
        .for_each(|(px, mut list)| {
            // Stable sort keeps generation order among equal keys.
            list.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
            *px = to_pixel(fold(list.iter().map(|x| &x.1)));
        });
    Ok((img, stats))
}

/// Integrates every ray across the whole scene box with `refine` times
/// smaller steps, locating each sample by brute force. Per-sample opacity is
/// corrected to the shorter step: `1 - (1 - a)^(1/refine)`.
pub fn render_reference(
    scene: &Scene,
    tf: &TransferFunction,
    camera: &Camera,
    opts: &MarchOptions,
    refine: u32,
) -> Image {
    let bounds = scene.bounds();
    let h = opts.step / refine as f64;
    let inv_refine = 1.0 / refine as f64;
    let mut img = Image::new(camera.width, camera.height);
    img.pixels.par_iter_mut().enumerate().for_each(|(p, px)| {
        let ray = camera.pixel_ray(p);
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let Some((t0, t1)) = bounds.intersect(&ray, &inv, 0.0, f64::INFINITY) else {
            return;
        };
        let mut acc = Accumulator::default();
        let mut k = 0u64;
        loop {
            let t = t0 + (k as f64 + 0.5) * h;
            if t >= t1 || acc.is_opaque() {
                break;
            }
            let q = ray.at(t);
            let s = scene.clusters.iter().find_map(|c| {
                let inside = (0..3).all(|a| q[a] >= c.bounds.min[a] && q[a] <= c.bounds.max[a]);
                if inside {
                    c.sample_brute_force(&q, opts.field, opts.timestep)
                } else {
                    None
                }
            });
            if let Some((_, s)) = s {
                let (rgb, a) = tf.eval(s);
                acc.add_sample(rgb, 1.0 - (1.0 - a).powf(inv_refine));
            }
            k += 1;
        }
        *px = [
            acc.color[0] as f32,
            acc.color[1] as f32,
            acc.color[2] as f32,
            acc.alpha as f32,
        ];
    });
    img
}
