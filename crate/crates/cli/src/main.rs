use clap::{Parser, Subcommand, ValueEnum};
use deepvol::deepfb::{Overflow, Precision, StoreMode, DEFAULT_K};
use deepvol::geom::Vec3;
use deepvol::harness::{
    diff_images, fragment_heatmaps, render_distributed, render_oracle, Camera, RenderConfig,
    RenderOutput, Scene,
};
use deepvol::marcher::{ControlPoint, MarchOptions, TransferFunction};
use deepvol::mesh::{
    make_synthetic_partition, save_scene, ElementMix, PartitionPattern, ScalarFieldKind,
    SyntheticSpec,
};
use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "deepvol",
    version,
    about = "Distributed unstructured volume rendering with deep compositing"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a scene across simulated ranks.
    Render(RenderArgs),
    /// Write a synthetic partitioned scene and a default transfer function.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FragMode {
    TwoPass,
    SinglePass,
}

#[derive(Clone, Copy, ValueEnum)]
enum OverflowArg {
    Drop,
    Merge,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Float,
    Fixed,
}

#[derive(Parser)]
struct RenderArgs {
    /// Scene manifest: one `rank path` line per cluster.
    #[arg(long)]
    scene: PathBuf,
    /// `px,py,pz,lx,ly,lz,ux,uy,uz,fov`; framed from the scene bounds when omitted.
    #[arg(long)]
    camera: Option<String>,
    /// Image size as `WxH`.
    #[arg(long, default_value = "256x256", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long)]
    tf: PathBuf,
    /// Defaults to the highest rank in the manifest plus one.
    #[arg(long)]
    ranks: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long, value_enum, default_value = "two-pass")]
    frag_mode: FragMode,
    #[arg(long, default_value_t = DEFAULT_K)]
    frag_k: usize,
    #[arg(long, value_enum, default_value = "drop")]
    overflow: OverflowArg,
    #[arg(long, value_enum, default_value = "float")]
    precision: PrecisionArg,
    #[arg(long, default_value_t = 0)]
    field: usize,
    #[arg(long, default_value_t = 0)]
    timestep: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also render the single-process oracle and report the difference.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// L2 heatmap of the deep image against the single-fragment baseline.
    #[arg(long)]
    diff: Option<PathBuf>,
    /// Directory for per-rank and combined fragment-count heatmaps.
    #[arg(long)]
    heatmaps: Option<PathBuf>,
    #[arg(long)]
    baseline_single_fragment: Option<PathBuf>,
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Render this many times and report every run's timings.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Check every reconstructed element against the stored mesh.
    #[arg(long)]
    verify: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MixArg {
    Tet,
    Pyr,
    Wed,
    Hex,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Slabs,
    Checkerboard,
    Combs,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    CenterDistance,
    Sphere,
    LinearX,
}

#[derive(Parser)]
struct SynthArgs {
    /// Output directory; receives `scene.txt`, cluster files and `tf.txt`.
    #[arg(long)]
    out: PathBuf,
    /// Cells per axis as `NX,NY,NZ`.
    #[arg(long, default_value = "8,8,8", value_parser = parse_dims)]
    dims: [usize; 3],
    #[arg(long, value_enum, default_value = "tet")]
    mix: MixArg,
    #[arg(long, value_enum, default_value = "combs")]
    pattern: PatternArg,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = 2)]
    ranks: usize,
    #[arg(long, value_enum, default_values = ["linear-x", "center-distance"])]
    field: Vec<FieldArg>,
    #[arg(long, default_value_t = 1)]
    timesteps: usize,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: usize = w.parse().map_err(|_| "bad width")?;
    let h: usize = h.parse().map_err(|_| "bad height")?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad count {x:?}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected NX,NY,NZ".to_string())
}

fn auto_camera(scene: &Scene, w: usize, h: usize) -> Result<Camera, Box<dyn Error>> {
    let b = scene.bounds();
    let c = b.centroid();
    let r = 0.5 * b.diagonal();
    let eye = c + Vec3::new(-1.6, -1.2, 0.9).normalize() * (2.6 * r);
    Ok(Camera::new(eye, c, Vec3::z(), 45.0, w, h)?)
}

fn render(a: RenderArgs) -> Result<(), Box<dyn Error>> {
    if !(a.step > 0.0) {
        return Err("--step must be positive".into());
    }
    let mut scene = Scene::load(&a.scene).map_err(|e| format!("{}: {e}", a.scene.display()))?;
    let tf = TransferFunction::load(&a.tf).map_err(|e| format!("{}: {e}", a.tf.display()))?;
    let (w, h) = a.size;
    let camera = match &a.camera {
        Some(spec) => Camera::parse(spec, w, h)?,
        None => auto_camera(&scene, w, h)?,
    };
    let ranks = a.ranks.unwrap_or_else(|| scene.rank_count());
    if a.ranks.is_some() && scene.rank_count() > ranks {
        eprintln!(
            "manifest names {} ranks; spreading clusters over {ranks}",
            scene.rank_count()
        );
        scene.assign_ranks(ranks);
    }
    let cfg = RenderConfig {
        camera,
        ranks,
        march: MarchOptions {
            step: a.step,
            field: a.field,
            timestep: a.timestep,
            verify: a.verify,
        },
        store: match a.frag_mode {
            FragMode::TwoPass => StoreMode::TwoPass,
            FragMode::SinglePass => StoreMode::SinglePass {
                k: a.frag_k.max(1),
                overflow: match a.overflow {
                    OverflowArg::Drop => Overflow::Drop,
                    OverflowArg::Merge => Overflow::Merge,
                },
            },
        },
        precision: match a.precision {
            PrecisionArg::Float => Precision::Float,
            PrecisionArg::Fixed => Precision::Fixed,
        },
    };

    let mut runs = Vec::new();
    let mut last: Option<RenderOutput> = None;
    for i in 0..a.repeat.max(1) {
        let out = render_distributed(&scene, &tf, &cfg)?;
        let t = out.timings;
        eprintln!(
            "run {i}: integration {:.1} ms, compositing {:.1} ms, total {:.1} ms",
            t.integration_ms, t.compositing_ms, t.total_ms
        );
        runs.push(t);
        last = Some(out);
    }
    let out = last.expect("at least one run");
    out.image.write_ppm(&a.out)?;
    let frags: u64 = out.ranks.iter().map(|r| r.total_fragments).sum();
    eprintln!(
        "{ranks} ranks, {frags} fragments, {} segments",
        out.march.segments
    );
    if out.march.march_failures > 0 || out.march.reconstruction_mismatches > 0 {
        eprintln!(
            "warning: {} march failures, {} reconstruction mismatches",
            out.march.march_failures, out.march.reconstruction_mismatches
        );
    }

    if let Some(p) = &a.oracle {
        let (img, _) = render_oracle(&scene, &tf, &camera, &cfg.march)?;
        img.write_ppm(p)?;
        let d = diff_images(&out.image, &img)?;
        eprintln!(
            "oracle: max |d| {:.3e}, mean L2 {:.3e}",
            d.max_abs, d.mean_l2
        );
    }
    if let Some(p) = &a.baseline_single_fragment {
        out.baseline.write_ppm(p)?;
    }
    if let Some(p) = &a.diff {
        let d = diff_images(&out.image, &out.baseline)?;
        d.heatmap.write_ppm(p)?;
        eprintln!(
            "single-fragment baseline: max |d| {:.3e}, mean L2 {:.3e}",
            d.max_abs, d.mean_l2
        );
    }
    if let Some(dir) = &a.heatmaps {
        std::fs::create_dir_all(dir)?;
        let maps = fragment_heatmaps(&out.ranks, w, h);
        for (r, img) in maps.per_rank.iter().enumerate() {
            img.write_ppm(&dir.join(format!("fragments_rank{r}.ppm")))?;
        }
        maps.combined
            .write_ppm(&dir.join("fragments_combined.ppm"))?;
    }
    if let Some(p) = &a.stats {
        let mut v = serde_json::to_value(out.report())?;
        v["runs"] = serde_json::to_value(&runs)?;
        std::fs::write(p, serde_json::to_string_pretty(&v)?)?;
    }
    Ok(())
}

fn default_tf(fields: &[ScalarFieldKind]) -> TransferFunction {
    // A density bump should fade to nothing outside the sphere.
    let floor = if matches!(fields.first(), Some(ScalarFieldKind::SphereDensity { .. })) {
        0.0
    } else {
        0.03
    };
    let pts = [
        (0.0, [0.9, 0.15, 0.1], floor),
        (0.35, [0.15, 0.85, 0.2], 0.03),
        (0.7, [0.15, 0.3, 0.95], 0.03),
        (1.0, [1.0, 0.95, 0.3], 0.04),
    ];
    TransferFunction::new(
        (0.0, 1.0),
        pts.iter()
            .map(|&(s, rgb, alpha)| ControlPoint { s, rgb, alpha })
            .collect(),
    )
    .expect("valid default")
}

fn synth(a: SynthArgs) -> Result<(), Box<dyn Error>> {
    let fields: Vec<ScalarFieldKind> = a
        .field
        .iter()
        .map(|f| match f {
            FieldArg::CenterDistance => ScalarFieldKind::CenterDistance,
            FieldArg::Sphere => ScalarFieldKind::SphereDensity { radius: 0.9 },
            FieldArg::LinearX => ScalarFieldKind::LinearX,
        })
        .collect();
    let spec = SyntheticSpec {
        dims: a.dims,
        mix: match a.mix {
            MixArg::Tet => ElementMix::Tet,
            MixArg::Pyr => ElementMix::Pyr,
            MixArg::Wed => ElementMix::Wed,
            MixArg::Hex => ElementMix::Hex,
            MixArg::Mixed => ElementMix::Mixed,
        },
        pattern: match a.pattern {
            PatternArg::Slabs => PartitionPattern::Slabs,
            PatternArg::Checkerboard => PartitionPattern::Checkerboard,
            PatternArg::Combs => PartitionPattern::InterleavedCombs,
        },
        clusters: a.clusters,
        ranks: a.ranks,
        fields: fields.clone(),
        timesteps: a.timesteps,
        ..SyntheticSpec::default()
    };
    let clusters = make_synthetic_partition(&spec)?;
    let manifest = save_scene(&clusters, &a.out)?;
    std::fs::write(a.out.join("tf.txt"), default_tf(&fields).to_text())?;
    eprintln!(
        "wrote {} clusters to {}",
        clusters.len(),
        manifest.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Render(a) => render(a),
        Cmd::Synth(a) => synth(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
