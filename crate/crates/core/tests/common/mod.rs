#![allow(dead_code)]

use deepvol::geom::Vec3;
use deepvol::harness::{Camera, Scene};
use deepvol::marcher::{ControlPoint, TransferFunction};
use deepvol::mesh::{
    make_synthetic_partition, ElementMix, PartitionPattern, ScalarFieldKind, SyntheticSpec,
};

pub struct TestScene {
    pub name: &'static str,
    pub scene: Scene,
    pub tf: TransferFunction,
    pub step: f64,
}

pub fn spec(
    dims: [usize; 3],
    mix: ElementMix,
    pattern: PartitionPattern,
    clusters: usize,
) -> SyntheticSpec {
    SyntheticSpec {
        dims,
        mix,
        pattern,
        clusters,
        ranks: 1,
        fields: vec![ScalarFieldKind::LinearX, ScalarFieldKind::CenterDistance],
        timesteps: 2,
        ..SyntheticSpec::default()
    }
}

pub fn scene(s: &SyntheticSpec) -> Scene {
    Scene::prepare(make_synthetic_partition(s).unwrap()).unwrap()
}

/// Hue ramp over [0, 1] with moderate opacity, so depth order matters.
pub fn rainbow_tf(alpha: f64) -> TransferFunction {
    let pts = [
        (0.0, [1.0, 0.1, 0.1]),
        (0.33, [0.1, 1.0, 0.1]),
        (0.66, [0.1, 0.2, 1.0]),
        (1.0, [1.0, 1.0, 0.2]),
    ];
    TransferFunction::new(
        (0.0, 1.0),
        pts.iter()
            .map(|&(s, rgb)| ControlPoint { s, rgb, alpha })
            .collect(),
    )
    .unwrap()
}

/// Looks at the unit box mostly along +x, so rays cross comb teeth.
pub fn side_camera(size: usize) -> Camera {
    Camera::new(
        Vec3::new(-4.0, 1.3, 0.9),
        Vec3::zeros(),
        Vec3::z(),
        40.0,
        size,
        size,
    )
    .unwrap()
}

pub fn oblique_camera(size: usize) -> Camera {
    Camera::new(
        Vec3::new(-3.0, -2.2, 2.0),
        Vec3::zeros(),
        Vec3::z(),
        45.0,
        size,
        size,
    )
    .unwrap()
}

pub fn combs(mix: ElementMix, clusters: usize) -> TestScene {
    TestScene {
        name: "interleaved combs",
        scene: scene(&spec(
            [9, 5, 4],
            mix,
            PartitionPattern::InterleavedCombs,
            clusters,
        )),
        tf: rainbow_tf(0.06),
        step: 0.02,
    }
}

pub fn slabs(mix: ElementMix, clusters: usize) -> TestScene {
    TestScene {
        name: "slabs",
        scene: scene(&spec([8, 4, 4], mix, PartitionPattern::Slabs, clusters)),
        tf: rainbow_tf(0.05),
        step: 0.02,
    }
}

/// The five oracle scenes, each with 8 clusters so every rank count up to 8 has work.
pub fn oracle_scenes() -> Vec<TestScene> {
    let named = |name, dims, mix, pattern, clusters| TestScene {
        name,
        scene: scene(&spec(dims, mix, pattern, clusters)),
        tf: rainbow_tf(0.05),
        step: 0.02,
    };
    vec![
        named(
            "combs/hex",
            [10, 5, 4],
            ElementMix::Hex,
            PartitionPattern::InterleavedCombs,
            8,
        ),
        named(
            "combs/tet",
            [9, 4, 3],
            ElementMix::Tet,
            PartitionPattern::InterleavedCombs,
            8,
        ),
        named(
            "checkerboard/mixed",
            [6, 6, 8],
            ElementMix::Mixed,
            PartitionPattern::Checkerboard,
            8,
        ),
        named(
            "slabs/wedge",
            [8, 4, 4],
            ElementMix::Wed,
            PartitionPattern::Slabs,
            8,
        ),
        named(
            "slabs/pyramid",
            [8, 4, 4],
            ElementMix::Pyr,
            PartitionPattern::Slabs,
            8,
        ),
    ]
}
