use super::*;
use crate::geom::Vec3;
use crate::mesh::{
    make_synthetic_partition, reference_element, Element, ElementKind, ElementMix, Mesh,
    PartitionPattern, ScalarFieldKind, ScalarFields, SyntheticSpec,
};
use crate::shell::pack_handle;
use proptest::prelude::*;

fn tf_const(rgb: [f64; 3], alpha: f64) -> TransferFunction {
    TransferFunction::new(
        (0.0, 10.0),
        vec![
            ControlPoint { s: 0.0, rgb, alpha },
            ControlPoint {
                s: 10.0,
                rgb,
                alpha,
            },
        ],
    )
    .unwrap()
}

fn ramp() -> TransferFunction {
    TransferFunction::parse("domain 0 4\n0 1 0 0 0.05\n2 0 1 0 0.2\n4 0 0 1 0.3\n").unwrap()
}

fn with_field(pts: Vec<Vec3>, field: impl Fn(&Vec3) -> f64) -> ScalarFields {
    let block = pts.iter().map(|p| field(p) as f32).collect();
    ScalarFields::new(1, 1, vec![block])
}

fn single(kind: ElementKind, field: impl Fn(&Vec3) -> f64) -> ClusterData {
    let (pts, e) = reference_element(kind);
    let fields = with_field(pts.clone(), field);
    let mut m = Mesh::new(pts, fields);
    m.push(&e);
    ClusterData::prepare(Cluster {
        id: 0,
        rank: 0,
        mesh: m,
    })
    .unwrap()
}

// Hex A spans x in [0,1], hex B spans x in [1, 1 + width].
fn two_hexes(width: f64) -> ClusterData {
    let xs = [0.0, 1.0, 1.0 + width];
    let mut pts = Vec::new();
    for x in xs {
        for (y, z) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            pts.push(Vec3::new(x, y, z));
        }
    }
    // Per x-layer: ids 4*i + {0: (y0,z0), 1: (y1,z0), 2: (y1,z1), 3: (y0,z1)}.
    let hex = |i: u32| {
        let a = 4 * i;
        let b = 4 * (i + 1);
        // VTK bottom (z=0) quad 0-1-2-3 then top 4-5-6-7, positively oriented.
        [a, b, b + 1, a + 1, a + 3, b + 3, b + 2, a + 2]
    };
    let fields = with_field(pts.clone(), |p| p.x + 2.0 * p.y);
    let mut m = Mesh::new(pts, fields);
    m.push(&Element::new(ElementKind::Hex, &hex(0)).unwrap());
    m.push(&Element::new(ElementKind::Hex, &hex(1)).unwrap());
    m.validate().unwrap();
    ClusterData::prepare(Cluster {
        id: 0,
        rank: 0,
        mesh: m,
    })
    .unwrap()
}

fn run(
    data: &ClusterData,
    ray: &Ray,
    tf: &TransferFunction,
    step: f64,
) -> (Vec<Option<Fragment>>, MarchStats) {
    let mut stats = MarchStats::default();
    let opts = MarchOptions {
        step,
        verify: true,
        ..Default::default()
    };
    let frags = data
        .segments(ray, 0, 1e-9)
        .iter()
        .map(|s| integrate_segment(s, ray, data, tf, &opts, &mut stats, None).unwrap())
        .collect();
    (frags, stats)
}

#[test]
fn transparent_tf_gives_nothing() {
    let d = single(ElementKind::Hex, |p| p.x);
    let ray = Ray::new(Vec3::new(0.3, 0.4, -1.0), Vec3::z());
    let (frags, _) = run(&d, &ray, &tf_const([1.0, 1.0, 1.0], 0.0), 0.1);
    assert_eq!(frags, vec![None]);
}

#[test]
fn one_sample_one_term() {
    let d = single(ElementKind::Tet, |_| 3.0);
    let ray = Ray::new(Vec3::new(0.2, 0.2, -1.0), Vec3::z());
    // Segment is [1.0, 1.6]; a step of 1 places one sample at 1.5.
    let (frags, stats) = run(&d, &ray, &tf_const([0.2, 0.4, 0.8], 0.5), 1.0);
    let f = frags[0].unwrap();
    assert_eq!(f, Fragment::new([0.1, 0.2, 0.4], 0.5, 1.0));
    assert_eq!(stats.samples, 1);
}

#[test]
fn missing_field_is_an_error() {
    let d = single(ElementKind::Tet, |_| 3.0);
    let ray = Ray::new(Vec3::new(0.2, 0.2, -1.0), Vec3::z());
    let seg = d.segments(&ray, 0, 1e-9)[0];
    let opts = MarchOptions {
        field: 2,
        ..Default::default()
    };
    let r = integrate_segment(
        &seg,
        &ray,
        &d,
        &ramp(),
        &opts,
        &mut MarchStats::default(),
        None,
    );
    assert_eq!(
        r,
        Err(MarchError::MissingField {
            cluster: 0,
            field: 2,
            timestep: 0
        })
    );
}

// Three samples in A, two in B, compared against a straight-line integrator
// that point-locates every sample by brute force.
#[test]
fn two_element_segment_matches_reference_integrator() {
    let d = two_hexes(0.8);
    let ray = Ray::new(Vec3::new(-1.0, 0.3, 0.6), Vec3::x());
    let tf = ramp();
    let step = 0.35;
    let seg = d.segments(&ray, 0, 1e-9)[0];
    let mut trace = Vec::new();
    let mut stats = MarchStats::default();
    let opts = MarchOptions {
        step,
        verify: true,
        ..Default::default()
    };
    let got = integrate_segment(&seg, &ray, &d, &tf, &opts, &mut stats, Some(&mut trace))
        .unwrap()
        .unwrap();
    let in_a = trace.iter().filter(|s| s.element.index == 0).count();
    let in_b = trace.iter().filter(|s| s.element.index == 1).count();
    assert_eq!((in_a, in_b), (3, 2));

    let mut acc = Accumulator::default();
    let mut t = seg.t_entry + 0.5 * step;
    while t < seg.t_exit {
        let (_, s) = d.sample_brute_force(&ray.at(t), 0, 0).unwrap();
        let (rgb, a) = tf.eval(s);
        acc.add_sample(rgb, a);
        t += step;
    }
    let want = Fragment::from_accumulator(&acc, seg.t_entry);
    assert_eq!(got, want);
    assert_eq!(stats.reconstruction_mismatches, 0);
    assert_eq!(stats.element_steps, 1);
}

#[test]
fn split_at_element_boundary_composites_to_whole() {
    let d = two_hexes(1.0);
    let ray = Ray::new(Vec3::new(-1.0, 0.3, 0.6), Vec3::x());
    let tf = ramp();
    let opts = MarchOptions {
        step: 0.25,
        ..Default::default()
    };
    let mut stats = MarchStats::default();
    let whole = d.segments(&ray, 0, 1e-9)[0];
    let full = integrate_segment(&whole, &ray, &d, &tf, &opts, &mut stats, None)
        .unwrap()
        .unwrap();

    // Boundary x=1 is t=2, four steps past t_entry=1.
    let first = Segment {
        t_exit: 2.0,
        ..whole
    };
    let second = Segment {
        t_entry: 2.0,
        entry_handle: pack_handle(ElementKind::Hex, 1).unwrap(),
        entry_face: None,
        ..whole
    };
    let a = integrate_segment(&first, &ray, &d, &tf, &opts, &mut stats, None)
        .unwrap()
        .unwrap();
    let b = integrate_segment(&second, &ray, &d, &tf, &opts, &mut stats, None)
        .unwrap()
        .unwrap();
    let joined = a.over(&b);
    for c in 0..3 {
        assert!((joined.color[c] - full.color[c]).abs() < 1e-6);
    }
    assert!((joined.alpha - full.alpha).abs() < 1e-6);
    assert_eq!(stats.march_failures, 0);
}

proptest! {
    #[test]
    fn accumulation_is_associative(
        samples in prop::collection::vec(([0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0], 0.0f64..0.5), 1..40),
        cut in 0usize..40,
    ) {
        let cut = cut.min(samples.len());
        let fold = |s: &[([f64; 3], f64)]| {
            let mut a = Accumulator::default();
            for &(c, al) in s {
                a.add_sample(c, al);
            }
            a
        };
        let whole = fold(&samples);
        let joined = fold(&samples[..cut]).over(&fold(&samples[cut..]));
        for c in 0..3 {
            prop_assert!((whole.color[c] - joined.color[c]).abs() < 1e-12);
        }
        prop_assert!((whole.alpha - joined.alpha).abs() < 1e-12);
        prop_assert!(whole.alpha <= 1.0);
    }
}

#[test]
fn opaque_rays_stop_early() {
    let d = single(ElementKind::Hex, |_| 1.0);
    let ray = Ray::new(Vec3::new(0.3, 0.4, -1.0), Vec3::z());
    let (frags, stats) = run(&d, &ray, &tf_const([1.0, 1.0, 1.0], 0.9), 0.01);
    assert!(frags[0].unwrap().alpha >= OPAQUE as f32);
    assert_eq!(stats.samples, 3);
}

// Every sample the march takes lies in the element it attributes the sample
// to, and matches the brute-force scalar.
#[test]
fn march_agrees_with_brute_force_location_on_mixed_mesh() {
    let clusters = make_synthetic_partition(&SyntheticSpec {
        dims: [4, 4, 4],
        mix: ElementMix::Mixed,
        pattern: PartitionPattern::Slabs,
        clusters: 1,
        fields: vec![ScalarFieldKind::CenterDistance],
        ..Default::default()
    })
    .unwrap();
    let d = ClusterData::prepare(clusters.into_iter().next().unwrap()).unwrap();
    let tf = ramp();
    let opts = MarchOptions {
        step: 0.05,
        verify: true,
        ..Default::default()
    };
    let mut stats = MarchStats::default();
    let mut checked = 0;
    for i in 0..12 {
        for j in 0..12 {
            let o = Vec3::new(-3.0, -0.93 + 0.155 * i as f64, -0.91 + 0.153 * j as f64);
            let ray = Ray::new(o, Vec3::new(1.0, 0.11, 0.07));
            for seg in d.segments(&ray, 0, 1e-9) {
                let mut trace = Vec::new();
                integrate_segment(&seg, &ray, &d, &tf, &opts, &mut stats, Some(&mut trace))
                    .unwrap();
                for s in &trace {
                    let p = ray.at(s.t);
                    let (_, want) = d.sample_brute_force(&p, 0, 0).unwrap();
                    assert!((want - s.scalar).abs() < 1e-9, "t={} {:?}", s.t, s.element);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000);
    assert_eq!(stats.march_failures, 0);
    assert_eq!(stats.reconstruction_mismatches, 0);
    assert!(stats.reconstructions > 100);
    for k in 0..4 {
        assert!(stats.max_left_tests[k] <= MAX_LEFT_TESTS[k]);
    }
}
