//! Direct-send deep compositing.
//!
//! Each rank owns one contiguous pixel region. The steps are:
//!
//! 1. prefix sums over the local per-pixel counts and a contiguous send buffer;
//! 2. per-destination counter slabs, encoded and exchanged collectively;
//! 3. fragments exchanged into a receive buffer sized by the received counters;
//! 4. per-pixel visibility-order merge over the R incoming lists;
//! 5. composited regions gathered at the master.
//!
//! Every message is framed as `(step: u8, len: u64 LE, payload)` and checked on
//! receipt, so a corrupted or mismatched buffer aborts with the rank and step.

use super::region::RegionAssignment;
use super::transport::{Transport, TransportError, MASTER};
use super::{composite_pixel, to_pixel};
use crate::deepfb::{
    decode_counters, decode_fragments, encode_counters, encode_fragments, exclusive_scan,
    CounterBlock, DecodeError, Fragment, PixelFragmentStore, Precision,
};
use crate::harness::image::Image;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Step {
    SendBuffer = 1,
    Counters = 2,
    Fragments = 3,
    Composite = 4,
    Gather = 5,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("rank {rank}, step {step:?}: {source}")]
    Transport {
        rank: usize,
        step: Step,
        source: TransportError,
    },
    #[error("rank {rank}, step {step:?}: {detail}")]
    Corrupt {
        rank: usize,
        step: Step,
        detail: String,
    },
}

pub fn frame(step: Step, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + payload.len());
    out.push(step as u8);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Checks the header against `step` and the actual length; returns the payload.
pub fn unframe(bytes: &[u8], step: Step) -> Result<&[u8], String> {
    if bytes.len() < 9 {
        return Err(format!(
            "frame of {} bytes is shorter than its header",
            bytes.len()
        ));
    }
    if bytes[0] != step as u8 {
        return Err(format!(
            "expected step {}, frame says {}",
            step as u8, bytes[0]
        ));
    }
    let len = u64::from_le_bytes(bytes[1..9].try_into().expect("8 bytes"));
    if len != (bytes.len() - 9) as u64 {
        return Err(format!(
            "frame announces {len} payload bytes, carries {}",
            bytes.len() - 9
        ));
    }
    Ok(&bytes[9..])
}

/// Bytes and fragments one rank moved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExchangeStats {
    pub counter_payload_bytes: u64,
    pub fragments_sent: u64,
    pub fragment_payload_bytes: u64,
    pub fragments_received: u64,
    pub gather_payload_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeOutput {
    /// The assembled frame, on the master only.
    pub image: Option<Image>,
    pub stats: ExchangeStats,
}

/// Runs the five steps on one rank. All ranks must call this together.
pub fn deep_composite<T: Transport + ?Sized>(
    transport: &mut T,
    regions: &RegionAssignment,
    store: &PixelFragmentStore,
    precision: Precision,
    width: usize,
    height: usize,
) -> Result<CompositeOutput, ProtocolError> {
    let r = run(transport, regions, store, precision, width, height);
    if r.is_err() {
        transport.abort();
    }
    r
}

fn run<T: Transport + ?Sized>(
    t: &mut T,
    regions: &RegionAssignment,
    store: &PixelFragmentStore,
    precision: Precision,
    width: usize,
    height: usize,
) -> Result<CompositeOutput, ProtocolError> {
    let rank = t.rank();
    let ranks = t.size();
    let corrupt = |step, detail: String| ProtocolError::Corrupt { rank, step, detail };
    let transport = |step| move |source| ProtocolError::Transport { rank, step, source };

    if regions.ranks() != ranks
        || regions.pixels() != width * height
        || store.pixels() != width * height
    {
        return Err(corrupt(
            Step::SendBuffer,
            format!(
                "{} regions over {} pixels for {ranks} ranks, store of {} pixels, frame {width}x{height}",
                regions.ranks(),
                regions.pixels(),
                store.pixels()
            ),
        ));
    }
    if store.is_counting() {
        return Err(corrupt(
            Step::SendBuffer,
            "store still in its counting pass".into(),
        ));
    }
    let mut stats = ExchangeStats::default();
    let frag_bytes = precision.fragment_bytes();

    // 1
    let counts = store.finalize_counts();
    let send = store.build_send_buffer(&counts);

    // 2
    let counter_msgs: Vec<Vec<u8>> = (0..ranks)
        .map(|d| {
            let payload = encode_counters(&counts.counts[regions.range(d)]).to_bytes();
            stats.counter_payload_bytes += payload.len() as u64;
            frame(Step::Counters, &payload)
        })
        .collect();
    let received = t
        .all_to_all_v(counter_msgs)
        .map_err(transport(Step::Counters))?;
    let mine = regions.range(rank);
    let p = mine.len();
    // R x P slab: counts[r * P + j] is rank r's count for my j-th pixel.
    let mut slab = Vec::with_capacity(ranks * p);
    for (src, bytes) in received.iter().enumerate() {
        let payload = unframe(bytes, Step::Counters)
            .map_err(|e| corrupt(Step::Counters, format!("from rank {src}: {e}")))?;
        let decoded = CounterBlock::from_bytes(payload)
            .and_then(|b| decode_counters(&b))
            .map_err(|e| corrupt(Step::Counters, format!("from rank {src}: {e}")))?;
        if decoded.len() != p {
            return Err(corrupt(
                Step::Counters,
                format!(
                    "rank {src} sent {} counters for a region of {p} pixels",
                    decoded.len()
                ),
            ));
        }
        slab.extend(decoded);
    }
    let (offsets, total) = exclusive_scan(&slab);

    // 3
    let frag_msgs: Vec<Vec<u8>> = (0..ranks)
        .map(|d| {
            let range = regions.range(d);
            let lo = counts
                .prefix
                .get(range.start)
                .copied()
                .unwrap_or(counts.total) as usize;
            let hi = counts
                .prefix
                .get(range.end)
                .copied()
                .unwrap_or(counts.total) as usize;
            let payload = encode_fragments(&send[lo..hi], precision);
            stats.fragments_sent += (hi - lo) as u64;
            stats.fragment_payload_bytes += payload.len() as u64;
            frame(Step::Fragments, &payload)
        })
        .collect();
    let received = t
        .all_to_all_v(frag_msgs)
        .map_err(transport(Step::Fragments))?;
    let mut recv: Vec<Fragment> = Vec::with_capacity(total as usize);
    for (src, bytes) in received.iter().enumerate() {
        let payload = unframe(bytes, Step::Fragments)
            .map_err(|e| corrupt(Step::Fragments, format!("from rank {src}: {e}")))?;
        let expected: u64 = slab[src * p..(src + 1) * p].iter().map(|&c| c as u64).sum();
        if payload.len() as u64 != expected * frag_bytes as u64 {
            return Err(corrupt(
                Step::Fragments,
                format!(
                    "rank {src} sent {} bytes, counters announce {expected} fragments of {frag_bytes} bytes",
                    payload.len()
                ),
            ));
        }
        recv.extend(
            decode_fragments(payload, precision).map_err(|e: DecodeError| {
                corrupt(Step::Fragments, format!("from rank {src}: {e}"))
            })?,
        );
    }
    stats.fragments_received = recv.len() as u64;

    // 4
    let region: Vec<[f32; 4]> = (0..p)
        .into_par_iter()
        .map(|j| {
            let lists: Vec<&[Fragment]> = (0..ranks)
                .map(|r| {
                    let at = offsets[r * p + j] as usize;
                    &recv[at..at + slab[r * p + j] as usize]
                })
                .collect();
            to_pixel(composite_pixel(&lists))
        })
        .collect();

    // 5
    let mut payload = Vec::with_capacity(p * 16);
    for px in &region {
        for c in px {
            payload.extend_from_slice(&c.to_le_bytes());
        }
    }
    stats.gather_payload_bytes = payload.len() as u64;
    t.send_to_master(frame(Step::Gather, &payload))
        .map_err(transport(Step::Gather))?;
    let image = if rank == MASTER {
        let parts = t.master_receive_all().map_err(transport(Step::Gather))?;
        let mut img = Image::new(width, height);
        for (src, bytes) in parts.iter().enumerate() {
            let payload = unframe(bytes, Step::Gather)
                .map_err(|e| corrupt(Step::Gather, format!("from rank {src}: {e}")))?;
            let range = regions.range(src);
            if payload.len() != range.len() * 16 {
                return Err(corrupt(
                    Step::Gather,
                    format!(
                        "rank {src} sent {} bytes for {} pixels",
                        payload.len(),
                        range.len()
                    ),
                ));
            }
            for (px, chunk) in img.pixels[range].iter_mut().zip(payload.chunks_exact(16)) {
                for c in 0..4 {
                    px[c] =
                        f32::from_le_bytes(chunk[c * 4..c * 4 + 4].try_into().expect("4 bytes"));
                }
            }
        }
        Some(img)
    } else {
        None
    };
    Ok(CompositeOutput { image, stats })
}

#[cfg(test)]
mod tests {
    use super::super::{fold, run_ranks};
    use super::*;
    use crate::deepfb::{Overflow, StoreMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frag(rgba: [f32; 4], depth: f32) -> Fragment {
        Fragment::new([rgba[0], rgba[1], rgba[2]], rgba[3], depth)
    }

    fn two_pass(pixels: usize, writes: &[(usize, Fragment)]) -> PixelFragmentStore {
        let mut s = PixelFragmentStore::new(pixels, StoreMode::TwoPass);
        for &(p, f) in writes {
            s.write(p, f).unwrap();
        }
        s.begin_store().unwrap();
        for &(p, f) in writes {
            s.write(p, f).unwrap();
        }
        s
    }

    fn composite(
        stores: &[PixelFragmentStore],
        precision: Precision,
        w: usize,
        h: usize,
    ) -> (Image, Vec<ExchangeStats>) {
        let regions = RegionAssignment::new(w * h, stores.len());
        let out = run_ranks(stores.len(), |ep| {
            deep_composite(ep, &regions, &stores[ep.rank()], precision, w, h)
        });
        let mut img = None;
        let mut stats = Vec::new();
        for o in out {
            let o = o.unwrap();
            if o.image.is_some() {
                img = o.image;
            }
            stats.push(o.stats);
        }
        (img.unwrap(), stats)
    }

    #[test]
    fn framing_round_trip_and_checks() {
        let f = frame(Step::Fragments, &[1, 2, 3]);
        assert_eq!(f.len(), 12);
        assert_eq!(unframe(&f, Step::Fragments).unwrap(), &[1, 2, 3]);
        assert!(unframe(&f, Step::Counters).is_err());
        assert!(unframe(&f[..11], Step::Fragments).is_err());
        assert!(unframe(&f[..4], Step::Fragments).is_err());
    }

    #[test]
    fn single_rank_is_local_fold() {
        let a = frag([0.2, 0.0, 0.0, 0.4], 2.0);
        let b = frag([0.0, 0.3, 0.0, 0.5], 1.0);
        let s = two_pass(2, &[(1, a), (1, b)]);
        let (img, _) = composite(&[s], Precision::Float, 2, 1);
        assert_eq!(img.pixels[0], [0.0; 4]);
        assert_eq!(img.pixels[1], to_pixel(fold(&[b, a])));
    }

    #[test]
    fn interleaved_ranks_use_global_order() {
        let s0 = two_pass(
            1,
            &[
                (0, frag([0.5, 0.0, 0.0, 0.5], 1.0)),
                (0, frag([0.0, 0.0, 0.5, 0.5], 3.0)),
            ],
        );
        let s1 = two_pass(1, &[(0, frag([0.0, 0.5, 0.0, 0.5], 2.0))]);
        let want = to_pixel(fold(&[
            frag([0.5, 0.0, 0.0, 0.5], 1.0),
            frag([0.0, 0.5, 0.0, 0.5], 2.0),
            frag([0.0, 0.0, 0.5, 0.5], 3.0),
        ]));
        let (img, _) = composite(&[s0, s1], Precision::Float, 1, 1);
        assert_eq!(img.pixels[0], want);
    }

    fn random_writes(
        rng: &mut ChaCha8Rng,
        pixels: usize,
        n: usize,
    ) -> Vec<(usize, usize, Fragment)> {
        (0..n)
            .map(|_| {
                let a: f32 = rng.random_range(0.01..0.4);
                let f = frag(
                    [
                        a * rng.random::<f32>(),
                        a * rng.random::<f32>(),
                        a * rng.random::<f32>(),
                        a,
                    ],
                    rng.random_range(0.0..10.0),
                );
                (rng.random_range(0..8), rng.random_range(0..pixels), f)
            })
            .collect()
    }

    fn stores_for(
        writes: &[(usize, usize, Fragment)],
        ranks: usize,
        pixels: usize,
    ) -> Vec<PixelFragmentStore> {
        (0..ranks)
            .map(|r| {
                let mine: Vec<(usize, Fragment)> = writes
                    .iter()
                    .filter(|w| w.0 % ranks == r)
                    .map(|w| (w.1, w.2))
                    .collect();
                two_pass(pixels, &mine)
            })
            .collect()
    }

    #[test]
    fn independent_of_rank_count_and_byte_accounting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (7, 5);
        let writes = random_writes(&mut rng, w * h, 400);
        let mut oracle = Image::new(w, h);
        for (p, px) in oracle.pixels.iter_mut().enumerate() {
            let mut v: Vec<Fragment> = writes.iter().filter(|x| x.1 == p).map(|x| x.2).collect();
            v.sort_by(|a, b| a.depth.total_cmp(&b.depth));
            *px = to_pixel(fold(&v));
        }
        for ranks in [1, 2, 3, 4, 8] {
            for precision in [Precision::Float, Precision::Fixed] {
                let (img, stats) = composite(&stores_for(&writes, ranks, w * h), precision, w, h);
                let tol = if precision == Precision::Float {
                    1e-6
                } else {
                    2.0 / 255.0
                };
                assert!(img.max_abs_diff(&oracle) <= tol, "R={ranks} {precision:?}");
                let sent: u64 = stats.iter().map(|s| s.fragments_sent).sum();
                let received: u64 = stats.iter().map(|s| s.fragments_received).sum();
                assert_eq!(sent, 400);
                assert_eq!(received, 400);
                for s in &stats {
                    assert_eq!(
                        s.fragment_payload_bytes,
                        s.fragments_sent * precision.fragment_bytes() as u64
                    );
                }
            }
        }
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let writes = random_writes(&mut rng, 64, 500);
        let stores = stores_for(&writes, 4, 64);
        let (first, _) = composite(&stores, Precision::Float, 8, 8);
        for _ in 0..5 {
            assert_eq!(composite(&stores, Precision::Float, 8, 8).0, first);
        }
    }

    #[test]
    fn single_pass_stores_composite_too() {
        let mut s = PixelFragmentStore::new(
            1,
            StoreMode::SinglePass {
                k: 2,
                overflow: Overflow::Drop,
            },
        );
        s.write(0, frag([0.1, 0.1, 0.1, 0.2], 1.0)).unwrap();
        let (img, _) = composite(&[s], Precision::Float, 1, 1);
        assert!((img.pixels[0][3] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn unfinished_store_and_shape_mismatch_abort() {
        let s = PixelFragmentStore::new(4, StoreMode::TwoPass);
        let regions = RegionAssignment::new(4, 2);
        let out = run_ranks(2, |ep| {
            deep_composite(ep, &regions, &s, Precision::Float, 2, 2)
        });
        for (rank, r) in out.into_iter().enumerate() {
            match r.unwrap_err() {
                ProtocolError::Corrupt {
                    rank: got, step, ..
                } => {
                    assert_eq!((got, step), (rank, Step::SendBuffer));
                }
                e => panic!("unexpected {e}"),
            }
        }
        let done = two_pass(4, &[]);
        let out = run_ranks(1, |ep| {
            deep_composite(
                ep,
                &RegionAssignment::new(3, 1),
                &done,
                Precision::Float,
                2,
                2,
            )
        });
        assert!(matches!(
            out[0],
            Err(ProtocolError::Corrupt {
                step: Step::SendBuffer,
                ..
            })
        ));
    }

    /// Forwards everything to an in-process endpoint but truncates step 3
    /// payloads leaving rank 1.
    struct Truncating(crate::compositor::InProcessEndpoint);

    impl Transport for Truncating {
        fn rank(&self) -> usize {
            self.0.rank()
        }
        fn size(&self) -> usize {
            self.0.size()
        }
        fn all_to_all_v(&mut self, mut send: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>, TransportError> {
            if self.rank() == 1
                && send
                    .iter()
                    .all(|b| b.first() == Some(&(Step::Fragments as u8)))
            {
                let b = &mut send[0];
                b.truncate(b.len() - 1);
                let len = (b.len() - 9) as u64;
                b[1..9].copy_from_slice(&len.to_le_bytes());
            }
            self.0.all_to_all_v(send)
        }
        fn send_to_master(&mut self, bytes: Vec<u8>) -> Result<(), TransportError> {
            self.0.send_to_master(bytes)
        }
        fn master_receive_all(&mut self) -> Result<Vec<Vec<u8>>, TransportError> {
            self.0.master_receive_all()
        }
        fn abort(&self) {
            self.0.abort()
        }
    }

    #[test]
    fn fragment_length_mismatch_is_reported() {
        let s0 = two_pass(2, &[]);
        let s1 = two_pass(2, &[(0, frag([0.1, 0.1, 0.1, 0.5], 1.0))]);
        let stores = [s0, s1];
        let regions = RegionAssignment::new(2, 2);
        let eps = crate::compositor::InProcessFabric::new(2);
        let results: Vec<_> = std::thread::scope(|s| {
            let hs: Vec<_> = eps
                .into_iter()
                .map(|ep| {
                    let (stores, regions) = (&stores, &regions);
                    s.spawn(move || {
                        let mut t = Truncating(ep);
                        let r = t.rank();
                        deep_composite(&mut t, regions, &stores[r], Precision::Float, 2, 1)
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        match &results[0] {
            Err(ProtocolError::Corrupt {
                rank: 0,
                step: Step::Fragments,
                detail,
            }) => assert!(detail.contains("rank 1")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
