//! Data-parallel direct volume rendering of non-convexly partitioned
//! unstructured meshes.
//!
//! Each simulated rank owns one or more clusters of mixed finite elements.
//! Rays find the intervals where they are inside a cluster by tracing its
//! boundary shell, march element to element through XOR-compacted
//! connectivity, and emit one RGBA-Z fragment per interval. Ranks then
//! exchange variable-length per-pixel fragment lists and composite them in
//! global depth order.
//!
//! Module map:
//!
//! - [`mesh`]: elements, clusters, face matching, synthetic partitions, file I/O
//! - [`compaction`]: XOR element records and their reconstruction
//! - [`shell`]: boundary extraction, shell BVH, ray segment generation
//! - [`marcher`]: per-segment element marching and integration
//! - [`deepfb`]: per-pixel fragment lists and wire encodings
//! - [`compositor`]: the direct-send deep compositing protocol
//! - [`harness`]: cameras, scene rendering, oracle, diagnostics
//! - [`guide`]: walkthrough chapters with runnable examples

pub mod compaction;
pub mod compositor;
pub mod deepfb;
pub mod geom;
pub mod harness;
pub mod marcher;
pub mod mesh;
pub mod shell;

/// The user guide from `book/`, included here so its examples run as doctests.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/meshes.md")]
    pub mod meshes {}
    #[doc = include_str!("../../../book/src/compaction.md")]
    pub mod compaction {}
    #[doc = include_str!("../../../book/src/shells.md")]
    pub mod shells {}
    #[doc = include_str!("../../../book/src/marching.md")]
    pub mod marching {}
    #[doc = include_str!("../../../book/src/fragments.md")]
    pub mod fragments {}
    #[doc = include_str!("../../../book/src/compositing.md")]
    pub mod compositing {}
    #[doc = include_str!("../../../book/src/rendering.md")]
    pub mod rendering {}
}
