//! Deep framebuffer: per-pixel fragment lists and their wire encodings.

pub mod counters;
pub mod fragment;
pub mod store;

pub use counters::{counter_width, decode_counters, encode_counters, CounterBlock};
pub use fragment::{
    decode_fragments, encode_fragments, encode_fragments_into, DecodeError, Fragment, Precision,
    FIXED_TOLERANCE,
};
pub use store::{
    exclusive_scan, Counts, Overflow, PixelFragmentStore, StoreError, StoreMode, DEFAULT_K,
};
