//! Cameras, scene rendering across simulated ranks, the single-process
//! oracle and image diagnostics.

pub mod camera;
pub mod diag;
pub mod image;
pub mod render;

pub use camera::{Camera, CameraError};
pub use diag::{diff_images, fragment_heatmaps, DimensionMismatch, Heatmaps, ImageDiff};
pub use image::{heat_ramp, ramp_image, Image};
pub use render::{
    integrate_pixels, render_distributed, render_oracle, render_reference, PixelFragments,
    RankStats, RenderConfig, RenderError, RenderOutput, Scene, StatsReport, Timings,
};
