//! Trajectory ingestion, windowing, frame graphs and splits.

mod cache;
mod spec;
mod split;
mod synth;
mod tracks;
mod types;
mod windows;

pub use cache::{WindowedDataset, CACHE_VERSION};
pub use spec::{frame_stride, DatasetSpec, PRESET_NAMES};
pub use split::{split_dataset, Split, SplitPolicy};
pub use synth::{arc_path, straight_path, synth_scene, synth_scene_with, SceneKind, SynthOptions};
pub use tracks::{downsample, load_tracks, read_tracks, save_tracks, write_tracks};
pub use types::{Domain, FrameSample, Point, TrackPoint, TrajectoryWindow, Units};
pub use windows::{build_windows, group_frames};

use crate::error::Result;

/// Downsamples raw tracks, builds windows and groups them into frames.
pub fn prepare_scene(
    tracks: &[TrackPoint],
    spec: &DatasetSpec,
    stride: usize,
    scene: &str,
) -> Result<Vec<FrameSample>> {
    let sampled = downsample(tracks, spec.native_fps, spec.target_fps)?;
    Ok(group_frames(build_windows(&sampled, spec, stride)?, scene))
}
