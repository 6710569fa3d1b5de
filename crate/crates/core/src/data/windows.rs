use std::collections::BTreeMap;

use super::spec::DatasetSpec;
use super::types::{FrameSample, Point, TrackPoint, TrajectoryWindow};
use crate::error::{Error, Result};

/// Slides a `t_in + t_out` window over every gap-free run of each subject's
/// track, advancing `stride` sampled steps at a time.
///
/// Tracks must already be at the target rate; consecutive samples are
/// `native_fps / target_fps` frame ids apart. Output is ordered by
/// `(anchor_frame, subject_id)`.
pub fn build_windows(
    tracks: &[TrackPoint],
    spec: &DatasetSpec,
    stride: usize,
) -> Result<Vec<TrajectoryWindow>> {
    if stride == 0 {
        return Err(Error::config("window_stride", "must be positive"));
    }
    spec.validate()?;
    let step = spec.frame_stride()?;
    let span = spec.window_len();

    let mut sorted = tracks.to_vec();
    sorted.sort_by_key(|p| (p.subject_id, p.frame_id));

    let mut windows = Vec::new();
    for subject in sorted.chunk_by(|a, b| a.subject_id == b.subject_id) {
        for run in subject.chunk_by(|a, b| b.frame_id == a.frame_id + step) {
            let mut start = 0;
            while start + span <= run.len() {
                let pts: Vec<Point> = run[start..start + span].iter().map(|p| [p.x, p.y]).collect();
                let (observed, future) = pts.split_at(spec.t_in);
                windows.push(TrajectoryWindow::from_positions(
                    run[0].subject_id,
                    run[start + spec.t_in - 1].frame_id,
                    observed.to_vec(),
                    future.to_vec(),
                ));
                start += stride;
            }
        }
    }
    windows.sort_by_key(|w| (w.anchor_frame, w.subject_id));
    Ok(windows)
}

/// Buckets windows by anchor frame and moves each bucket's centroid of last
/// observed positions to the origin.
pub fn group_frames(windows: Vec<TrajectoryWindow>, scene: &str) -> Vec<FrameSample> {
    let mut buckets: BTreeMap<u64, Vec<TrajectoryWindow>> = BTreeMap::new();
    for w in windows {
        buckets.entry(w.anchor_frame).or_default().push(w);
    }
    buckets
        .into_iter()
        .map(|(anchor_frame, mut windows)| {
            windows.sort_by_key(|w| w.subject_id);
            let offset = centroid(windows.iter().map(TrajectoryWindow::last_observed));
            for w in &mut windows {
                w.translate([-offset[0], -offset[1]]);
            }
            FrameSample {
                scene: scene.to_string(),
                anchor_frame,
                windows,
                normalization_offset: offset,
            }
        })
        .collect()
}

fn centroid(points: impl Iterator<Item = Point>) -> Point {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p[0];
        sy += p[1];
        n += 1;
    }
    [sx / n as f64, sy / n as f64]
}
