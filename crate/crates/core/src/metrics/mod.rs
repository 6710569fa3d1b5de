//! Displacement metrics and closed-form baselines.

mod baselines;
mod displacement;
mod report;

pub use baselines::{constant_velocity_predict, linear_fit_predict};
pub use displacement::{ade, fde, rmse_at, rmse_curve, steps_per_second};
pub use report::MetricReport;

use crate::data::{FrameSample, Point, TrajectoryWindow};
use crate::error::Result;
use crate::numerics::Tensor;

/// Stacks per-window point lists into an `[n, T, 2]` tensor.
pub fn stack_points<'a>(rows: impl IntoIterator<Item = &'a [Point]>) -> Result<Tensor> {
    let mut n = 0;
    let mut t = None;
    let mut data = Vec::new();
    for row in rows {
        if *t.get_or_insert(row.len()) != row.len() {
            return Err(crate::Error::Contract("trajectories differ in length".into()));
        }
        data.extend(row.iter().flatten());
        n += 1;
    }
    Tensor::new([n, t.unwrap_or(0), 2], data)
}

/// Ground-truth futures of every window, in the frames' original units.
pub fn truth_absolute(frames: &[FrameSample]) -> Result<Tensor> {
    let windows: Vec<TrajectoryWindow> = frames.iter().flat_map(|f| f.denormalized()).collect();
    stack_points(windows.iter().map(|w| w.future.as_slice()))
}

/// Applies a per-window baseline to every window, in original units.
pub fn baseline_absolute(
    frames: &[FrameSample],
    predict: impl Fn(&TrajectoryWindow, usize) -> Vec<Point>,
) -> Result<Tensor> {
    let preds: Vec<Vec<Point>> = frames
        .iter()
        .flat_map(|f| f.denormalized())
        .map(|w| predict(&w, w.t_out()))
        .collect();
    stack_points(preds.iter().map(Vec::as_slice))
}

/// Aggregates ADE, FDE and the whole-second RMSE curve. The curve is left
/// empty when `fps` does not split the horizon into whole seconds.
pub fn report(truth: &Tensor, pred: &Tensor, units: crate::data::Units, fps: f64) -> Result<MetricReport> {
    let ade = ade(truth, pred)?;
    let fde = fde(truth, pred)?;
    let rmse_per_second = match rmse_curve(truth, pred, fps) {
        Ok(curve) => curve,
        Err(crate::Error::Config { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        ade,
        fde,
        rmse_per_second,
        n_subjects: truth.shape()[0],
        units,
    })
}
