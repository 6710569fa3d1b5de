use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Validates a `truth`/`pred` pair and returns `(n, t_out)`.
fn dims(truth: &Tensor, pred: &Tensor) -> Result<(usize, usize)> {
    if truth.shape() != pred.shape() {
        return Err(Error::Contract(format!(
            "truth {:?} and prediction {:?} differ in shape",
            truth.shape(),
            pred.shape()
        )));
    }
    match *truth.shape() {
        [n, t, 2] => Ok((n, t)),
        _ => Err(Error::Contract(format!(
            "trajectories must be n×T×2, got {:?}",
            truth.shape()
        ))),
    }
}

/// Per-(subject, step) Euclidean errors, row-major `n × t_out`.
fn errors<'a>(truth: &'a Tensor, pred: &'a Tensor) -> impl Iterator<Item = f64> + 'a {
    truth
        .data()
        .chunks_exact(2)
        .zip(pred.data().chunks_exact(2))
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
}

/// Mean L2 error over all subjects and predicted steps.
pub fn ade(truth: &Tensor, pred: &Tensor) -> Result<f64> {
    let (n, t) = dims(truth, pred)?;
    Ok(errors(truth, pred).sum::<f64>() / (n * t) as f64)
}

/// Mean L2 error at the last predicted step.
pub fn fde(truth: &Tensor, pred: &Tensor) -> Result<f64> {
    let (n, t) = dims(truth, pred)?;
    let total: f64 = errors(truth, pred).skip(t - 1).step_by(t).sum();
    Ok(total / n as f64)
}

/// Root-mean-square Euclidean error across subjects at one step (0-based).
pub fn rmse_at(truth: &Tensor, pred: &Tensor, step: usize) -> Result<f64> {
    let (n, t) = dims(truth, pred)?;
    if step >= t {
        return Err(Error::Contract(format!("step {step} beyond horizon {t}")));
    }
    let sq: f64 = errors(truth, pred)
        .skip(step)
        .step_by(t)
        .map(|e| e * e)
        .sum();
    Ok((sq / n as f64).sqrt())
}

/// RMSE at every whole-second horizon: steps `fps, 2·fps, …, t_out`.
pub fn rmse_curve(truth: &Tensor, pred: &Tensor, fps: f64) -> Result<Vec<(f64, f64)>> {
    let (_, t) = dims(truth, pred)?;
    let per_second = steps_per_second(fps, t)?;
    (1..=t / per_second)
        .map(|s| Ok((s as f64, rmse_at(truth, pred, s * per_second - 1)?)))
        .collect()
}

/// Samples per second, when it is an integer dividing `t_out`.
pub fn steps_per_second(fps: f64, t_out: usize) -> Result<usize> {
    let rounded = fps.round();
    if !(fps > 0.0) || (fps - rounded).abs() > 1e-9 || !t_out.is_multiple_of(rounded as usize) {
        return Err(Error::config(
            "target_fps",
            format!("{t_out} steps at {fps} FPS do not split into whole seconds"),
        ));
    }
    Ok(rounded as usize)
}
