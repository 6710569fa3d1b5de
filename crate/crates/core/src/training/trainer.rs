use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::{adam_step, AdamState, Gradients};
use crate::data::{DatasetSpec, FrameSample};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::model::{offsets_on_tape, predict_absolute, ModelConfig, ModelParams};
use crate::model::Weights;
use crate::numerics::{Tape, Tensor, Var};

/// Mean squared error over every coordinate, recorded on `tape`.
pub fn loss_on_tape(tape: &mut Tape, pred: Var, truth: Var) -> Result<Var> {
    let (ps, ts) = (tape.value(pred).shape(), tape.value(truth).shape());
    if ps != ts {
        return Err(Error::Contract(format!("prediction {ps:?} and target {ts:?} differ in shape")));
    }
    let d = tape.sub(pred, truth)?;
    let sq = tape.mul(d, d)?;
    tape.mean(sq)
}

/// Mean squared error over every coordinate.
pub fn loss(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    let mut tape = Tape::inference();
    let p = tape.constant(pred.clone());
    let t = tape.constant(truth.clone());
    let l = loss_on_tape(&mut tape, p, t)?;
    Ok(tape.value(l).item())
}

/// Ground-truth futures of a frame in normalized coordinates, `[n, t_out, 2]`.
pub fn frame_targets(frame: &FrameSample, t_out: usize) -> Result<Tensor> {
    for w in &frame.windows {
        if w.future.len() != t_out {
            return Err(Error::Contract(format!(
                "subject {} has {} future steps, model predicts {t_out}",
                w.subject_id,
                w.future.len()
            )));
        }
    }
    metrics::stack_points(frame.windows.iter().map(|w| w.future.as_slice()))
}

/// Targets as displacements from each subject's last observed position.
/// Comparing these with the network's raw offsets gives the same loss as
/// comparing positions, without the rounding of adding and removing the
/// anchor.
pub fn frame_offset_targets(frame: &FrameSample, t_out: usize) -> Result<Tensor> {
    let mut targets = frame_targets(frame, t_out)?;
    for (w, rows) in frame.windows.iter().zip(targets.data_mut().chunks_exact_mut(2 * t_out)) {
        let last = w.last_observed();
        for p in rows.chunks_exact_mut(2) {
            p[0] -= last[0];
            p[1] -= last[1];
        }
    }
    Ok(targets)
}

/// Training loss of one frame recorded on `tape`.
pub fn frame_loss_on_tape(tape: &mut Tape, frame: &FrameSample, w: &Weights<Var>, cfg: &ModelConfig) -> Result<Var> {
    let targets = tape.constant(frame_offset_targets(frame, cfg.t_out)?);
    let offsets = offsets_on_tape(tape, frame, w, cfg)?;
    loss_on_tape(tape, offsets, targets)
}

/// Loss on one frame and its gradient for every parameter tensor.
pub fn loss_and_grads(frame: &FrameSample, params: &ModelParams) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let w = params.bind(&mut tape, true);
    let l = frame_loss_on_tape(&mut tape, frame, &w, &params.config)?;
    tape.backward(l)?;
    let value = tape.value(l).item();
    let grads = w
        .named()
        .into_iter()
        .map(|(name, &v)| {
            let g = match tape.grad(v) {
                Some(g) => g.to_vec(),
                None => vec![0.0; tape.value(v).numel()],
            };
            (name, g)
        })
        .collect();
    Ok((value, grads))
}

/// Mean per-frame loss over `frames`, without gradients.
pub fn mean_loss(frames: &[FrameSample], params: &ModelParams) -> Result<f64> {
    let mut total = 0.0;
    for f in frames {
        let mut tape = Tape::inference();
        let w = params.bind(&mut tape, false);
        let l = frame_loss_on_tape(&mut tape, f, &w, &params.config)?;
        total += tape.value(l).item();
    }
    Ok(total / frames.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean loss of the optimization steps taken during the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Adam over one frame graph per step, frames reshuffled every epoch.
pub fn train(
    train_set: &[FrameSample],
    val_set: &[FrameSample],
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    train_with(train_set, val_set, model_cfg, cfg, |_, _| Ok(()))
}

/// [`train`] with a hook called after every epoch.
pub fn train_with(
    train_set: &[FrameSample],
    val_set: &[FrameSample],
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &ModelParams) -> Result<()>,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    cfg.validate()?;
    if train_set.is_empty() || train_set.iter().all(FrameSample::is_empty) {
        return Err(Error::config("train", "training set has no frames"));
    }
    let mut params = ModelParams::init(model_cfg, cfg.seed)?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).filter(|&i| !train_set[i].is_empty()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (l, grads) = loss_and_grads(&train_set[i], &params)?;
            adam_step(&mut params, &grads, &mut state, cfg)?;
            total += l;
        }
        let validate = !val_set.is_empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        let val_loss = if validate { Some(mean_loss(val_set, &params)?) } else { None };
        let log = EpochLog {
            epoch,
            train_loss: total / order.len() as f64,
            val_loss,
        };
        log::info!(
            "epoch {epoch}: train {:.6}{}",
            log.train_loss,
            val_loss.map(|v| format!(", val {v:.6}")).unwrap_or_default()
        );
        on_epoch(&log, &params)?;
        history.push(log);
    }
    Ok((params, history))
}

/// `epoch,train_loss,val_loss` rows; missing validation losses are blank.
pub fn write_history<W: Write>(mut w: W, history: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss")?;
    for h in history {
        let val = h.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", h.epoch, h.train_loss, val)?;
    }
    Ok(())
}

pub fn save_history(path: &Path, history: &[EpochLog]) -> Result<()> {
    let mut buf = Vec::new();
    write_history(&mut buf, history).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn check_geometry(frames: &[FrameSample], cfg: &ModelConfig) -> Result<()> {
    for w in frames.iter().flat_map(|f| &f.windows) {
        if w.t_in() != cfg.t_in || w.t_out() != cfg.t_out {
            return Err(Error::Contract(format!(
                "window of subject {} is {}+{} steps, model expects {}+{}",
                w.subject_id,
                w.t_in(),
                w.t_out(),
                cfg.t_in,
                cfg.t_out
            )));
        }
    }
    Ok(())
}

/// Predicts every frame and aggregates metrics in the dataset's units.
pub fn evaluate(frames: &[FrameSample], params: &ModelParams, spec: &DatasetSpec) -> Result<MetricReport> {
    check_geometry(frames, &params.config)?;
    let frames: Vec<&FrameSample> = frames.iter().filter(|f| !f.is_empty()).collect();
    if frames.is_empty() {
        return Err(Error::config("eval", "dataset has no windows"));
    }
    let mut pred = Vec::new();
    for f in &frames {
        pred.extend(predict_absolute(f, params)?.into_data());
    }
    let owned: Vec<FrameSample> = frames.into_iter().cloned().collect();
    let truth = metrics::truth_absolute(&owned)?;
    let pred = Tensor::new(truth.shape().to_vec(), pred)?;
    metrics::report(&truth, &pred, spec.units, spec.target_fps)
}

/// Metrics of the constant-velocity baseline on the same frames.
pub fn evaluate_constant_velocity(frames: &[FrameSample], spec: &DatasetSpec) -> Result<MetricReport> {
    let truth = metrics::truth_absolute(frames)?;
    let pred = metrics::baseline_absolute(frames, metrics::constant_velocity_predict)?;
    metrics::report(&truth, &pred, spec.units, spec.target_fps)
}
