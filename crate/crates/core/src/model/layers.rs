//! Forward pass: input embedding, one-step GIN aggregation over the fully
//! connected frame graph, and the attentive CNN predictor.

use super::config::ModelConfig;
use super::params::{Affine, CbamParams, GinParams, Mlp, ModelParams, Weights};
use crate::data::FrameSample;
use crate::error::{Error, Result};
use crate::numerics::{Padding, PoolMode, Tape, Tensor, Var};

pub fn affine(tape: &mut Tape, x: Var, a: &Affine<Var>) -> Result<Var> {
    let y = tape.matmul(x, a.weight)?;
    tape.add_broadcast(y, a.bias)
}

pub fn mlp(tape: &mut Tape, x: Var, m: &Mlp<Var>) -> Result<Var> {
    let h = affine(tape, x, &m.hidden)?;
    let h = tape.relu(h)?;
    affine(tape, h, &m.output)
}

fn check_frame(frame: &FrameSample, t_in: usize) -> Result<()> {
    if frame.is_empty() {
        return Err(Error::EmptyFrame);
    }
    for w in &frame.windows {
        if w.observed.len() != t_in || w.relative.len() != t_in {
            return Err(Error::Contract(format!(
                "subject {} has {} observed steps, model expects {t_in}",
                w.subject_id,
                w.observed.len()
            )));
        }
    }
    Ok(())
}

/// Per-subject input rows `[x_0, y_0, .., x_T, y_T, dx_0, dy_0, .., dx_T, dy_T]`.
pub fn node_inputs(frame: &FrameSample, t_in: usize) -> Result<Tensor> {
    check_frame(frame, t_in)?;
    let mut data = Vec::with_capacity(frame.len() * 4 * t_in);
    for w in &frame.windows {
        data.extend(w.observed.iter().flatten());
        data.extend(w.relative.iter().flatten());
    }
    Tensor::new([frame.len(), 4 * t_in], data)
}

/// Single fully connected layer followed by relu: `n × D_e` node features.
pub fn embed_inputs(tape: &mut Tape, frame: &FrameSample, embed: &Affine<Var>, t_in: usize) -> Result<Var> {
    let x = tape.constant(node_inputs(frame, t_in)?);
    let h = affine(tape, x, embed)?;
    tape.relu(h)
}

/// `f_i' = MLP0((1 + theta) f_i) + MLP1(sum_{j != i} f_j)` for every node of
/// the fully connected graph.
pub fn gin_aggregate(tape: &mut Tape, features: Var, gin: &GinParams<Var>) -> Result<Var> {
    let shape = tape.value(features).shape().to_vec();
    let n = match shape[..] {
        [n, _] => n,
        _ => return Err(Error::dim("gin_aggregate", format!("features must be n×D, got {shape:?}"))),
    };
    // neighbour sums as (J - I) · F
    let mut adj = Tensor::filled([n, n], 1.0);
    for i in 0..n {
        adj.data_mut()[i * n + i] = 0.0;
    }
    let adj = tape.constant(adj);
    let neighbours = tape.matmul(adj, features)?;

    let scale = tape.add_const(gin.theta, 1.0)?;
    let own = tape.mul_scalar(features, scale)?;
    let a = mlp(tape, own, &gin.mlp0)?;
    let b = mlp(tape, neighbours, &gin.mlp1)?;
    tape.add(a, b)
}

/// Lifts a `[C,H,W]` map to `[1,C,H,W]`; returns whether it was lifted.
fn as_batched(tape: &mut Tape, fmap: Var) -> Result<(Var, bool)> {
    let shape = tape.value(fmap).shape().to_vec();
    match shape.len() {
        4 => Ok((fmap, false)),
        3 => Ok((tape.reshape(fmap, [1, shape[0], shape[1], shape[2]])?, true)),
        _ => Err(Error::dim("attention", format!("expected a 3-D or 4-D map, got {shape:?}"))),
    }
}

/// Channel gate `sigmoid(MLP(avgpool F) + MLP(maxpool F))`: `[N,C]`, or
/// `[C]` for a single `[C,H,W]` map.
pub fn channel_attention(tape: &mut Tape, fmap: Var, cbam: &CbamParams<Var>) -> Result<Var> {
    let (x, lifted) = as_batched(tape, fmap)?;
    let c = tape.value(x).shape()[1];
    let expected = tape.value(cbam.channel_mlp.hidden.weight).shape()[0];
    if c != expected {
        return Err(Error::Contract(format!(
            "feature map has {c} channels, attention block expects {expected}"
        )));
    }
    let avg = tape.pool_spatial(x, PoolMode::Avg)?;
    let max = tape.pool_spatial(x, PoolMode::Max)?;
    let a = mlp(tape, avg, &cbam.channel_mlp)?;
    let b = mlp(tape, max, &cbam.channel_mlp)?;
    let s = tape.add(a, b)?;
    let gate = tape.sigmoid(s)?;
    if lifted {
        tape.reshape(gate, [c])
    } else {
        Ok(gate)
    }
}

/// Spatial gate `sigmoid(conv7x7([avg_c F; max_c F]))`: `[N,1,H,W]`, or
/// `[1,H,W]` for a single map.
pub fn spatial_attention(tape: &mut Tape, fmap: Var, cbam: &CbamParams<Var>) -> Result<Var> {
    let (x, lifted) = as_batched(tape, fmap)?;
    let k = tape.value(cbam.spatial_conv.kernel).shape()[2];
    let avg = tape.pool_channel(x, PoolMode::Avg)?;
    let max = tape.pool_channel(x, PoolMode::Max)?;
    let both = tape.concat(&[avg, max], 1)?;
    let conv = tape.conv2d(both, cbam.spatial_conv.kernel, cbam.spatial_conv.bias, Padding::symmetric(k / 2))?;
    let gate = tape.sigmoid(conv)?;
    if lifted {
        let s = tape.value(gate).shape().to_vec();
        tape.reshape(gate, [1, s[2], s[3]])
    } else {
        Ok(gate)
    }
}

/// Channel attention then spatial attention, each applied as a
/// multiplicative gate. `fmap` is `[N,C,H,W]`.
pub fn apply_cbam(tape: &mut Tape, fmap: Var, cbam: &CbamParams<Var>) -> Result<Var> {
    let shape = tape.value(fmap).shape().to_vec();
    let gate_c = channel_attention(tape, fmap, cbam)?;
    let gate_c = tape.reshape(gate_c, [shape[0], shape[1], 1, 1])?;
    let refined = tape.mul_broadcast(fmap, gate_c)?;
    let gate_s = spatial_attention(tape, refined, cbam)?;
    tape.mul_broadcast(refined, gate_s)
}

/// Builds the `[n, 1, t_in, F + 2]` CNN input: GIN output reshaped to
/// `(t_in, F)` with each subject's relative coordinates appended per step.
pub fn cnn_input(tape: &mut Tape, gin_out: Var, frame: &FrameSample, cfg: &ModelConfig) -> Result<Var> {
    let n = frame.len();
    let t = cfg.t_in;
    let f = cfg.features_per_step;
    let rel: Vec<f64> = frame.windows.iter().flat_map(|w| w.relative.iter().flatten().copied()).collect();
    let rel = tape.constant(Tensor::new([n, t, 2], rel)?);
    let g = tape.reshape(gin_out, [n, t, f])?;
    let joined = tape.concat(&[g, rel], 2)?;
    tape.reshape(joined, [n, 1, t, f + 2])
}

/// Three conv → relu → attention stages, mean over the feature axis,
/// flattened to `n × (C3 · t_in)`.
pub fn attentive_cnn(tape: &mut Tape, x: Var, w: &Weights<Var>) -> Result<Var> {
    let pads = [Padding::leading(1, 1), Padding::leading(1, 0), Padding::leading(1, 0)];
    let mut h = x;
    for ((conv, cbam), pad) in w.convs.iter().zip(&w.cbams).zip(pads) {
        h = tape.conv2d(h, conv.kernel, conv.bias, pad)?;
        h = tape.relu(h)?;
        h = apply_cbam(tape, h, cbam)?;
    }
    let pooled = tape.mean_axis(h, 3)?;
    let s = tape.value(pooled).shape().to_vec();
    tape.reshape(pooled, [s[0], s[1] * s[2]])
}

/// Network output before decoding: per-subject displacements from the last
/// observed position, `[n, t_out, 2]`.
pub fn offsets_on_tape(tape: &mut Tape, frame: &FrameSample, w: &Weights<Var>, cfg: &ModelConfig) -> Result<Var> {
    check_frame(frame, cfg.t_in)?;
    let n = frame.len();
    let emb = embed_inputs(tape, frame, &w.embed, cfg.t_in)?;
    let g = gin_aggregate(tape, emb, &w.gin)?;
    let x = cnn_input(tape, g, frame, cfg)?;
    let feats = attentive_cnn(tape, x, w)?;
    let offsets = affine(tape, feats, &w.head)?;
    tape.reshape(offsets, [n, cfg.t_out, 2])
}

/// Full network on `tape`: predicted positions `[n, t_out, 2]` in the
/// frame's normalized coordinates.
pub fn forward_on_tape(tape: &mut Tape, frame: &FrameSample, w: &Weights<Var>, cfg: &ModelConfig) -> Result<Var> {
    let offsets = offsets_on_tape(tape, frame, w, cfg)?;
    let last: Vec<f64> = frame.windows.iter().flat_map(|w| w.last_observed()).collect();
    let last = tape.constant(Tensor::new([frame.len(), 1, 2], last)?);
    tape.add_broadcast(offsets, last)
}

/// Normalized-coordinate predictions `[n, t_out, 2]`, without gradient
/// tracking.
pub fn forward(frame: &FrameSample, params: &ModelParams) -> Result<Tensor> {
    let mut tape = Tape::inference();
    let w = params.bind(&mut tape, false);
    let out = forward_on_tape(&mut tape, frame, &w, &params.config)?;
    Ok(tape.value(out).clone())
}

/// Predictions in the frame's original coordinates.
pub fn predict_absolute(frame: &FrameSample, params: &ModelParams) -> Result<Tensor> {
    let mut pred = forward(frame, params)?;
    let [ox, oy] = frame.normalization_offset;
    for xy in pred.data_mut().chunks_exact_mut(2) {
        xy[0] += ox;
        xy[1] += oy;
    }
    Ok(pred)
}
