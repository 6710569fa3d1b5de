use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Per-tensor gradients in the parameters' canonical name order.
pub type Gradients = Vec<(String, Vec<f64>)>;

/// Adam moments, one buffer per parameter tensor in canonical name order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.named_tensors().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

pub fn global_norm(grads: &Gradients) -> f64 {
    grads.iter().flat_map(|(_, g)| g).map(|g| g * g).sum::<f64>().sqrt()
}

/// One Adam update with bias correction. Gradients are rescaled to
/// `gradient_clip` global norm first when clipping is enabled.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    let names = params.named_tensors();
    if grads.len() != names.len() || state.m.len() != names.len() || state.v.len() != names.len() {
        return Err(Error::Contract(format!(
            "{} gradients / {} moments for {} parameter tensors",
            grads.len(),
            state.m.len(),
            names.len()
        )));
    }
    for ((name, t), (gname, g)) in names.iter().zip(grads) {
        if name != gname || g.len() != t.numel() {
            return Err(Error::Contract(format!("gradient `{gname}` does not mirror parameter `{name}`")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    let scale = match cfg.gradient_clip {
        Some(max) => {
            let norm = global_norm(grads);
            if norm > max { max / norm } else { 1.0 }
        }
        None => 1.0,
    };

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut k = 0;
    params.weights.visit_mut(&mut |_, p| {
        let g = &grads[k].1;
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g * scale;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        k += 1;
    });
    Ok(())
}
