//! Central finite-difference oracle for tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, coordinate)` with the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Relative error with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks every coordinate of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |c| (i, c)))
        .collect();
    grad_check_coords(f, inputs, &coords, step)
}

/// Checks only the listed `(input, coordinate)` pairs.
pub fn grad_check_coords<F>(
    f: F,
    inputs: &[Tensor],
    coords: &[(usize, usize)],
    step: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Contract(format!("step must be positive, got {step}")));
    }
    let analytic = analytic_grads(&f, inputs)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for &(i, c) in coords {
        if i >= inputs.len() || c >= inputs[i].numel() {
            return Err(Error::Contract(format!(
                "coordinate ({i}, {c}) out of range"
            )));
        }
        let orig = inputs[i].data()[c];
        probe[i].data_mut()[c] = orig + step;
        let plus = evaluate(&f, &probe).map_err(|e| oracle_err(i, c, e))?;
        probe[i].data_mut()[c] = orig - step;
        let minus = evaluate(&f, &probe).map_err(|e| oracle_err(i, c, e))?;
        probe[i].data_mut()[c] = orig;

        let numeric = (plus - minus) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(Error::Oracle {
                input: i,
                coord: c,
                reason: format!("non-finite output (f+ = {plus}, f- = {minus})"),
            });
        }
        let err = relative_error(analytic[i][c], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((i, c));
        }
    }
    Ok(report)
}

/// Gradients of `f` with respect to each input, via the tape.
pub fn analytic_grads<F>(f: &F, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().tracked()))
        .collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect())
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::inference();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.numel() != 1 {
        return Err(Error::Contract(format!(
            "function must return a scalar, got {:?}",
            value.shape()
        )));
    }
    Ok(value.item())
}

fn oracle_err(input: usize, coord: usize, e: Error) -> Error {
    Error::Oracle {
        input,
        coord,
        reason: e.to_string(),
    }
}
