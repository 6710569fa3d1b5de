use crate::data::{Point, TrajectoryWindow};

/// Extrapolates the last observed step `t_out` times.
pub fn constant_velocity_predict(window: &TrajectoryWindow, t_out: usize) -> Vec<Point> {
    let obs = &window.observed;
    let last = obs[obs.len() - 1];
    let prev = obs[obs.len() - 2];
    let v = [last[0] - prev[0], last[1] - prev[1]];
    (1..=t_out)
        .map(|t| {
            let t = t as f64;
            [last[0] + t * v[0], last[1] + t * v[1]]
        })
        .collect()
}

/// Ordinary least-squares lines `x(k)`, `y(k)` over observed steps
/// `k = 0..t_in`, evaluated at `k = t_in, .., t_in + t_out - 1`.
pub fn linear_fit_predict(window: &TrajectoryWindow, t_out: usize) -> Vec<Point> {
    let obs = &window.observed;
    let n = obs.len() as f64;
    let k_mean = (n - 1.0) / 2.0;
    let mut mean = [0.0; 2];
    for p in obs {
        mean[0] += p[0] / n;
        mean[1] += p[1] / n;
    }
    let mut sxx = 0.0;
    let mut sxy = [0.0; 2];
    for (k, p) in obs.iter().enumerate() {
        let dk = k as f64 - k_mean;
        sxx += dk * dk;
        sxy[0] += dk * (p[0] - mean[0]);
        sxy[1] += dk * (p[1] - mean[1]);
    }
    let slope = [sxy[0] / sxx, sxy[1] / sxx];
    (0..t_out)
        .map(|t| {
            let dk = (obs.len() + t) as f64 - k_mean;
            [mean[0] + slope[0] * dk, mean[1] + slope[1] * dk]
        })
        .collect()
}
