//! Per-sample latency and samples-per-frame throughput accounting.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::FrameSample;
use crate::error::{Error, Result};
use crate::model::{forward, ModelParams};
use crate::numerics::Tensor;

pub const MIN_WARMUP: usize = 5;
pub const MIN_REPS: usize = 30;

/// Anything that maps a frame to per-subject predictions.
pub trait Predictor {
    fn predict(&self, frame: &FrameSample) -> Result<Tensor>;
}

impl Predictor for ModelParams {
    fn predict(&self, frame: &FrameSample) -> Result<Tensor> {
        forward(frame, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub latency_ms_mean: f64,
    pub latency_ms_std: f64,
    pub samples_per_frame: f64,
    pub fps: f64,
    pub warmup_reps: usize,
    pub measured_reps: usize,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "latency_ms_mean = {}", self.latency_ms_mean);
        let _ = writeln!(out, "latency_ms_std = {}", self.latency_ms_std);
        let _ = writeln!(out, "samples_per_frame = {}", self.samples_per_frame);
        let _ = writeln!(out, "fps = {}", self.fps);
        let _ = writeln!(out, "warmup_reps = {}", self.warmup_reps);
        let _ = writeln!(out, "measured_reps = {}", self.measured_reps);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.txt` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let txt = stem.with_extension("txt");
        let json = stem.with_extension("json");
        std::fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))?;
        std::fs::write(&json, self.to_json() + "\n").map_err(|e| Error::io(&json, e))
    }
}

/// Frames per second when every subject of a frame is predicted one at a
/// time at `latency_ms` each.
pub fn throughput_fps(latency_ms: f64, samples_per_frame: f64) -> f64 {
    1000.0 / (latency_ms * samples_per_frame)
}

/// Mean number of subjects per frame.
pub fn samples_per_frame(frames: &[FrameSample]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::config("frames", "benchmark needs at least one frame"));
    }
    let total: usize = frames.iter().map(FrameSample::len).sum();
    Ok(total as f64 / frames.len() as f64)
}

/// Times `reps` passes over `frames` after `warmup` untimed passes. Each
/// pass yields one per-sample latency: its wall time over the subjects it
/// processed.
pub fn bench_forward<P: Predictor + ?Sized>(
    predictor: &P,
    frames: &[FrameSample],
    warmup: usize,
    reps: usize,
) -> Result<BenchReport> {
    let spf = samples_per_frame(frames)?;
    if warmup < MIN_WARMUP {
        return Err(Error::config("warmup", format!("must be at least {MIN_WARMUP}")));
    }
    if reps < MIN_REPS {
        return Err(Error::config("reps", format!("must be at least {MIN_REPS}")));
    }
    let subjects: usize = frames.iter().map(FrameSample::len).sum();
    if subjects == 0 {
        return Err(Error::config("frames", "frames contain no subjects"));
    }
    for _ in 0..warmup {
        for f in frames {
            std::hint::black_box(predictor.predict(f)?);
        }
    }
    let mut per_sample = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for f in frames {
            std::hint::black_box(predictor.predict(f)?);
        }
        per_sample.push(start.elapsed().as_secs_f64() * 1e3 / subjects as f64);
    }
    let mean = per_sample.iter().sum::<f64>() / reps as f64;
    let var = per_sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    Ok(BenchReport {
        latency_ms_mean: mean,
        latency_ms_std: var.sqrt(),
        samples_per_frame: spf,
        fps: throughput_fps(mean, spf),
        warmup_reps: warmup,
        measured_reps: reps,
    })
}
