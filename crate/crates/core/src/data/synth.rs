//! Deterministic synthetic scenes for tests and desk-scale experiments.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::types::{Point, TrackPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    ConstantVelocity,
    Turning,
    Crossing,
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant_velocity" => Ok(SceneKind::ConstantVelocity),
            "turning" => Ok(SceneKind::Turning),
            "crossing" => Ok(SceneKind::Crossing),
            other => Err(Error::config("synth_kind", format!("unknown kind `{other}`"))),
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneKind::ConstantVelocity => "constant_velocity",
            SceneKind::Turning => "turning",
            SceneKind::Crossing => "crossing",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub kind: SceneKind,
    pub n_subjects: usize,
    pub n_frames: usize,
    pub seed: u64,
    /// Frame-id increment between samples.
    pub frame_step: u64,
    /// Multiplies every noise-free position: starts lie in `±20·scale`,
    /// speeds in `[0.3, 1.0)·scale` per sample.
    pub scale: f64,
    /// Standard deviation of i.i.d. Gaussian jitter added to every position,
    /// in output units.
    pub noise_std: f64,
}

impl SynthOptions {
    pub fn new(kind: SceneKind, n_subjects: usize, n_frames: usize, seed: u64) -> Self {
        Self {
            kind,
            n_subjects,
            n_frames,
            seed,
            frame_step: 1,
            scale: 1.0,
            noise_std: 0.0,
        }
    }
}

/// Noise-free scene with consecutive frame ids starting at 0.
pub fn synth_scene(kind: SceneKind, n_subjects: usize, n_frames: usize, seed: u64) -> Result<Vec<TrackPoint>> {
    synth_scene_with(&SynthOptions::new(kind, n_subjects, n_frames, seed))
}

pub fn synth_scene_with(opts: &SynthOptions) -> Result<Vec<TrackPoint>> {
    if opts.n_subjects == 0 {
        return Err(Error::config("n_subjects", "must be at least 1"));
    }
    if opts.n_frames == 0 {
        return Err(Error::config("n_frames", "must be at least 1"));
    }
    if opts.frame_step == 0 {
        return Err(Error::config("frame_step", "must be positive"));
    }
    if !(opts.scale > 0.0 && opts.scale.is_finite()) {
        return Err(Error::config("scale", "must be positive and finite"));
    }
    if !(opts.noise_std >= 0.0) {
        return Err(Error::config("noise_std", "must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut paths: Vec<Vec<Point>> = Vec::with_capacity(opts.n_subjects);
    match opts.kind {
        SceneKind::ConstantVelocity => {
            for _ in 0..opts.n_subjects {
                let start = random_start(&mut rng);
                let v = random_velocity(&mut rng);
                paths.push(straight_path(start, v, opts.n_frames, 0.0));
            }
        }
        SceneKind::Turning => {
            for _ in 0..opts.n_subjects {
                let start = random_start(&mut rng);
                let v = random_velocity(&mut rng);
                let omega = rng.gen_range(0.02..0.1) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                paths.push(arc_path(start, v, omega, opts.n_frames));
            }
        }
        SceneKind::Crossing => {
            let meet_at = (opts.n_frames / 2) as f64;
            while paths.len() < opts.n_subjects {
                let meet = random_start(&mut rng);
                let v1 = random_velocity(&mut rng);
                let turn = rng.gen_range(PI / 4.0..3.0 * PI / 4.0);
                let speed2 = rng.gen_range(0.3..1.0) / norm(v1);
                let v2 = rotate(v1, turn).map(|c| c * speed2);
                for v in [v1, v2] {
                    if paths.len() < opts.n_subjects {
                        paths.push(straight_path(meet, v, opts.n_frames, meet_at));
                    }
                }
            }
        }
    }

    let noise = Normal::new(0.0, opts.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut tracks = Vec::with_capacity(opts.n_subjects * opts.n_frames);
    for (subject, path) in paths.into_iter().enumerate() {
        for (k, p) in path.into_iter().enumerate() {
            let (dx, dy) = if opts.noise_std > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            tracks.push(TrackPoint {
                frame_id: k as u64 * opts.frame_step,
                subject_id: subject as u64,
                x: p[0] * opts.scale + dx,
                y: p[1] * opts.scale + dy,
            });
        }
    }
    Ok(tracks)
}

/// `origin + (k - t0) * velocity` for `k = 0..n`.
pub fn straight_path(origin: Point, velocity: Point, n: usize, t0: f64) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let t = k as f64 - t0;
            [origin[0] + t * velocity[0], origin[1] + t * velocity[1]]
        })
        .collect()
}

/// Constant-speed path whose per-step displacement starts at `first_step`
/// and rotates by `omega` radians every step.
///
/// Closed form: the points lie on a circle with centre `start - a`, where
/// `a = (R(omega) - I)^{-1} first_step`, and `p_k = centre + R(k omega) a`.
pub fn arc_path(start: Point, first_step: Point, omega: f64, n: usize) -> Vec<Point> {
    if omega.abs() < 1e-12 {
        return straight_path(start, first_step, n, 0.0);
    }
    let (s, c) = omega.sin_cos();
    let det = (c - 1.0) * (c - 1.0) + s * s;
    let a = [
        ((c - 1.0) * first_step[0] + s * first_step[1]) / det,
        (-s * first_step[0] + (c - 1.0) * first_step[1]) / det,
    ];
    let centre = [start[0] - a[0], start[1] - a[1]];
    (0..n)
        .map(|k| {
            let r = rotate(a, k as f64 * omega);
            [centre[0] + r[0], centre[1] + r[1]]
        })
        .collect()
}

fn random_start(rng: &mut ChaCha8Rng) -> Point {
    [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)]
}

fn random_velocity(rng: &mut ChaCha8Rng) -> Point {
    let speed = rng.gen_range(0.3..1.0);
    let heading = rng.gen_range(0.0..2.0 * PI);
    [speed * heading.cos(), speed * heading.sin()]
}

fn rotate(p: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}
