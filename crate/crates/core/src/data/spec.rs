use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Domain, Units};
use crate::error::{Error, Result};
use crate::kv;

/// Sampling and window geometry for one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub domain: Domain,
    pub units: Units,
    pub native_fps: f64,
    pub target_fps: f64,
    pub t_in: usize,
    pub t_out: usize,
}

pub const PRESET_NAMES: [&str; 3] = ["vehicle", "pedestrian_birdseye", "pedestrian_highangle"];

impl DatasetSpec {
    /// Highway vehicles, bird's-eye view: 10 Hz recordings sampled at 5 FPS,
    /// 3 s observed, 5 s predicted.
    pub fn vehicle() -> Self {
        Self {
            name: "vehicle".into(),
            domain: Domain::VehicleBirdseye,
            units: Units::Meters,
            native_fps: 10.0,
            target_fps: 5.0,
            t_in: 15,
            t_out: 25,
        }
    }

    /// Pedestrians, bird's-eye view in meters at 2.5 FPS: 3.2 s observed,
    /// 4.8 s predicted.
    pub fn pedestrian_birdseye() -> Self {
        Self {
            name: "pedestrian_birdseye".into(),
            domain: Domain::PedestrianBirdseye,
            units: Units::Meters,
            native_fps: 25.0,
            target_fps: 2.5,
            t_in: 8,
            t_out: 12,
        }
    }

    /// Pedestrians, high-angle surveillance view in pixels, 30 FPS video
    /// downsampled to 2.5 FPS.
    pub fn pedestrian_highangle() -> Self {
        Self {
            name: "pedestrian_highangle".into(),
            domain: Domain::PedestrianHighangle,
            units: Units::Pixels,
            native_fps: 30.0,
            target_fps: 2.5,
            t_in: 8,
            t_out: 12,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "vehicle" => Ok(Self::vehicle()),
            "pedestrian_birdseye" => Ok(Self::pedestrian_birdseye()),
            "pedestrian_highangle" => Ok(Self::pedestrian_highangle()),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (expected one of {PRESET_NAMES:?})"),
            )),
        }
    }

    /// Native frames per sampled step.
    pub fn frame_stride(&self) -> Result<u64> {
        frame_stride(self.native_fps, self.target_fps)
    }

    pub fn window_len(&self) -> usize {
        self.t_in + self.t_out
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.t_in < 2 {
            return Err(Error::config("t_in", "must be at least 2"));
        }
        if self.t_out < 1 {
            return Err(Error::config("t_out", "must be at least 1"));
        }
        self.frame_stride().map(|_| ())
    }

    pub fn to_kv(&self) -> String {
        kv::render([
            ("name", self.name.clone()),
            ("domain", self.domain.to_string()),
            ("units", self.units.to_string()),
            ("native_fps", self.native_fps.to_string()),
            ("target_fps", self.target_fps.to_string()),
            ("t_in", self.t_in.to_string()),
            ("t_out", self.t_out.to_string()),
        ])
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let spec = Self {
            name: kv::get(map, "name")?,
            domain: kv::get(map, "domain")?,
            units: kv::get(map, "units")?,
            native_fps: kv::get(map, "native_fps")?,
            target_fps: kv::get(map, "target_fps")?,
            t_in: kv::get(map, "t_in")?,
            t_out: kv::get(map, "t_out")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a preset file of `key = value` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_map(&kv::parse(&text)?)
    }
}

pub fn frame_stride(native_fps: f64, target_fps: f64) -> Result<u64> {
    if !(native_fps > 0.0) || !native_fps.is_finite() {
        return Err(Error::config("native_fps", "must be positive"));
    }
    if !(target_fps > 0.0) || !target_fps.is_finite() {
        return Err(Error::config("target_fps", "must be positive"));
    }
    let ratio = native_fps / target_fps;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::config(
            "target_fps",
            format!("{native_fps} FPS is not an integer multiple of {target_fps} FPS"),
        ));
    }
    Ok(stride as u64)
}
