use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D position or displacement `(x, y)`.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame_id: u64,
    pub subject_id: u64,
    pub x: f64,
    pub y: f64,
}

/// One subject's observed history and ground-truth future around an anchor
/// frame (the last observed frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWindow {
    pub subject_id: u64,
    pub anchor_frame: u64,
    pub observed: Vec<Point>,
    /// `observed[k] - observed[0]`.
    pub relative: Vec<Point>,
    pub future: Vec<Point>,
}

impl TrajectoryWindow {
    pub fn from_positions(
        subject_id: u64,
        anchor_frame: u64,
        observed: Vec<Point>,
        future: Vec<Point>,
    ) -> Self {
        let origin = observed[0];
        let relative = observed
            .iter()
            .map(|p| [p[0] - origin[0], p[1] - origin[1]])
            .collect();
        Self {
            subject_id,
            anchor_frame,
            observed,
            relative,
            future,
        }
    }

    pub fn t_in(&self) -> usize {
        self.observed.len()
    }

    pub fn t_out(&self) -> usize {
        self.future.len()
    }

    pub fn last_observed(&self) -> Point {
        *self.observed.last().expect("window has no observed positions")
    }

    /// Shifts absolute coordinates; relative coordinates are unaffected.
    pub fn translate(&mut self, by: Point) {
        for p in self.observed.iter_mut().chain(self.future.iter_mut()) {
            p[0] += by[0];
            p[1] += by[1];
        }
    }
}

/// All subjects co-anchored at one frame: the node set of the frame graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub scene: String,
    pub anchor_frame: u64,
    pub windows: Vec<TrajectoryWindow>,
    /// Subtracted from every absolute coordinate in `windows`.
    pub normalization_offset: Point,
}

impl FrameSample {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Windows in original dataset coordinates.
    pub fn denormalized(&self) -> Vec<TrajectoryWindow> {
        self.windows
            .iter()
            .cloned()
            .map(|mut w| {
                w.translate(self.normalization_offset);
                w
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    VehicleBirdseye,
    PedestrianBirdseye,
    PedestrianHighangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Meters,
    Pixels,
}

macro_rules! str_enum {
    ($ty:ident, $field:literal, { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::config($field, format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

str_enum!(Domain, "domain", {
    VehicleBirdseye => "vehicle_birdseye",
    PedestrianBirdseye => "pedestrian_birdseye",
    PedestrianHighangle => "pedestrian_highangle",
});

str_enum!(Units, "units", {
    Meters => "meters",
    Pixels => "pixels",
});
