//! Windowed-dataset cache: a [`DatasetSpec`] followed by its frame samples.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::spec::DatasetSpec;
use super::types::{FrameSample, Point, TrajectoryWindow};
use crate::codec::*;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PSGUDSET";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub spec: DatasetSpec,
    pub frames: Vec<FrameSample>,
}

impl WindowedDataset {
    pub fn n_windows(&self) -> usize {
        self.frames.iter().map(FrameSample::len).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, MAGIC, CACHE_VERSION)?;
        let s = &self.spec;
        write_str(w, &s.name)?;
        write_str(w, s.domain.as_str())?;
        write_str(w, s.units.as_str())?;
        write_f64(w, s.native_fps)?;
        write_f64(w, s.target_fps)?;
        write_u64(w, s.t_in as u64)?;
        write_u64(w, s.t_out as u64)?;
        write_u64(w, self.frames.len() as u64)?;
        for f in &self.frames {
            write_str(w, &f.scene)?;
            write_u64(w, f.anchor_frame)?;
            write_f64s(w, &f.normalization_offset)?;
            write_u64(w, f.windows.len() as u64)?;
            for win in &f.windows {
                if win.t_in() != s.t_in || win.t_out() != s.t_out {
                    return Err(Error::Contract(format!(
                        "window of subject {} does not match the dataset geometry",
                        win.subject_id
                    )));
                }
                write_u64(w, win.subject_id)?;
                write_u64(w, win.anchor_frame)?;
                for pts in [&win.observed, &win.relative, &win.future] {
                    pts.iter().try_for_each(|p| write_f64s(w, p))?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let version = read_header(r, MAGIC, "dataset cache")?;
        if version != CACHE_VERSION {
            return Err(Error::Format(format!(
                "dataset cache version {version} is not supported (expected {CACHE_VERSION})"
            )));
        }
        let spec = DatasetSpec {
            name: read_str(r)?,
            domain: read_str(r)?.parse()?,
            units: read_str(r)?.parse()?,
            native_fps: read_f64(r)?,
            target_fps: read_f64(r)?,
            t_in: read_usize(r)?,
            t_out: read_usize(r)?,
        };
        spec.validate()?;
        let n_frames = read_usize(r)?;
        let mut frames = Vec::with_capacity(n_frames.min(1 << 16));
        for _ in 0..n_frames {
            let scene = read_str(r)?;
            let anchor_frame = read_u64(r)?;
            let normalization_offset = read_point(r)?;
            let n_windows = read_usize(r)?;
            let mut windows = Vec::with_capacity(n_windows.min(1 << 12));
            for _ in 0..n_windows {
                let subject_id = read_u64(r)?;
                let anchor = read_u64(r)?;
                let observed = read_points(r, spec.t_in)?;
                let relative = read_points(r, spec.t_in)?;
                let future = read_points(r, spec.t_out)?;
                windows.push(TrajectoryWindow {
                    subject_id,
                    anchor_frame: anchor,
                    observed,
                    relative,
                    future,
                });
            }
            frames.push(FrameSample {
                scene,
                anchor_frame,
                windows,
                normalization_offset,
            });
        }
        Ok(Self { spec, frames })
    }
}

fn read_point<R: Read>(r: &mut R) -> Result<Point> {
    Ok([read_f64(r)?, read_f64(r)?])
}

fn read_points<R: Read>(r: &mut R, n: usize) -> Result<Vec<Point>> {
    (0..n).map(|_| read_point(r)).collect()
}
