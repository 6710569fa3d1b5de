use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::spec::frame_stride;
use super::types::TrackPoint;
use crate::error::{Error, Result};

const COLUMNS: [&str; 4] = ["frame_id", "subject_id", "x", "y"];

/// Loads a `frame_id,subject_id,x,y` CSV, sorted by `(subject_id, frame_id)`.
pub fn load_tracks(path: &Path) -> Result<Vec<TrackPoint>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tracks(file)
}

pub fn read_tracks<R: Read>(reader: R) -> Result<Vec<TrackPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))?;
    }
    let extra: Vec<&str> = headers.iter().filter(|h| !COLUMNS.contains(h)).collect();
    if !extra.is_empty() {
        log::warn!("ignoring extra columns {extra:?}");
    }

    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let parse_err = |name: &str, raw: &str| Error::Parse {
            line,
            reason: format!("`{name}` value `{raw}` is not numeric"),
        };
        let frame_id = field(0)
            .parse::<u64>()
            .map_err(|_| parse_err("frame_id", field(0)))?;
        let subject_id = field(1)
            .parse::<u64>()
            .map_err(|_| parse_err("subject_id", field(1)))?;
        let x = parse_coord(field(2)).ok_or_else(|| parse_err("x", field(2)))?;
        let y = parse_coord(field(3)).ok_or_else(|| parse_err("y", field(3)))?;
        points.push(TrackPoint {
            frame_id,
            subject_id,
            x,
            y,
        });
    }
    points.sort_by_key(|p| (p.subject_id, p.frame_id));
    if let Some(pair) = points
        .windows(2)
        .find(|w| (w[0].subject_id, w[0].frame_id) == (w[1].subject_id, w[1].frame_id))
    {
        return Err(Error::Format(format!(
            "duplicate row for frame {} subject {}",
            pair[0].frame_id, pair[0].subject_id
        )));
    }
    Ok(points)
}

fn parse_coord(raw: &str) -> Option<f64> {
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn write_tracks<W: Write>(writer: W, tracks: &[TrackPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(COLUMNS).map_err(to_err)?;
    for p in tracks {
        w.write_record([
            p.frame_id.to_string(),
            p.subject_id.to_string(),
            p.x.to_string(),
            p.y.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn save_tracks(path: &Path, tracks: &[TrackPoint]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tracks(std::io::BufWriter::new(file), tracks)
}

/// Keeps frames whose id is a multiple of `native_fps / target_fps`.
pub fn downsample(tracks: &[TrackPoint], native_fps: f64, target_fps: f64) -> Result<Vec<TrackPoint>> {
    let stride = frame_stride(native_fps, target_fps)?;
    Ok(tracks
        .iter()
        .filter(|p| p.frame_id % stride == 0)
        .copied()
        .collect())
}
