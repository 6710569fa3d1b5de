//! Little-endian primitives shared by the binary file formats.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

fn io_err(e: std::io::Error) -> Error {
    Error::Format(format!("binary I/O: {e}"))
}

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 8], version: u32) -> Result<()> {
    w.write_all(magic).map_err(io_err)?;
    w.write_u32::<LE>(version).map_err(io_err)
}

/// Checks the magic bytes and returns the format version.
pub(crate) fn read_header<R: Read>(r: &mut R, magic: &[u8; 8], what: &str) -> Result<u32> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)
        .map_err(|_| Error::Format(format!("not a {what} file (truncated header)")))?;
    if &got != magic {
        return Err(Error::Format(format!("not a {what} file (bad magic)")));
    }
    r.read_u32::<LE>().map_err(io_err)
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_u64::<LE>(v).map_err(io_err)
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    r.read_u64::<LE>().map_err(io_err)
}

pub(crate) fn read_usize<R: Read>(r: &mut R) -> Result<usize> {
    let v = read_u64(r)?;
    usize::try_from(v).map_err(|_| Error::Format(format!("length {v} out of range")))
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_f64::<LE>(v).map_err(io_err)
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    r.read_f64::<LE>().map_err(io_err)
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    vs.iter().try_for_each(|&v| write_f64(w, v))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LE>(&mut out).map_err(io_err)?;
    Ok(out)
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u64(w, s.len() as u64)?;
    w.write_all(s.as_bytes()).map_err(io_err)
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_usize(r)?;
    if n > 1 << 20 {
        return Err(Error::Format(format!("string length {n} is implausible")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(io_err)?;
    String::from_utf8(buf).map_err(|_| Error::Format("string is not UTF-8".into()))
}
