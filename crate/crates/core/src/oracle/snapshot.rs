//! Pressure-field snapshots: a 16-byte header (8-byte magic, `nx`, `ny` as
//! little-endian u32) followed by frames of `nx * ny` little-endian f64 in
//! row-major `(x, y)` order.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SQFPRES1";

pub struct SnapshotWriter<W: Write> {
    inner: W,
    frame_len: usize,
}

impl<W: Write> SnapshotWriter<W> {
    pub fn new(mut inner: W, nx: usize, ny: usize) -> Result<Self> {
        let dims = |v: usize| u32::try_from(v).map_err(|_| Error::Config(format!("grid size {v} too large")));
        inner.write_all(MAGIC)?;
        inner.write_all(&dims(nx)?.to_le_bytes())?;
        inner.write_all(&dims(ny)?.to_le_bytes())?;
        Ok(SnapshotWriter { inner, frame_len: nx * ny })
    }

    pub fn write_frame(&mut self, field: &[f64]) -> Result<()> {
        if field.len() != self.frame_len {
            return Err(Error::Config(format!("frame has {} values, expected {}", field.len(), self.frame_len)));
        }
        for v in field {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub fn read_snapshots(mut reader: impl Read) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let mut header = [0u8; 16];
    reader.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::Config("not a pressure snapshot file".into()));
    }
    let nx = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let ny = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    let frame_bytes = nx * ny * 8;
    if frame_bytes == 0 || body.len() % frame_bytes != 0 {
        return Err(Error::Config("truncated snapshot frame".into()));
    }
    let frames = body
        .chunks_exact(frame_bytes)
        .map(|c| c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
        .collect();
    Ok((nx, ny, frames))
}
