//! Portable float map (PFM) reader and writer.
//!
//! Header: `PF` (RGB) or `Pf` (grayscale), `width height`, then a scale whose
//! sign gives the byte order (negative = little-endian). Rows follow from the
//! bottom of the image to the top as 32-bit floats.

use nalgebra::Vector3;
use std::path::Path;

use crate::grid::{Grid, Image};
use crate::{Error, Result};

/// Decoded PFM data; `data` is row-major from the top row, channels
/// interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Pfm {
    pub fn gray(image: &Image) -> Self {
        Pfm {
            width: image.width(),
            height: image.height(),
            channels: 1,
            data: image.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn rgb(image: &Grid<Vector3<f64>>) -> Self {
        Pfm {
            width: image.width(),
            height: image.height(),
            channels: 3,
            data: image.iter().flat_map(|v| [v.x as f32, v.y as f32, v.z as f32]).collect(),
        }
    }

    pub fn to_image(&self) -> Result<Image> {
        if self.channels != 1 {
            return Err(Error::Pfm(format!("expected a 1-channel map, found {} channels", self.channels)));
        }
        Grid::from_vec(self.width, self.height, self.data.iter().map(|&v| v as f64).collect())
    }

    pub fn to_vectors(&self) -> Result<Grid<Vector3<f64>>> {
        if self.channels != 3 {
            return Err(Error::Pfm(format!("expected a 3-channel map, found {} channel", self.channels)));
        }
        let v = self
            .data
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
            .collect();
        Grid::from_vec(self.width, self.height, v)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn token(&mut self, what: &str) -> Result<&'a str> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Pfm(format!("missing {what} in header")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Pfm(format!("non-ASCII {what} in header")))
    }
}

const MAX_DIM: usize = 1 << 16;

/// Decode PFM bytes.
pub fn parse_pfm(bytes: &[u8]) -> Result<Pfm> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token("magic")?;
    let channels = match magic {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Pfm(format!("bad magic '{other}', expected PF or Pf"))),
    };
    let dim = |tok: &str, what: &str| -> Result<usize> {
        match tok.parse::<usize>() {
            Ok(v) if v > 0 && v <= MAX_DIM => Ok(v),
            _ => Err(Error::Pfm(format!("bad {what} '{tok}'"))),
        }
    };
    let width = dim(cur.token("width")?, "width")?;
    let height = dim(cur.token("height")?, "height")?;
    let scale_tok = cur.token("scale")?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::Pfm(format!("bad scale '{scale_tok}'")))?;
    let little = scale < 0.0;
    // Exactly one whitespace byte separates the header from the payload.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::Pfm("truncated payload: no data after header".into()));
    }
    let payload = &bytes[cur.pos + 1..];
    let row_len = width * channels;
    let need = row_len
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Pfm("image size overflows".into()))?;
    if payload.len() < need {
        return Err(Error::Pfm(format!(
            "truncated payload: {} bytes, expected {need}",
            payload.len()
        )));
    }
    let mut data = vec![0.0f32; row_len * height];
    for (file_row, chunk) in payload[..need].chunks_exact(row_len * 4).enumerate() {
        let row = height - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            data[row * row_len + i] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    Ok(Pfm {
        width,
        height,
        channels,
        data,
    })
}

/// Encode as little-endian PFM.
pub fn encode_pfm(pfm: &Pfm) -> Result<Vec<u8>> {
    if !matches!(pfm.channels, 1 | 3) || pfm.data.len() != pfm.width * pfm.height * pfm.channels {
        return Err(Error::Pfm("inconsistent image buffer".into()));
    }
    if let Some(v) = pfm.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Pfm(format!("non-finite pixel value {v}")));
    }
    let magic = if pfm.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", pfm.width, pfm.height).into_bytes();
    out.reserve(pfm.data.len() * 4);
    let row_len = pfm.width * pfm.channels;
    for row in (0..pfm.height).rev() {
        for v in &pfm.data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Pfm> {
    parse_pfm(&std::fs::read(path)?)
}

pub fn write_pfm(pfm: &Pfm, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pfm(pfm)?)?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    read_pfm(path)?.to_image()
}

pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_pfm(&Pfm::gray(image), path)
}
