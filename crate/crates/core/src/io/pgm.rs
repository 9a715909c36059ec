use crate::error::{Error, Result};
use crate::metrics::SaliencyMap;
use std::path::Path;

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("GrayImage::new", "empty image"));
        }
        crate::error::ensure_dim(
            "GrayImage::new",
            "pixel count",
            width * height,
            pixels.len(),
        )?;
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Values `v/255`.
    pub fn to_map(&self) -> SaliencyMap {
        let values = self.pixels.iter().map(|&v| f64::from(v) / 255.0).collect();
        SaliencyMap::new(self.width, self.height, values).expect("8-bit values lie in [0, 1]")
    }

    /// `round(255·v)` per pixel.
    pub fn from_map(map: &SaliencyMap) -> Self {
        GrayImage {
            width: map.width(),
            height: map.height(),
            pixels: map.quantize(),
        }
    }
}

fn pgm_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Pgm {
        offset,
        msg: msg.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    /// Skips whitespace and `#` comments running to the end of the line.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && !matches!(self.bytes[self.pos], b'\n' | b'\r')
                {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(start) {
                Some(&b) => pgm_err(start, format!("expected {what}, found byte {b:#04x}")),
                None => pgm_err(start, format!("unexpected end of header, expected {what}")),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ASCII digits")
            .parse()
            .map_err(|_| pgm_err(start, format!("{what} out of range")))
    }
}

/// Parses a binary (`P5`) PGM with maxval 255. Bytes after the payload are
/// ignored.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(pgm_err(0, "bad magic, expected `P5`"));
    }
    let mut h = Header { bytes, pos: 2 };
    if !bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(pgm_err(2, "expected whitespace after magic"));
    }
    let width_at = h.pos;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = {
        h.skip_space();
        h.pos
    };
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(pgm_err(
            width_at,
            format!("zero-sized image {width}x{height}"),
        ));
    }
    if maxval != 255 {
        return Err(pgm_err(
            maxval_at,
            format!("unsupported maxval {maxval}, expected 255"),
        ));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        Some(_) => {
            return Err(pgm_err(
                h.pos,
                "expected a single whitespace byte before the payload",
            ))
        }
        None => return Err(pgm_err(h.pos, "truncated header")),
    }
    let len = width
        .checked_mul(height)
        .ok_or_else(|| pgm_err(width_at, "image dimensions overflow"))?;
    let payload = &bytes[h.pos..];
    if payload.len() < len {
        return Err(pgm_err(
            bytes.len(),
            format!("truncated payload: {} of {len} bytes", payload.len()),
        ));
    }
    GrayImage::new(width, height, payload[..len].to_vec())
}

pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pgm_file(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path)?;
    read_pgm(&bytes).map_err(|e| match e {
        Error::Pgm { offset, msg } => Error::Pgm {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

pub fn write_pgm_file(path: &Path, img: &GrayImage) -> Result<()> {
    std::fs::write(path, write_pgm(img))?;
    Ok(())
}
