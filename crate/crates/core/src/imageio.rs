//! Grayscale image files: binary/ASCII PGM and PNG.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Decoded grayscale raster with its full-scale value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub data: Vec<u32>,
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// Reads a PGM (P2 or P5) or grayscale PNG, choosing the decoder by content.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_gray(&bytes).map_err(|m| Error::format(path, m))
}

pub fn decode_gray(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(bytes)
    } else {
        Err("not a PGM (P2/P5) or PNG file".into())
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<u32, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("malformed PGM {what}"))
    }
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let binary = bytes[1] == b'5';
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.number("width")? as usize;
    let height = rd.number("height")? as usize;
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("image has zero size".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range 1..=65535"));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| "image dimensions overflow".to_string())?;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = rd.pos + 1;
        let bpp = if maxval > 255 { 2 } else { 1 };
        let raster = bytes
            .get(start..start + n * bpp)
            .ok_or_else(|| "truncated PGM raster".to_string())?;
        if bpp == 1 {
            data.extend(raster.iter().map(|&b| b as u32));
        } else {
            data.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32),
            );
        }
    } else {
        for _ in 0..n {
            data.push(rd.number("sample")?);
        }
    }
    if let Some(v) = data.iter().find(|&&v| v > maxval) {
        return Err(format!("sample {v} exceeds maxval {maxval}"));
    }
    Ok(GrayImage {
        width,
        height,
        maxval,
        data,
    })
}

fn decode_png(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| "PNG too large".to_string())?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err("image has zero size".into());
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => return Err(format!("expected a grayscale PNG, found {other:?}")),
    };
    let buf = &buf[..info.buffer_size()];
    let (maxval, data) = match info.bit_depth {
        png::BitDepth::Sixteen => (
            65535,
            buf.chunks_exact(2 * channels)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
                .collect::<Vec<_>>(),
        ),
        _ => (
            255,
            buf.chunks_exact(channels).map(|c| c[0] as u32).collect(),
        ),
    };
    Ok(GrayImage {
        width,
        height,
        maxval,
        data,
    })
}

/// Encodes a 16-bit binary PGM (P5, big-endian samples).
pub fn encode_pgm16(width: usize, height: usize, maxval: u16, data: &[u16]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "raster size mismatch");
    let maxval = maxval.max(256);
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    out.reserve(data.len() * 2);
    for v in data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Encodes an 8-bit binary PGM (P5).
pub fn encode_pgm8(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "raster size mismatch");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(bytes)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes an 8-bit grayscale PNG.
pub fn write_png8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => Error::io(path, e),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}
