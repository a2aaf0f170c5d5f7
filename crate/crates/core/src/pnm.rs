//! Binary PGM (`P5`) and PPM (`P6`) reading and writing, maxval 255 only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Encodes an image as `P5` (1 channel) or `P6` (3 channels).
/// Unit-domain images are scaled back to bytes first.
pub fn encode(img: &ImageBuffer) -> Vec<u8> {
    let bytes = img.to_bytes();
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(bytes.as_bytes().expect("byte domain"));
    out
}

pub fn decode(buf: &[u8]) -> Result<ImageBuffer> {
    let mut pos = 0;
    let magic = next_token(buf, &mut pos)?;
    let channels = match magic.as_slice() {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::invalid(format!(
                "unsupported magic {:?}, expected P5 or P6",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = parse_usize(&next_token(buf, &mut pos)?, "width")?;
    let height = parse_usize(&next_token(buf, &mut pos)?, "height")?;
    let maxval = parse_usize(&next_token(buf, &mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::invalid(format!("maxval must be 255, got {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= buf.len() || !buf[pos].is_ascii_whitespace() {
        return Err(Error::invalid("missing whitespace after header"));
    }
    pos += 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::invalid("image dimensions overflow"))?;
    let raster = &buf[pos..];
    if raster.len() < expected {
        return Err(Error::invalid(format!(
            "truncated raster: expected {expected} bytes, found {}",
            raster.len()
        )));
    }
    ImageBuffer::from_bytes(height, width, channels, raster[..expected].to_vec())
}

pub fn read(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::InvalidArgument(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}

/// Conventional extension for an image with this channel count.
pub fn extension(img: &ImageBuffer) -> &'static str {
    if img.channels() == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

fn next_token(buf: &[u8], pos: &mut usize) -> Result<Vec<u8>> {
    loop {
        while *pos < buf.len() && buf[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < buf.len() && buf[*pos] == b'#' {
            while *pos < buf.len() && buf[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < buf.len() && !buf[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::invalid("unexpected end of header"));
    }
    Ok(buf[start..*pos].to_vec())
}

fn parse_usize(tok: &[u8], what: &str) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::invalid(format!("bad {what} field {:?}", String::from_utf8_lossy(tok))))
}
