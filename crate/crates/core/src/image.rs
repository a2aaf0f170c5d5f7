//! Raster images shared by every stage of the pipeline.
//!
//! An [`ImageBuffer`] stores row-major, channel-interleaved values in one of
//! two domains: raw 8-bit samples as read from disk, or unit-interval reals
//! produced by [`ImageBuffer::normalize`]. Geometric operations are pure index
//! maps and work identically on both domains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueDomain {
    /// Integers in `0..=255`.
    Byte,
    /// Reals in `[0.0, 1.0]`.
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
enum Pixels {
    Byte(Vec<u8>),
    Unit(Vec<f64>),
}

impl Pixels {
    fn len(&self) -> usize {
        match self {
            Pixels::Byte(v) => v.len(),
            Pixels::Unit(v) => v.len(),
        }
    }
}

/// An `height × width × channels` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Pixels,
}

/// An image paired with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: ImageBuffer,
    pub label: usize,
}

fn check_dims(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "image dimensions must be positive, got {height}x{width}"
        )));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::invalid(format!(
            "channel count must be 1 or 3, got {channels}"
        )));
    }
    if len != height * width * channels {
        return Err(Error::invalid(format!(
            "expected {} values for a {height}x{width}x{channels} image, got {len}",
            height * width * channels
        )));
    }
    Ok(())
}

impl ImageBuffer {
    pub fn from_bytes(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width, channels, data.len())?;
        Ok(Self {
            height,
            width,
            channels,
            pixels: Pixels::Byte(data),
        })
    }

    pub fn from_unit(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, channels, data.len())?;
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!(
                "unit-domain value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels: Pixels::Unit(data),
        })
    }

    /// Single-channel byte image from nested rows; handy for small fixtures.
    pub fn gray_from_rows(rows: &[&[u8]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_bytes(height, width, 1, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn domain(&self) -> ValueDomain {
        match self.pixels {
            Pixels::Byte(_) => ValueDomain::Byte,
            Pixels::Unit(_) => ValueDomain::Unit,
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.len() == 0
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match &self.pixels {
            Pixels::Byte(v) => Some(v),
            Pixels::Unit(_) => None,
        }
    }

    pub fn as_unit(&self) -> Option<&[f64]> {
        match &self.pixels {
            Pixels::Unit(v) => Some(v),
            Pixels::Byte(_) => None,
        }
    }

    /// Value at `(row, col, channel)` widened to `f64` (bytes are not rescaled).
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        let i = (row * self.width + col) * self.channels + channel;
        match &self.pixels {
            Pixels::Byte(v) => f64::from(v[i]),
            Pixels::Unit(v) => v[i],
        }
    }

    /// All values widened to `f64`, in storage order.
    pub fn values(&self) -> Vec<f64> {
        match &self.pixels {
            Pixels::Byte(v) => v.iter().map(|&b| f64::from(b)).collect(),
            Pixels::Unit(v) => v.clone(),
        }
    }

    /// Builds an `out_h × out_w` image whose pixel `(r, c)` is copied from the
    /// source pixel returned by `source(r, c)`. The map must stay in bounds.
    pub(crate) fn remap<F>(&self, out_h: usize, out_w: usize, source: F) -> ImageBuffer
    where
        F: Fn(usize, usize) -> (usize, usize),
    {
        let ch = self.channels;
        let mut index = Vec::with_capacity(out_h * out_w);
        for r in 0..out_h {
            for c in 0..out_w {
                let (sr, sc) = source(r, c);
                debug_assert!(sr < self.height && sc < self.width);
                index.push((sr * self.width + sc) * ch);
            }
        }
        fn gather<T: Copy>(src: &[T], index: &[usize], ch: usize) -> Vec<T> {
            let mut out = Vec::with_capacity(index.len() * ch);
            for &base in index {
                out.extend_from_slice(&src[base..base + ch]);
            }
            out
        }
        let pixels = match &self.pixels {
            Pixels::Byte(v) => Pixels::Byte(gather(v, &index, ch)),
            Pixels::Unit(v) => Pixels::Unit(gather(v, &index, ch)),
        };
        ImageBuffer {
            height: out_h,
            width: out_w,
            channels: ch,
            pixels,
        }
    }

    /// Nearest-neighbour resize using the floor convention
    /// `src = ⌊dst · in / out⌋` on each axis.
    pub fn resize_nearest(&self, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid(format!(
                "resize target must be positive, got {out_h}x{out_w}"
            )));
        }
        let (in_h, in_w) = (self.height, self.width);
        Ok(self.remap(out_h, out_w, |r, c| (r * in_h / out_h, c * in_w / out_w)))
    }

    /// Divides every byte value by 255, producing a unit-domain image.
    pub fn normalize(&self) -> Result<ImageBuffer> {
        match &self.pixels {
            Pixels::Byte(v) => Ok(ImageBuffer {
                height: self.height,
                width: self.width,
                channels: self.channels,
                pixels: Pixels::Unit(v.iter().map(|&b| f64::from(b) / 255.0).collect()),
            }),
            Pixels::Unit(_) => Err(Error::InvalidState("image is already normalized".into())),
        }
    }

    /// Inverse of [`normalize`](Self::normalize): scales by 255 and rounds.
    /// Byte images are returned unchanged.
    pub fn to_bytes(&self) -> ImageBuffer {
        match &self.pixels {
            Pixels::Byte(_) => self.clone(),
            Pixels::Unit(v) => ImageBuffer {
                height: self.height,
                width: self.width,
                channels: self.channels,
                pixels: Pixels::Byte(v.iter().map(|&x| (x * 255.0).round() as u8).collect()),
            },
        }
    }
}
