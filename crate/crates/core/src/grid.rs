//! Row-major pixel containers.

use crate::error::{Error, Result};

/// Single-channel H×W grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Plane<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "plane {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn map<U, F: Fn(&T) -> U>(&self, f: F) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Plane<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl Plane<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// 8-bit rendering, 255 where set.
    pub fn to_u8(&self) -> Plane<u8> {
        self.map(|&b| if b { 255 } else { 0 })
    }
}

/// Interleaved H×W×C float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "image {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn<F: Fn(usize, usize, usize) -> f32>(
        width: usize,
        height: usize,
        channels: usize,
        f: F,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single-channel image from a float plane.
    pub fn from_plane(plane: &Plane<f32>) -> Self {
        Self {
            width: plane.width,
            height: plane.height,
            channels: 1,
            data: plane.data.clone(),
        }
    }

    /// Bilinear sample at continuous index coordinates (pixel `x` has its
    /// center at `x`), clamping to the border.
    pub fn sample_bilinear(&self, fx: f64, fy: f64, out: &mut [f32]) {
        let (x0, x1, wx) = bilinear_taps(fx, self.width);
        let (y0, y1, wy) = bilinear_taps(fy, self.height);
        let c = self.channels;
        let p00 = self.pixel(x0, y0);
        let p10 = self.pixel(x1, y0);
        let p01 = self.pixel(x0, y1);
        let p11 = self.pixel(x1, y1);
        for k in 0..c {
            let top = p00[k] as f64 * (1.0 - wx) + p10[k] as f64 * wx;
            let bottom = p01[k] as f64 * (1.0 - wx) + p11[k] as f64 * wx;
            out[k] = (top * (1.0 - wy) + bottom * wy) as f32;
        }
    }
}

/// Left/right taps and the right-hand weight for a clamped bilinear lookup.
#[inline]
pub(crate) fn bilinear_taps(f: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let f = f.clamp(0.0, max);
    let i0 = f.floor();
    let w = f - i0;
    let i0 = i0 as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, w)
}
