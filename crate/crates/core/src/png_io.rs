//! 8- and 16-bit PNG input and output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Image, Plane};

fn encode(path: &Path, width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let fail = |e: png::EncodingError| Error::Container(format!("{}: {e}", path.display()));
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(data).map_err(fail)?;
    writer.finish().map_err(fail)
}

pub fn write_gray8(path: impl AsRef<Path>, plane: &Plane<u8>) -> Result<()> {
    encode(path.as_ref(), plane.width, plane.height, png::ColorType::Grayscale, png::BitDepth::Eight, &plane.data)
}

pub fn write_gray16(path: impl AsRef<Path>, plane: &Plane<u16>) -> Result<()> {
    let bytes: Vec<u8> = plane.data.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(path.as_ref(), plane.width, plane.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Plane<bool>) -> Result<()> {
    write_gray8(path, &mask.map(|&m| if m { 255 } else { 0 }))
}

#[inline]
pub fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1-, 3- or 4-channel image with values in [0, 1] as 8-bit.
pub fn write_image8(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(Error::Shape(format!("cannot write {c}-channel PNG"))),
    };
    let bytes: Vec<u8> = image.data.iter().map(|&v| quantize8(v)).collect();
    encode(path.as_ref(), image.width, image.height, color, png::BitDepth::Eight, &bytes)
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    sixteen: bool,
    bytes: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND);
    let fail = |e: png::DecodingError| Error::Container(format!("{}: {e}", path.display()));
    let mut reader = dec.read_info().map_err(fail)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Container(format!("{}: image too large", path.display())))?;
    let mut bytes = vec![0u8; size];
    let info = reader.next_frame(&mut bytes).map_err(fail)?;
    bytes.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => 3,
    };
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        sixteen: info.bit_depth == png::BitDepth::Sixteen,
        bytes,
    })
}

pub fn read_gray8(path: impl AsRef<Path>) -> Result<Plane<u8>> {
    let path = path.as_ref();
    let d = decode(path)?;
    if d.channels != 1 || d.sixteen {
        return Err(Error::Container(format!("{}: expected 8-bit grayscale", path.display())));
    }
    Plane::from_vec(d.width, d.height, d.bytes)
}

pub fn read_gray16(path: impl AsRef<Path>) -> Result<Plane<u16>> {
    let path = path.as_ref();
    let d = decode(path)?;
    if d.channels != 1 || !d.sixteen {
        return Err(Error::Container(format!("{}: expected 16-bit grayscale", path.display())));
    }
    let data = d.bytes.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Plane::from_vec(d.width, d.height, data)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Plane<bool>> {
    Ok(read_gray8(path)?.map(|&v| v >= 128))
}

/// Reads any PNG as floats in [0, 1], keeping its channel count.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let d = decode(path.as_ref())?;
    let data = if d.sixteen {
        d.bytes
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0)
            .collect()
    } else {
        d.bytes.iter().map(|&v| v as f32 / 255.0).collect()
    };
    Image::from_vec(d.width, d.height, d.channels, data)
}
