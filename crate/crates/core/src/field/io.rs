//! Image files (PNG, binary PGM/PPM) and the raw little-endian array formats.
//!
//! Raw real arrays: `"DFLD"`, then `u32` height, width, channels (little-endian),
//! then `f32` values in channel-planar order. Complex arrays use magic `"CFLD"`
//! and interleave `(re, im)` as `f32` pairs.

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::Path;

use num_complex::Complex;

use super::{ComplexField, ImageField, Shape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const REAL_MAGIC: &[u8; 4] = b"DFLD";
pub const COMPLEX_MAGIC: &[u8; 4] = b"CFLD";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Pgm,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("png") => Ok(Self::Png),
            Some("pgm") => Ok(Self::Pgm),
            Some("ppm") => Ok(Self::Ppm),
            _ => Err(Error::Format(format!(
                "unsupported image extension: {}",
                path.display()
            ))),
        }
    }
}

fn to_byte<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64();
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round() as u8
}

fn interleave<T: Scalar>(field: &ImageField<T>) -> Vec<u8> {
    let s = field.shape();
    let mut out = Vec::with_capacity(s.len());
    for i in 0..s.plane() {
        for c in 0..s.channels {
            out.push(to_byte(field.channel(c)[i]));
        }
    }
    out
}

fn deinterleave<T: Scalar>(bytes: &[u8], shape: Shape) -> Result<ImageField<T>> {
    if bytes.len() < shape.len() {
        return Err(Error::Format("pixel data truncated".into()));
    }
    let plane = shape.plane();
    let mut data = vec![T::zero(); shape.len()];
    for i in 0..plane {
        for c in 0..shape.channels {
            data[c * plane + i] = T::lit(bytes[i * shape.channels + c] as f64 / 255.0);
        }
    }
    ImageField::from_vec(shape, data)
}

/// Writes an 8-bit image; values are clamped to `[0, 1]` and scaled to `0..=255`.
pub fn write_image<T: Scalar>(field: &ImageField<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path)?;
    let bytes = encode_image(field, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_image<T: Scalar>(field: &ImageField<T>, format: ImageFormat) -> Result<Vec<u8>> {
    let s = field.shape();
    if s.channels != 1 && s.channels != 3 {
        return Err(Error::Format(format!(
            "images must have 1 or 3 channels, got {}",
            s.channels
        )));
    }
    let pixels = interleave(field);
    match format {
        ImageFormat::Png => {
            let mut buf = Vec::new();
            {
                let mut enc = png::Encoder::new(&mut buf, s.width as u32, s.height as u32);
                enc.set_color(if s.channels == 1 {
                    png::ColorType::Grayscale
                } else {
                    png::ColorType::Rgb
                });
                enc.set_depth(png::BitDepth::Eight);
                let mut w = enc
                    .write_header()
                    .map_err(|e| Error::Format(format!("png encode: {e}")))?;
                w.write_image_data(&pixels)
                    .map_err(|e| Error::Format(format!("png encode: {e}")))?;
            }
            Ok(buf)
        }
        ImageFormat::Pgm | ImageFormat::Ppm => {
            let (magic, want) = if format == ImageFormat::Pgm {
                ("P5", 1)
            } else {
                ("P6", 3)
            };
            if s.channels != want {
                return Err(Error::Format(format!(
                    "{magic} requires {want} channel(s), got {}",
                    s.channels
                )));
            }
            let mut buf = format!("{magic}\n{} {}\n255\n", s.width, s.height).into_bytes();
            buf.extend_from_slice(&pixels);
            Ok(buf)
        }
    }
}

/// Reads PNG or binary PGM/PPM, detected from the file contents.
pub fn read_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageField<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image<T: Scalar>(bytes: &[u8]) -> Result<ImageField<T>> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(Error::Format("unrecognized image header".into()))
    }
}

fn decode_png<T: Scalar>(bytes: &[u8]) -> Result<ImageField<T>> {
    let bad = |e: png::DecodingError| Error::Format(format!("png decode: {e}"));
    let mut dec = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "only 8-bit png is supported, got {:?}",
            info.bit_depth
        )));
    }
    let (stored, kept) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(Error::Format(format!("unsupported png color {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(w * h * kept);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * stored].chunks(stored) {
            pixels.extend_from_slice(&px[..kept]);
        }
    }
    deinterleave(&pixels, Shape::new(h, w, kept))
}

fn decode_pnm<T: Scalar>(bytes: &[u8]) -> Result<ImageField<T>> {
    let channels = if &bytes[..2] == b"P5" { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated pnm header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("corrupt pnm header".into()))?;
    }
    // single whitespace byte separates header from raster
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported pnm maxval {maxval}")));
    }
    deinterleave(
        bytes.get(pos..).unwrap_or_default(),
        Shape::new(h, w, channels),
    )
}

fn header(magic: &[u8; 4], shape: Shape) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(magic);
    for v in [shape.height, shape.width, shape.channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out
}

fn parse_header(bytes: &[u8], magic: &[u8; 4]) -> Result<Shape> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("raw array header truncated".into()));
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    Ok(Shape::new(word(4), word(8), word(12)))
}

pub fn encode_raw<T: Scalar>(field: &ImageField<T>) -> Vec<u8> {
    let mut out = header(REAL_MAGIC, field.shape());
    out.reserve(field.len() * 4);
    for v in field.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

/// Decodes one real array record from the front of `bytes`, returning the
/// field and the number of bytes consumed.
pub fn decode_raw<T: Scalar>(bytes: &[u8]) -> Result<(ImageField<T>, usize)> {
    let shape = parse_header(bytes, REAL_MAGIC)?;
    let end = HEADER_LEN + shape.len() * 4;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "raw array {shape} truncated: {} of {end} bytes",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Ok((ImageField::from_vec(shape, data)?, end))
}

pub fn encode_raw_complex<T: Scalar>(field: &ComplexField<T>) -> Vec<u8> {
    let mut out = header(COMPLEX_MAGIC, field.shape());
    out.reserve(field.len() * 8);
    for z in field.data() {
        out.extend_from_slice(&(z.re.as_f64() as f32).to_le_bytes());
        out.extend_from_slice(&(z.im.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw_complex<T: Scalar>(bytes: &[u8]) -> Result<(ComplexField<T>, usize)> {
    let shape = parse_header(bytes, COMPLEX_MAGIC)?;
    let end = HEADER_LEN + shape.len() * 8;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "complex array {shape} truncated: {} of {end} bytes",
            bytes.len()
        )));
    }
    let f = |c: &[u8]| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let data = bytes[HEADER_LEN..end]
        .chunks_exact(8)
        .map(|c| Complex::new(f(&c[..4]), f(&c[4..])))
        .collect();
    Ok((ComplexField::from_vec(shape, data)?, end))
}

pub fn write_raw<T: Scalar>(field: &ImageField<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_raw(field)).map_err(|e| Error::io(path, e))
}

pub fn read_raw<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageField<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes).map(|(f, _)| f)
}

pub fn write_raw_complex<T: Scalar>(field: &ComplexField<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_raw_complex(field)).map_err(|e| Error::io(path, e))
}

pub fn read_raw_complex<T: Scalar>(path: impl AsRef<Path>) -> Result<ComplexField<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw_complex(&bytes).map(|(f, _)| f)
}
