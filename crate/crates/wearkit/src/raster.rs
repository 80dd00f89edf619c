//! Image representation and pixel-level operations.
//!
//! A [`Raster`] is a row-major, channel-interleaved 2-D image holding either
//! 8-bit samples in `[0, 255]` or float samples in `[0, 1]`. File I/O is
//! limited to binary netpbm (`P5` grayscale, `P6` RGB) with maxval 255, which
//! keeps round trips bit-exact. [`Tensor3`] is the planar float container
//! handed to the convolutional feature extractor.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::synthgen::SegMap;

/// Per-channel mean used to condition network inputs (applied to [0,1] values).
pub const NORM_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
/// Per-channel standard deviation used to condition network inputs.
pub const NORM_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Sample storage of a [`Raster`]: 8-bit in `[0,255]` or float in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// Row-major, channel-interleaved image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    samples: Samples,
}

impl Raster {
    pub fn from_u8(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        Self::check_dims(width, height, channels, data.len())?;
        Ok(Raster {
            width,
            height,
            channels,
            samples: Samples::U8(data),
        })
    }

    pub fn from_f32(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::check_dims(width, height, channels, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidData(format!(
                "float raster sample {v} outside [0,1]"
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            samples: Samples::F32(data),
        })
    }

    fn check_dims(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidData(format!(
                "raster dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidData(format!(
                "raster must have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = width * height * channels;
        if len != expected {
            return Err(Error::ShapeMismatch(format!(
                "raster data length {len} != {width}x{height}x{channels} = {expected}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.samples {
            Samples::U8(d) => Some(d),
            Samples::F32(_) => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.samples {
            Samples::F32(d) => Some(d),
            Samples::U8(_) => None,
        }
    }

    /// Sample at `(x, y, c)` as a float in the raster's native scale
    /// (`[0,255]` for 8-bit storage, `[0,1]` for float storage).
    pub fn sample(&self, x: usize, y: usize, c: usize) -> f32 {
        let i = (y * self.width + x) * self.channels + c;
        match &self.samples {
            Samples::U8(d) => d[i] as f32,
            Samples::F32(d) => d[i],
        }
    }
}

/// Planar float tensor (channel, then row, then column): the activation
/// container between network layers. Index: `c * h * w + y * w + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "tensor data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("tensor contains non-finite values".into()));
        }
        Ok(Tensor3 {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Tensor3 {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[c * self.height * self.width + y * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Geometric augmentation operations applied identically to an image and
/// its ground-truth map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentOp {
    FlipH,
    FlipV,
    /// Quarter-turn clockwise; swaps width and height.
    Rot90,
    /// Shift by (dx, dy); vacated pixels are filled with 0 (background).
    Translate { dx: i32, dy: i32 },
}

// ---------------------------------------------------------------------------
// netpbm I/O
// ---------------------------------------------------------------------------

/// Reads a binary PGM (`P5`, 1 channel) or PPM (`P6`, 3 channels) file.
/// 8-bit values are preserved exactly.
pub fn read_image(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io_path(path, "read", e))?;
    let (width, height, channels, payload) = parse_pnm(path, &bytes)?;
    Raster::from_u8(width, height, channels, payload.to_vec())
}

fn parse_pnm<'a>(path: &Path, bytes: &'a [u8]) -> Result<(usize, usize, usize, &'a [u8])> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| Error::MalformedHeader {
        path: path.into(),
        detail: "empty file".into(),
    })?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::BadMagic {
                path: path.into(),
                found: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };
    let mut field = |name: &str| -> Result<u64> {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| Error::MalformedHeader {
            path: path.into(),
            detail: format!("missing {name}"),
        })?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader {
                path: path.into(),
                detail: format!("non-numeric {name} {:?}", String::from_utf8_lossy(tok)),
            })
    };
    let width = field("width")? as usize;
    let height = field("height")? as usize;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader {
            path: path.into(),
            detail: format!("zero dimension {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval {
            path: path.into(),
            maxval,
        });
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader {
            path: path.into(),
            detail: "missing separator before pixel data".into(),
        });
    }
    pos += 1;
    let expected = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: payload.len(),
        });
    }
    Ok((width, height, channels, &payload[..expected]))
}

/// Returns the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(&bytes[start..*pos])
}

/// Writes `r` as binary PGM/PPM with maxval 255. Float samples are
/// quantized by `round(v * 255)` clamped to `[0, 255]`.
pub fn write_image(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(r);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io_path(path, "create", e))?;
    f.write_all(&bytes)
        .map_err(|e| Error::io_path(path, "write", e))?;
    Ok(())
}

pub(crate) fn encode_image(r: &Raster) -> Vec<u8> {
    let magic = if r.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width, r.height).into_bytes();
    match &r.samples {
        Samples::U8(d) => out.extend_from_slice(d),
        Samples::F32(d) => out.extend(d.iter().map(|&v| quantize(v))),
    }
    out
}

pub(crate) fn quantize(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

// ---------------------------------------------------------------------------
// Resize
// ---------------------------------------------------------------------------

/// Bilinear resize with the half-pixel mapping
/// `src = (dst + 0.5) * scale - 0.5`, clamped to the image bounds.
/// The sample form (8-bit or float) is preserved; 8-bit outputs are rounded.
pub fn resize_bilinear(r: &Raster, new_w: usize, new_h: usize) -> Result<Raster> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::InvalidData(format!(
            "resize target must be at least 1x1, got {new_w}x{new_h}"
        )));
    }
    let c = r.channels;
    let scale_x = r.width as f64 / new_w as f64;
    let scale_y = r.height as f64 / new_h as f64;
    let mut values = vec![0f32; new_w * new_h * c];
    for dy in 0..new_h {
        let sy = ((dy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (r.height - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(r.height - 1);
        let fy = (sy - y0 as f64) as f32;
        for dx in 0..new_w {
            let sx = ((dx as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (r.width - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(r.width - 1);
            let fx = (sx - x0 as f64) as f32;
            for ch in 0..c {
                let p00 = r.sample(x0, y0, ch);
                let p10 = r.sample(x1, y0, ch);
                let p01 = r.sample(x0, y1, ch);
                let p11 = r.sample(x1, y1, ch);
                let top = p00 + fx * (p10 - p00);
                let bot = p01 + fx * (p11 - p01);
                let v = top + fy * (bot - top);
                // Guard against rounding drift past the corner extrema.
                let lo = p00.min(p10).min(p01).min(p11);
                let hi = p00.max(p10).max(p01).max(p11);
                values[(dy * new_w + dx) * c + ch] = v.clamp(lo, hi);
            }
        }
    }
    match &r.samples {
        Samples::U8(_) => Raster::from_u8(
            new_w,
            new_h,
            c,
            values.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect(),
        ),
        Samples::F32(_) => Raster::from_f32(new_w, new_h, c, values),
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Converts a raster into the 3-channel planar float tensor expected by the
/// feature extractor: samples are scaled to `[0,1]`, grayscale input is
/// replicated to 3 channels, then each channel is transformed by
/// `(v - mean_c) / std_c`.
pub fn normalize(r: &Raster) -> Tensor3 {
    let (w, h) = (r.width, r.height);
    let hw = w * h;
    let mut data = vec![0f32; hw * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let src_c = if r.channels == 1 { 0 } else { c };
                let v = match &r.samples {
                    Samples::U8(_) => r.sample(x, y, src_c) / 255.0,
                    Samples::F32(_) => r.sample(x, y, src_c),
                };
                data[c * hw + y * w + x] = (v - NORM_MEAN[c]) / NORM_STD[c];
            }
        }
    }
    Tensor3 {
        height: h,
        width: w,
        channels: 3,
        data,
    }
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Applies the same geometric transform to an image and, when present, its
/// ground-truth map. Vacated pixels under translation become value 0
/// (class background for maps).
pub fn augment(r: &Raster, m: Option<&SegMap>, op: AugmentOp) -> Result<(Raster, Option<SegMap>)> {
    if let Some(m) = m {
        if m.width() != r.width || m.height() != r.height {
            return Err(Error::ShapeMismatch(format!(
                "segmap {}x{} does not match raster {}x{}",
                m.width(),
                m.height(),
                r.width,
                r.height
            )));
        }
    }
    let (w, h) = (r.width, r.height);
    let (out_w, out_h) = match op {
        AugmentOp::Rot90 => (h, w),
        _ => (w, h),
    };
    // For each output pixel, the source pixel it reads from (None => fill 0).
    let source = |x: usize, y: usize| -> Option<(usize, usize)> {
        match op {
            AugmentOp::FlipH => Some((w - 1 - x, y)),
            AugmentOp::FlipV => Some((x, h - 1 - y)),
            // Clockwise: output (x, y) <- input (y, h_in - 1 - x) with
            // h_in = w_out, so the inverse map below uses the input dims.
            AugmentOp::Rot90 => Some((y, h - 1 - x)),
            AugmentOp::Translate { dx, dy } => {
                let sx = x as i64 - dx as i64;
                let sy = y as i64 - dy as i64;
                if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    Some((sx as usize, sy as usize))
                } else {
                    None
                }
            }
        }
    };
    let c = r.channels;
    let raster = match &r.samples {
        Samples::U8(d) => {
            let mut out = vec![0u8; out_w * out_h * c];
            for y in 0..out_h {
                for x in 0..out_w {
                    if let Some((sx, sy)) = source(x, y) {
                        for ch in 0..c {
                            out[(y * out_w + x) * c + ch] = d[(sy * w + sx) * c + ch];
                        }
                    }
                }
            }
            Raster::from_u8(out_w, out_h, c, out)?
        }
        Samples::F32(d) => {
            let mut out = vec![0f32; out_w * out_h * c];
            for y in 0..out_h {
                for x in 0..out_w {
                    if let Some((sx, sy)) = source(x, y) {
                        for ch in 0..c {
                            out[(y * out_w + x) * c + ch] = d[(sy * w + sx) * c + ch];
                        }
                    }
                }
            }
            Raster::from_f32(out_w, out_h, c, out)?
        }
    };
    let map = match m {
        Some(m) => {
            let mut out = vec![0u8; out_w * out_h];
            for y in 0..out_h {
                for x in 0..out_w {
                    if let Some((sx, sy)) = source(x, y) {
                        out[y * out_w + x] = m.class_at(sx, sy);
                    }
                }
            }
            Some(SegMap::new(out_w, out_h, out)?)
        }
        None => None,
    };
    Ok((raster, map))
}
