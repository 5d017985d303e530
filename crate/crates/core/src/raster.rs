//! Raster containers and their on-disk formats.
//!
//! Images are unit-range `f32` scalars with a per-pixel validity mask;
//! invalid pixels always hold zero. Line maps are nonnegative scalar
//! rasters whose positive values carry segment lengths.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Magic prefix of the binary float-raster format.
pub const LMAP_MAGIC: [u8; 4] = *b"LMAP";
/// Endianness tag written after the dimensions; 1 means little-endian data.
pub const LMAP_LITTLE_ENDIAN: u32 = 1;

/// H×W raster with 1 (gray) or 3 (RGB) channels and a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, channel-interleaved samples in `[0, 1]`.
    pub data: Vec<f32>,
    pub valid: Vec<bool>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParams(format!("channels {channels} not in {{1, 3}}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParams("raster must be at least 1x1".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            valid: vec![true; width * height],
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut img = Self::new(width, height, channels)?;
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    img.data[(y * width + x) * channels + c] = v;
                }
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = self.index(x, y) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, values: &[f32]) {
        let i = self.index(x, y) * self.channels;
        self.data[i..i + self.channels].copy_from_slice(values);
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.index(x, y)]
    }

    /// Invalidate a pixel; its samples are zeroed to keep the invariant.
    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.valid[i] = false;
        for c in 0..self.channels {
            self.data[i * self.channels + c] = 0.0;
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Grayscale view; RGB collapses through the usual luma weights.
    pub fn to_gray(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = ImageBuffer::new(self.width, self.height, 1).expect("same dims");
        for i in 0..self.width * self.height {
            let p = &self.data[i * 3..i * 3 + 3];
            out.data[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
            out.valid[i] = self.valid[i];
            if !out.valid[i] {
                out.data[i] = 0.0;
            }
        }
        out
    }

    /// Bilinear sample at a continuous position (pixel centers at integers).
    ///
    /// Returns `false` (and writes zeros) when the position falls outside
    /// the raster or any of the four participating pixels is invalid.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f32]) -> bool {
        match bilinear_cell(x, y, self.width, self.height) {
            None => {
                out[..self.channels].fill(0.0);
                false
            }
            Some((x0, y0, fx, fy)) => {
                let x1 = (x0 + 1).min(self.width - 1);
                let y1 = (y0 + 1).min(self.height - 1);
                let ok = self.valid[self.index(x0, y0)]
                    && self.valid[self.index(x1, y0)]
                    && self.valid[self.index(x0, y1)]
                    && self.valid[self.index(x1, y1)];
                if !ok {
                    out[..self.channels].fill(0.0);
                    return false;
                }
                let w00 = ((1.0 - fx) * (1.0 - fy)) as f32;
                let w10 = (fx * (1.0 - fy)) as f32;
                let w01 = ((1.0 - fx) * fy) as f32;
                let w11 = (fx * fy) as f32;
                for c in 0..self.channels {
                    out[c] = w00 * self.pixel(x0, y0)[c]
                        + w10 * self.pixel(x1, y0)[c]
                        + w01 * self.pixel(x0, y1)[c]
                        + w11 * self.pixel(x1, y1)[c];
                }
                true
            }
        }
    }

    /// Bilinear resize (all-valid output where every sample footprint was valid).
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<ImageBuffer> {
        let mut out = ImageBuffer::new(width, height, self.channels)?;
        let sx = if width > 1 {
            (self.width - 1) as f64 / (width - 1) as f64
        } else {
            0.0
        };
        let sy = if height > 1 {
            (self.height - 1) as f64 / (height - 1) as f64
        } else {
            0.0
        };
        let mut px = vec![0.0f32; self.channels];
        for y in 0..height {
            for x in 0..width {
                if self.sample_bilinear(x as f64 * sx, y as f64 * sy, &mut px) {
                    out.set_pixel(x, y, &px);
                } else {
                    out.invalidate(x, y);
                }
            }
        }
        Ok(out)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
        let path = path.as_ref();
        let dynimg = image::open(path).map_err(|source| Error::ImageCodec {
            path: path.into(),
            source,
        })?;
        let img = match dynimg {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = (g.width() as usize, g.height() as usize);
                let mut out = ImageBuffer::new(w, h, 1)?;
                for (i, p) in g.pixels().enumerate() {
                    out.data[i] = p.0[0] as f32 / 255.0;
                }
                out
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                let mut out = ImageBuffer::new(w, h, 3)?;
                for (i, p) in rgb.pixels().enumerate() {
                    out.data[i * 3] = p.0[0] as f32 / 255.0;
                    out.data[i * 3 + 1] = p.0[1] as f32 / 255.0;
                    out.data[i * 3 + 2] = p.0[2] as f32 / 255.0;
                }
                out
            }
        };
        Ok(img)
    }

    /// Write as 8-bit PNG (RGB or gray). Invalid pixels are already black.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let err = |source| Error::ImageCodec {
            path: path.into(),
            source,
        };
        if self.channels == 3 {
            let mut buf = image::RgbImage::new(self.width as u32, self.height as u32);
            for y in 0..self.height {
                for x in 0..self.width {
                    let p = self.pixel(x, y);
                    buf.put_pixel(x as u32, y as u32, image::Rgb([to_u8(p[0]), to_u8(p[1]), to_u8(p[2])]));
                }
            }
            buf.save(path).map_err(err)
        } else {
            let mut buf = image::GrayImage::new(self.width as u32, self.height as u32);
            for y in 0..self.height {
                for x in 0..self.width {
                    buf.put_pixel(x as u32, y as u32, image::Luma([to_u8(self.pixel(x, y)[0])]));
                }
            }
            buf.save(path).map_err(err)
        }
    }

    /// Write the validity mask as a black/white PNG.
    pub fn save_mask_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = image::GrayImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = if self.is_valid(x, y) { 255 } else { 0 };
                buf.put_pixel(x as u32, y as u32, image::Luma([v]));
            }
        }
        buf.save(path).map_err(|source| Error::ImageCodec {
            path: path.into(),
            source,
        })
    }
}

/// Cell and fractional offsets for bilinear interpolation, or `None`
/// outside `[0, W-1] x [0, H-1]`.
pub(crate) fn bilinear_cell(x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize, f64, f64)> {
    if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
        return None;
    }
    let x0 = if width == 1 { 0 } else { (x.floor() as usize).min(width - 2) };
    let y0 = if height == 1 { 0 } else { (y.floor() as usize).min(height - 2) };
    Some((x0, y0, x - x0 as f64, y - y0 as f64))
}

/// Scalar raster holding the line-map target: zero off-line, the source
/// segment length on covered pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LineMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl LineMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Raise a pixel to `value` if that exceeds its current entry.
    #[inline]
    pub fn set_max(&mut self, x: usize, y: usize, value: f32) {
        let i = y * self.width + x;
        if value > self.data[i] {
            self.data[i] = value;
        }
    }

    pub fn positive_count(&self) -> usize {
        self.data.iter().filter(|v| **v > 0.0).count()
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    /// Write the 16-byte header (magic, H, W, endianness) plus row-major
    /// little-endian `f32` samples.
    pub fn write_lmap(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = lmap_header(self.height as u32, self.width as u32);
        bytes.reserve(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_lmap(path: impl AsRef<Path>) -> Result<LineMap> {
        let path = path.as_ref();
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let (h, w) = parse_lmap_header(&bytes).map_err(|detail| Error::Malformed {
            path: path.into(),
            detail,
        })?;
        let n = w as usize * h as usize;
        let payload = &bytes[16..];
        if payload.len() != n * 4 {
            return Err(Error::Malformed {
                path: path.into(),
                detail: format!("expected {} payload bytes, got {}", n * 4, payload.len()),
            });
        }
        let mut map = LineMap::new(w as usize, h as usize);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            map.data[i] = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        }
        Ok(map)
    }
}

pub(crate) fn lmap_header(height: u32, width: u32) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(16);
    bytes.extend_from_slice(&LMAP_MAGIC);
    bytes.extend_from_slice(&height.to_le_bytes());
    bytes.extend_from_slice(&width.to_le_bytes());
    bytes.extend_from_slice(&LMAP_LITTLE_ENDIAN.to_le_bytes());
    bytes
}

pub(crate) fn parse_lmap_header(bytes: &[u8]) -> std::result::Result<(u32, u32), String> {
    if bytes.len() < 16 {
        return Err("shorter than the 16-byte header".into());
    }
    if bytes[0..4] != LMAP_MAGIC {
        return Err("bad magic, expected LMAP".into());
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let endian = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    if endian != LMAP_LITTLE_ENDIAN {
        return Err(format!("unsupported endianness tag {endian}"));
    }
    Ok((h, w))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Deterministic smooth RGB test pattern: a low-frequency sinusoid mixture.
///
/// Band-limited on purpose so that resampling round trips stay faithful;
/// used by the test suites and handy for CLI demos.
pub fn test_pattern_rgb(width: usize, height: usize, seed: u64) -> ImageBuffer {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut coefs = [[0.0f64; 5]; 3];
    for ch in coefs.iter_mut() {
        for c in ch.iter_mut() {
            *c = rng.random_range(-1.0..1.0);
        }
    }
    let (w, h) = (width as f64, height as f64);
    ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        let (xf, yf) = (x as f64 / w, y as f64 / h);
        let k = &coefs[c];
        let v = 0.5
            + 0.22 * (2.0 * std::f64::consts::PI * (2.0 * xf + 3.0 * k[0] * yf) + k[1]).sin()
            + 0.18 * (2.0 * std::f64::consts::PI * (3.0 * k[2] * xf - 2.0 * yf) + k[3]).sin()
            + 0.05 * (2.0 * std::f64::consts::PI * 4.0 * k[4] * (xf + yf)).sin();
        v.clamp(0.02, 0.98) as f32
    })
    .expect("static dimensions")
}
