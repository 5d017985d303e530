//! Rectification: mapping fisheye rasters and point sets back to a
//! virtual pinhole view with bilinear resampling.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::camera::{FisheyeParams, VirtualPinhole};
use crate::error::{Error, Result};
use crate::raster::{bilinear_cell, lmap_header, parse_lmap_header, write_file, ImageBuffer, LineMap};

/// Precomputed source coordinates for every rectified pixel.
///
/// `grid[y*width + x]` holds where in the fisheye raster the rectified
/// pixel `(x, y)` reads from; entries beyond the radial domain or outside
/// the source raster are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapGrid {
    pub width: usize,
    pub height: usize,
    pub src_width: usize,
    pub src_height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Forward-map every rectified pixel center into the fisheye raster.
pub fn build_remap(
    params: &FisheyeParams,
    pinhole: &VirtualPinhole,
    src_size: (usize, usize),
) -> Result<RemapGrid> {
    if !params.is_monotonic() {
        return Err(Error::NonMonotonicProfile);
    }
    let (width, height) = (pinhole.width, pinhole.height);
    let (src_width, src_height) = src_size;
    let mut grid = RemapGrid {
        width,
        height,
        src_width,
        src_height,
        u: vec![0.0; width * height],
        v: vec![0.0; width * height],
        valid: vec![false; width * height],
    };
    let (max_u, max_v) = ((src_width - 1) as f64, (src_height - 1) as f64);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if let Ok((u, v)) = params.forward_map(x as f64, y as f64, pinhole) {
                grid.u[i] = u;
                grid.v[i] = v;
                grid.valid[i] = u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v;
            }
        }
    }
    Ok(grid)
}

/// Resample an image through a remap grid.
///
/// A rectified pixel is valid only when its grid entry is valid and all
/// four bilinear neighbors in the source are valid.
pub fn rectify_image(img: &ImageBuffer, grid: &RemapGrid) -> Result<ImageBuffer> {
    if (img.width, img.height) != (grid.src_width, grid.src_height) {
        return Err(Error::SizeMismatch {
            expected: format!("{}x{}", grid.src_width, grid.src_height),
            actual: format!("{}x{}", img.width, img.height),
        });
    }
    let mut out = ImageBuffer::new(grid.width, grid.height, img.channels)?;
    let mut px = vec![0.0f32; img.channels];
    for y in 0..grid.height {
        for x in 0..grid.width {
            let i = y * grid.width + x;
            if grid.valid[i] && img.sample_bilinear(grid.u[i], grid.v[i], &mut px) {
                out.set_pixel(x, y, &px);
            } else {
                out.invalidate(x, y);
            }
        }
    }
    Ok(out)
}

/// Exact inverse of the forward map for a single fisheye pixel.
pub fn rectify_point(
    u: f64,
    v: f64,
    params: &FisheyeParams,
    pinhole: &VirtualPinhole,
) -> Result<(f64, f64)> {
    let ray = params.unproject_pixel(u, v)?;
    let r_p = pinhole.f * ray.theta.tan();
    let (cx, cy) = pinhole.center();
    Ok((cx + r_p * ray.phi.cos(), cy + r_p * ray.phi.sin()))
}

/// Rectify a point set; failures are reported per point.
pub fn rectify_points(
    points: &[(f64, f64)],
    params: &FisheyeParams,
    pinhole: &VirtualPinhole,
) -> Vec<Result<(f64, f64)>> {
    points
        .iter()
        .map(|&(u, v)| rectify_point(u, v, params, pinhole))
        .collect()
}

/// Rectify a line map; pixels without a valid source read become zero.
pub fn rectify_line_map(
    map: &LineMap,
    params: &FisheyeParams,
    pinhole: &VirtualPinhole,
) -> Result<LineMap> {
    let grid = build_remap(params, pinhole, (map.width, map.height))?;
    Ok(remap_line_map(map, &grid))
}

/// Resample a line map through a prebuilt grid (no source validity mask;
/// out-of-domain pixels read as zero).
pub fn remap_line_map(map: &LineMap, grid: &RemapGrid) -> LineMap {
    let mut out = LineMap::new(grid.width, grid.height);
    for y in 0..grid.height {
        for x in 0..grid.width {
            let i = y * grid.width + x;
            if !grid.valid[i] {
                continue;
            }
            if let Some((x0, y0, fx, fy)) = bilinear_cell(grid.u[i], grid.v[i], map.width, map.height) {
                let x1 = (x0 + 1).min(map.width - 1);
                let y1 = (y0 + 1).min(map.height - 1);
                let value = (1.0 - fx) * (1.0 - fy) * map.at(x0, y0) as f64
                    + fx * (1.0 - fy) * map.at(x1, y0) as f64
                    + (1.0 - fx) * fy * map.at(x0, y1) as f64
                    + fx * fy * map.at(x1, y1) as f64;
                out.data[i] = value as f32;
            }
        }
    }
    out
}

impl RemapGrid {
    /// Write as an LMAP-headed file: `f32` u-plane, `f32` v-plane, then a
    /// row-major validity bitplane (LSB first).
    pub fn write_lmap(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let n = self.width * self.height;
        let mut bytes = lmap_header(self.height as u32, self.width as u32);
        bytes.reserve(n * 8 + n.div_ceil(8));
        for plane in [&self.u, &self.v] {
            for value in plane.iter() {
                bytes.extend_from_slice(&(*value as f32).to_le_bytes());
            }
        }
        let mut bits = vec![0u8; n.div_ceil(8)];
        for (i, ok) in self.valid.iter().enumerate() {
            if *ok {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        bytes.extend_from_slice(&bits);
        write_file(path, &bytes)
    }

    /// Read a grid written by [`write_lmap`](Self::write_lmap). The format
    /// does not carry the source raster size, so it is supplied here.
    pub fn read_lmap(path: impl AsRef<Path>, src_size: (usize, usize)) -> Result<RemapGrid> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let malformed = |detail: String| Error::Malformed {
            path: path.into(),
            detail,
        };
        let (h, w) = parse_lmap_header(&bytes).map_err(malformed)?;
        let n = w as usize * h as usize;
        let need = 16 + n * 8 + n.div_ceil(8);
        if bytes.len() != need {
            return Err(malformed(format!("expected {} bytes, got {}", need, bytes.len())));
        }
        let mut grid = RemapGrid {
            width: w as usize,
            height: h as usize,
            src_width: src_size.0,
            src_height: src_size.1,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![false; n],
        };
        let read_f32 = |at: usize| {
            f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as f64
        };
        for i in 0..n {
            grid.u[i] = read_f32(16 + i * 4);
            grid.v[i] = read_f32(16 + (n + i) * 4);
        }
        let tail = 16 + n * 8;
        for i in 0..n {
            grid.valid[i] = bytes[tail + i / 8] & (1 << (i % 8)) != 0;
        }
        Ok(grid)
    }
}
