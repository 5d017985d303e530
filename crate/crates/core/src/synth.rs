//! Synthetic fisheye dataset generation: distorting perspective images and
//! straight-segment annotations with sampled parameters, and rendering the
//! length-valued line-map targets.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{FisheyeParams, VirtualPinhole, DEFAULT_THETA_MAX};
use crate::error::{Error, Result};
use crate::raster::{ImageBuffer, LineMap};

/// Straight segment in rectified-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl LineSegment {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Result<Self> {
        if a == b {
            return Err(Error::Degenerate("segment endpoints coincide".into()));
        }
        Ok(Self { a, b })
    }

    pub fn length(&self) -> f64 {
        (self.b.0 - self.a.0).hypot(self.b.1 - self.a.1)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a.0, self.a.1, self.b.0, self.b.1]
    }
}

/// Ordered fisheye-pixel samples of one distorted segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    /// The straight source segment this curve is the image of.
    pub source: LineSegment,
    /// Arc length of the sampled curve in fisheye pixels.
    pub arc_length: f64,
}

/// One generated record: fisheye image, its parameters, and both line maps.
#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub fisheye_image: ImageBuffer,
    pub params: FisheyeParams,
    pub segments: Vec<LineSegment>,
    pub distorted_polylines: Vec<Polyline>,
    /// Straight segments rasterized in the rectified frame.
    pub line_map_rectified: LineMap,
    /// Distorted curves rasterized in the fisheye frame.
    pub line_map_distorted: LineMap,
    pub seed: u64,
}

/// Ranges for the parameter sampler and the output geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub out_width: usize,
    pub out_height: usize,
    /// Parameter sets drawn per source image.
    pub variants: usize,
    /// Pinhole focal (pixels) of the perspective source frame.
    pub source_focal: f64,
    /// Uniform range for the shared pixel density m_u = m_v.
    pub m_range: (f64, f64),
    /// Principal-point jitter as a fraction of the image center.
    pub center_jitter: f64,
    /// k1 is drawn as `factor * source_focal / m` with this factor range,
    /// so the fisheye center scale lands near the source scale.
    pub k1_factor_range: (f64, f64),
    /// k2..k5 are drawn in `±span * k1 * theta_max^{-(2i-2)}`, bounding each
    /// higher term at `span` times the k1 term at theta_max.
    pub higher_order_span: f64,
    pub theta_max: f64,
    /// Required image-circle radius as a fraction of the output half-diagonal.
    pub min_circle_coverage: f64,
    pub max_rejects: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            out_width: 320,
            out_height: 320,
            variants: 4,
            source_focal: 160.0,
            m_range: (80.0, 140.0),
            center_jitter: 0.05,
            k1_factor_range: (0.8, 1.2),
            higher_order_span: 0.15,
            theta_max: DEFAULT_THETA_MAX,
            min_circle_coverage: 0.6,
            max_rejects: 1000,
        }
    }
}

impl SamplerConfig {
    pub fn out_size(&self) -> (usize, usize) {
        (self.out_width, self.out_height)
    }

    /// Pinhole describing the perspective source frame of this config.
    pub fn source_pinhole(&self) -> VirtualPinhole {
        VirtualPinhole {
            f: self.source_focal,
            width: self.out_width,
            height: self.out_height,
        }
    }
}

/// Stateless per-sample seed stream (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw one admissible parameter set: uniform in the configured ranges,
/// rejection-resampled until the profile is monotone and the image circle
/// covers the required fraction of the output half-diagonal.
pub fn sample_params(seed: u64, config: &SamplerConfig) -> Result<FisheyeParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_diag = (config.out_width as f64 / 2.0).hypot(config.out_height as f64 / 2.0);
    for _ in 0..config.max_rejects {
        let m = rng.random_range(config.m_range.0..=config.m_range.1);
        let jitter = config.center_jitter;
        let u0 = config.out_width as f64 / 2.0 * (1.0 + rng.random_range(-jitter..=jitter));
        let v0 = config.out_height as f64 / 2.0 * (1.0 + rng.random_range(-jitter..=jitter));
        let k1 = rng.random_range(config.k1_factor_range.0..=config.k1_factor_range.1)
            * config.source_focal
            / m;
        let span = config.higher_order_span;
        let mut k = [k1, 0.0, 0.0, 0.0, 0.0];
        for (i, slot) in k.iter_mut().enumerate().skip(1) {
            let scale = k1 * config.theta_max.powi(-(2 * i as i32));
            *slot = scale * rng.random_range(-span..=span);
        }
        let params = FisheyeParams {
            k,
            mu: m,
            mv: m,
            u0,
            v0,
            theta_max: config.theta_max,
        };
        if !params.check_monotonic(config.theta_max) {
            continue;
        }
        if m * params.max_radius() < config.min_circle_coverage * half_diag {
            continue;
        }
        return Ok(params);
    }
    Err(Error::SamplerExhausted(config.max_rejects))
}

/// Synthesize a fisheye view of a perspective source image.
///
/// Every output pixel is traced through the inverse fisheye model to its
/// perspective location (`r_p = f·tanθ`) and bilinearly sampled; pixels
/// that leave the source raster or the radial domain are invalidated.
pub fn distort_image(
    src: &ImageBuffer,
    params: &FisheyeParams,
    pinhole: &VirtualPinhole,
    out_size: (usize, usize),
) -> Result<ImageBuffer> {
    if !params.is_monotonic() {
        return Err(Error::NonMonotonicProfile);
    }
    let (out_w, out_h) = out_size;
    let (cx, cy) = pinhole.center();
    let mut out = ImageBuffer::new(out_w, out_h, src.channels)?;
    let mut px = vec![0.0f32; src.channels];
    for v in 0..out_h {
        for u in 0..out_w {
            let ray = match params.unproject_pixel(u as f64, v as f64) {
                Ok(ray) => ray,
                Err(_) => {
                    out.invalidate(u, v);
                    continue;
                }
            };
            let r_p = pinhole.f * ray.theta.tan();
            let sx = cx + r_p * ray.phi.cos();
            let sy = cy + r_p * ray.phi.sin();
            if src.sample_bilinear(sx, sy, &mut px) {
                out.set_pixel(u, v, &px);
            } else {
                out.invalidate(u, v);
            }
        }
    }
    Ok(out)
}

/// Distort straight segments into sampled fisheye polylines.
///
/// Each segment is sampled at one point per pixel of source arc length and
/// mapped through the forward model; the longest in-frame run survives as
/// the polyline. Returns the polylines and how many segments were fully
/// clipped away.
pub fn distort_segments(
    segments: &[LineSegment],
    params: &FisheyeParams,
    pinhole: &VirtualPinhole,
    out_size: (usize, usize),
) -> Result<(Vec<Polyline>, usize)> {
    if !params.is_monotonic() {
        return Err(Error::NonMonotonicProfile);
    }
    let (out_w, out_h) = out_size;
    let (max_u, max_v) = ((out_w - 1) as f64, (out_h - 1) as f64);
    let mut polylines = Vec::with_capacity(segments.len());
    let mut dropped = 0usize;
    for seg in segments {
        let mut n = (seg.length().ceil() as usize + 1).max(2);
        let mut accepted = None;
        for _round in 0..6 {
            let mapped: Vec<Option<(f64, f64)>> = (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    let x = seg.a.0 + t * (seg.b.0 - seg.a.0);
                    let y = seg.a.1 + t * (seg.b.1 - seg.a.1);
                    match params.forward_map(x, y, pinhole) {
                        Ok((u, v)) if u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v => {
                            Some((u, v))
                        }
                        _ => None,
                    }
                })
                .collect();
            let run = longest_some_run(&mapped);
            if run.len() < 2 {
                break;
            }
            let max_gap = run
                .windows(2)
                .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
                .fold(0.0f64, f64::max);
            if max_gap <= 2.0 {
                accepted = Some(run);
                break;
            }
            n *= 2;
            accepted = Some(run);
        }
        match accepted {
            Some(points) => {
                let arc_length = points
                    .windows(2)
                    .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
                    .sum();
                polylines.push(Polyline {
                    points,
                    source: *seg,
                    arc_length,
                });
            }
            None => dropped += 1,
        }
    }
    Ok((polylines, dropped))
}

fn longest_some_run(samples: &[Option<(f64, f64)>]) -> Vec<(f64, f64)> {
    let mut best: &[Option<(f64, f64)>] = &[];
    let mut start = 0usize;
    let mut i = 0usize;
    while i <= samples.len() {
        let open = i < samples.len() && samples[i].is_some();
        if !open {
            if i - start > best.len() {
                best = &samples[start..i];
            }
            start = i + 1;
        }
        i += 1;
    }
    best.iter().map(|p| p.expect("run is all Some")).collect()
}

/// Distance from a point to a segment (clamped orthogonal projection).
pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    (p.0 - (a.0 + t * dx)).hypot(p.1 - (a.1 + t * dy))
}

/// Pixels whose center lies within half a pixel of the chain take `value`;
/// overlaps keep the maximum.
fn stamp_chain(map: &mut LineMap, points: &[(f64, f64)], value: f32) {
    let (w, h) = (map.width as isize, map.height as isize);
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let x_lo = ((a.0.min(b.0) - 1.5).floor() as isize).max(0);
        let x_hi = ((a.0.max(b.0) + 1.5).ceil() as isize).min(w - 1);
        let y_lo = ((a.1.min(b.1) - 1.5).floor() as isize).max(0);
        let y_hi = ((a.1.max(b.1) + 1.5).ceil() as isize).min(h - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if point_segment_distance((x as f64, y as f64), a, b) < 0.5 {
                    map.set_max(x as usize, y as usize, value);
                }
            }
        }
    }
    if points.len() == 1 {
        let p = points[0];
        let x_lo = ((p.0 - 1.5).floor() as isize).max(0);
        let x_hi = ((p.0 + 1.5).ceil() as isize).min(w - 1);
        let y_lo = ((p.1 - 1.5).floor() as isize).max(0);
        let y_hi = ((p.1 + 1.5).ceil() as isize).min(h - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if (x as f64 - p.0).hypot(y as f64 - p.1) < 0.5 {
                    map.set_max(x as usize, y as usize, value);
                }
            }
        }
    }
}

/// Rasterize straight segments; covered pixels take the segment's length.
pub fn render_segment_map(segments: &[LineSegment], size: (usize, usize)) -> LineMap {
    let mut map = LineMap::new(size.0, size.1);
    for seg in segments {
        stamp_chain(&mut map, &[seg.a, seg.b], seg.length() as f32);
    }
    map
}

/// Rasterize distorted polylines; covered pixels take the length of the
/// straight source segment.
pub fn render_polyline_map(polylines: &[Polyline], size: (usize, usize)) -> LineMap {
    let mut map = LineMap::new(size.0, size.1);
    for line in polylines {
        stamp_chain(&mut map, &line.points, line.source.length() as f32);
    }
    map
}

/// Build one dataset sample from an already-sized source image.
pub fn generate_sample(
    src: &ImageBuffer,
    segments: &[LineSegment],
    params: FisheyeParams,
    pinhole: &VirtualPinhole,
    out_size: (usize, usize),
    seed: u64,
) -> Result<DatasetSample> {
    let fisheye_image = distort_image(src, &params, pinhole, out_size)?;
    let (distorted_polylines, _clipped) = distort_segments(segments, &params, pinhole, out_size)?;
    let line_map_distorted = render_polyline_map(&distorted_polylines, out_size);
    let line_map_rectified = render_segment_map(segments, (pinhole.width, pinhole.height));
    Ok(DatasetSample {
        fisheye_image,
        params,
        segments: segments.to_vec(),
        distorted_polylines,
        line_map_rectified,
        line_map_distorted,
        seed,
    })
}

/// Uniform random scene segments with a minimum length, for synthetic
/// calibration scenes and tests.
pub fn random_segments(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    count: usize,
    min_length: f64,
) -> Vec<LineSegment> {
    let (w, h) = ((width - 1) as f64, (height - 1) as f64);
    let mut out = Vec::with_capacity(count);
    let mut guard = 0usize;
    while out.len() < count && guard < count * 1000 {
        guard += 1;
        let a = (rng.random_range(0.0..=w), rng.random_range(0.0..=h));
        let b = (rng.random_range(0.0..=w), rng.random_range(0.0..=h));
        if (a.0 - b.0).hypot(a.1 - b.1) < min_length {
            continue;
        }
        out.push(LineSegment { a, b });
    }
    out
}

/// Input annotation: a source image name and its straight segments as
/// `[x1, y1, x2, y2]` rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub filename: String,
    pub lines: Vec<[f64; 4]>,
}

/// Read an annotation file holding either one record or an array of them.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let records = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    Ok(records)
}

/// On-disk sample record. Paths are relative to the dataset root.
#[derive(Debug, Clone, Deserialize)]
pub struct SampleRecord {
    pub image: String,
    pub params: FisheyeParams,
    pub segments: Vec<[f64; 4]>,
    pub polylines: Vec<Vec<[f64; 2]>>,
    pub seed: u64,
}

impl SampleRecord {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let record: SampleRecord = serde_json::from_str(&text)?;
        record.params.validate()?;
        Ok(record)
    }

    pub fn polylines_as_points(&self) -> Vec<Vec<(f64, f64)>> {
        self.polylines
            .iter()
            .map(|line| line.iter().map(|p| (p[0], p[1])).collect())
            .collect()
    }

    pub fn segments_typed(&self) -> Result<Vec<LineSegment>> {
        self.segments
            .iter()
            .map(|s| LineSegment::new((s[0], s[1]), (s[2], s[3])))
            .collect()
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    image: &'a str,
    params: &'a serde_json::value::RawValue,
    segments: Vec<[f64; 4]>,
    polylines: Vec<Vec<[f64; 2]>>,
    seed: u64,
}

/// Generation settings echoed into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub sampler: SamplerConfig,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GenConfig,
    /// Record paths relative to the manifest directory.
    pub samples: Vec<String>,
    pub split: String,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Generate the whole dataset: for every annotated source image, draw
/// `variants` parameter sets and write the fisheye PNG, the JSON record,
/// and both line maps. Returns the manifest path.
///
/// Re-running with identical inputs, config, and seed reproduces every
/// byte (records and manifest) and every pixel (PNGs).
pub fn build_dataset(
    images_dir: impl AsRef<Path>,
    annotations_path: impl AsRef<Path>,
    config: &SamplerConfig,
    master_seed: u64,
    split: &str,
    out_dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    let images_dir = images_dir.as_ref();
    let out_dir = out_dir.as_ref();
    let annotations = load_annotations(annotations_path.as_ref())?;
    for sub in ["images", "samples", "linemaps"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let out_size = config.out_size();
    let pinhole = config.source_pinhole();
    let mut sample_paths = Vec::new();
    let mut index = 0u64;
    for annotation in &annotations {
        let src_path = images_dir.join(&annotation.filename);
        let src_raw = ImageBuffer::load_png(&src_path)?;
        let (src, segments) = prepare_source(&src_raw, &annotation.lines, out_size)?;
        let stem = Path::new(&annotation.filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| annotation.filename.clone());
        for variant in 0..config.variants {
            let seed = derive_seed(master_seed, index);
            index += 1;
            let params = sample_params(seed, config)?;
            let sample = generate_sample(&src, &segments, params, &pinhole, out_size, seed)?;

            let image_rel = format!("images/{stem}_v{variant}.png");
            let record_rel = format!("samples/{stem}_v{variant}.json");
            sample.fisheye_image.save_png(out_dir.join(&image_rel))?;
            sample
                .line_map_distorted
                .write_lmap(out_dir.join(format!("linemaps/{stem}_v{variant}_distorted.lmap")))?;
            sample
                .line_map_rectified
                .write_lmap(out_dir.join(format!("linemaps/{stem}_v{variant}_rectified.lmap")))?;

            let params_raw = serde_json::value::RawValue::from_string(params.to_json_string())?;
            let record = RecordOut {
                image: &image_rel,
                params: &params_raw,
                segments: sample.segments.iter().map(|s| s.as_array()).collect(),
                polylines: sample
                    .distorted_polylines
                    .iter()
                    .map(|line| line.points.iter().map(|&(u, v)| [u, v]).collect())
                    .collect(),
                seed,
            };
            let record_path = out_dir.join(&record_rel);
            let text = serde_json::to_string_pretty(&record)?;
            fs::write(&record_path, text).map_err(|e| Error::io(&record_path, e))?;
            sample_paths.push(record_rel);
        }
    }

    let manifest = Manifest {
        config: GenConfig {
            sampler: config.clone(),
            master_seed,
        },
        samples: sample_paths,
        split: split.to_string(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Resize a source image to the output size and scale its annotations to
/// match, dropping segments that degenerate.
fn prepare_source(
    src: &ImageBuffer,
    lines: &[[f64; 4]],
    out_size: (usize, usize),
) -> Result<(ImageBuffer, Vec<LineSegment>)> {
    let (out_w, out_h) = out_size;
    let sx = if src.width > 1 {
        (out_w - 1) as f64 / (src.width - 1) as f64
    } else {
        1.0
    };
    let sy = if src.height > 1 {
        (out_h - 1) as f64 / (src.height - 1) as f64
    } else {
        1.0
    };
    let resized = if (src.width, src.height) == (out_w, out_h) {
        src.clone()
    } else {
        src.resize_bilinear(out_w, out_h)?
    };
    let clamp = |x: f64, hi: f64| x.clamp(0.0, hi);
    let segments = lines
        .iter()
        .filter_map(|l| {
            let a = (clamp(l[0] * sx, (out_w - 1) as f64), clamp(l[1] * sy, (out_h - 1) as f64));
            let b = (clamp(l[2] * sx, (out_w - 1) as f64), clamp(l[3] * sy, (out_h - 1) as f64));
            LineSegment::new(a, b).ok()
        })
        .collect();
    Ok((resized, segments))
}
