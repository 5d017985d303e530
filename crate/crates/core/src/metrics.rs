//! Evaluation metrics: PSNR and SSIM over masked rasters, and tolerant
//! precision/recall between line maps.

use crate::error::{Error, Result};
use crate::raster::{ImageBuffer, LineMap};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio in dB for unit dynamic range, over the joint
/// valid mask of both images. Identical pixels give `+inf`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(Error::SizeMismatch {
            expected: format!("{}x{}x{}", a.width, a.height, a.channels),
            actual: format!("{}x{}x{}", b.width, b.height, b.channels),
        });
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in 0..a.width * a.height {
        if a.valid[i] && b.valid[i] {
            for c in 0..a.channels {
                let d = a.data[i * a.channels + c] as f64 - b.data[i * b.channels + c] as f64;
                sum += d * d;
            }
            count += a.channels;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for j in 0..SSIM_WINDOW {
        for i in 0..SSIM_WINDOW {
            let dx = i as f64 - half;
            let dy = j as f64 - half;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[j * SSIM_WINDOW + i] = v;
            sum += v;
        }
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mean local structural similarity with an 11x11 Gaussian window (σ = 1.5)
/// at unit dynamic range. RGB collapses to luma first; only windows fully
/// inside the raster and fully valid in both images contribute.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::SizeMismatch {
            expected: format!("{}x{}", a.width, a.height),
            actual: format!("{}x{}", b.width, b.height),
        });
    }
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::InvalidParams(format!(
            "image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )));
    }
    let ga = a.to_gray();
    let gb = b.to_gray();
    let weights = gaussian_window();
    let half = SSIM_WINDOW / 2;
    let (w, h) = (a.width, a.height);
    let mut sum = 0.0f64;
    let mut windows = 0usize;
    for cy in half..h - half {
        'window: for cx in half..w - half {
            let mut mu_a = 0.0f64;
            let mut mu_b = 0.0f64;
            let mut aa = 0.0f64;
            let mut bb = 0.0f64;
            let mut ab = 0.0f64;
            for j in 0..SSIM_WINDOW {
                let y = cy + j - half;
                let row = y * w;
                for i in 0..SSIM_WINDOW {
                    let x = cx + i - half;
                    let idx = row + x;
                    if !ga.valid[idx] || !gb.valid[idx] {
                        continue 'window;
                    }
                    let wt = weights[j * SSIM_WINDOW + i];
                    let va = ga.data[idx] as f64;
                    let vb = gb.data[idx] as f64;
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    aa += wt * va * va;
                    bb += wt * vb * vb;
                    ab += wt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let score = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
            sum += score;
            windows += 1;
        }
    }
    if windows == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / windows as f64)
}

/// Tolerant precision/recall between binarized line maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRResult {
    pub precision: f64,
    pub recall: f64,
    pub f_value: f64,
    pub matched_pred: usize,
    pub total_pred: usize,
    pub matched_truth: usize,
    pub total_truth: usize,
}

impl PRResult {
    /// The zero-convention was used because one of the sets was empty.
    pub fn degenerate(&self) -> bool {
        self.total_pred == 0 || self.total_truth == 0
    }
}

/// Chebyshev dilation by `radius` (separable max filter).
fn dilate_chebyshev(src: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return src.to_vec();
    }
    let mut horiz = vec![false; src.len()];
    for y in 0..height {
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            horiz[y * width + x] = (lo..=hi).any(|i| src[y * width + i]);
        }
    }
    let mut out = vec![false; src.len()];
    for y in 0..height {
        for x in 0..width {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(height - 1);
            out[y * width + x] = (lo..=hi).any(|j| horiz[j * width + x]);
        }
    }
    out
}

/// Precision = matched predicted pixels / predicted pixels, recall the
/// mirror image; a pixel matches when the other map holds a positive pixel
/// within `tolerance_px` in Chebyshev distance. Empty sets score zero.
pub fn line_map_pr(pred: &LineMap, truth: &LineMap, tolerance_px: u32) -> Result<PRResult> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(Error::SizeMismatch {
            expected: format!("{}x{}", truth.width, truth.height),
            actual: format!("{}x{}", pred.width, pred.height),
        });
    }
    let p_set: Vec<bool> = pred.data.iter().map(|v| *v > 0.0).collect();
    let g_set: Vec<bool> = truth.data.iter().map(|v| *v > 0.0).collect();
    let g_near = dilate_chebyshev(&g_set, truth.width, truth.height, tolerance_px as usize);
    let p_near = dilate_chebyshev(&p_set, pred.width, pred.height, tolerance_px as usize);

    let total_pred = p_set.iter().filter(|v| **v).count();
    let total_truth = g_set.iter().filter(|v| **v).count();
    let matched_pred = p_set.iter().zip(&g_near).filter(|(p, g)| **p && **g).count();
    let matched_truth = g_set.iter().zip(&p_near).filter(|(g, p)| **g && **p).count();

    let precision = if total_pred > 0 {
        matched_pred as f64 / total_pred as f64
    } else {
        0.0
    };
    let recall = if total_truth > 0 {
        matched_truth as f64 / total_truth as f64
    } else {
        0.0
    };
    let f_value = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(PRResult {
        precision,
        recall,
        f_value,
        matched_pred,
        total_pred,
        matched_truth,
        total_truth,
    })
}
