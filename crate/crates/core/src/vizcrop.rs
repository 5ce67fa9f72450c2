//! Feature visualizations: crop (and optionally mask) a reference image to
//! the region its input attribution marks as relevant.
//!
//! Pipeline: input heatmap, Gaussian smoothing with kernel size `K`,
//! normalization to a maximum of one, thresholding at `T`, cropping to the
//! tight bounding box of the above-threshold pixels, and, when masking,
//! darkening the below-threshold pixels inside the box.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::{input_heatmap, Method};
use crate::error::{Error, Result};
use crate::netcore::{forward, Network, NeuronTarget};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignMode {
    /// Normalize `|h|`, so negative evidence also marks a region.
    #[default]
    Absolute,
    /// Normalize `max(h, 0)`.
    PositivePart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropParams {
    /// Gaussian kernel size in pixels, odd.
    pub kernel: usize,
    /// Pixels with normalized relevance strictly above this are kept.
    pub threshold: f64,
    pub mask: bool,
    /// Opacity of the black overlay on masked pixels.
    pub mask_alpha: f64,
    pub sign: SignMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Inputs for embedding-based evaluation: small kernel, no mask.
    Eval,
    /// Figures: wide kernel with a mask.
    Plot,
}

impl Preset {
    pub fn params(self) -> CropParams {
        match self {
            Preset::Eval => CropParams {
                kernel: 5,
                threshold: 0.01,
                mask: false,
                mask_alpha: 0.4,
                sign: SignMode::Absolute,
            },
            Preset::Plot => CropParams {
                kernel: 51,
                threshold: 0.01,
                mask: true,
                mask_alpha: 0.4,
                sign: SignMode::Absolute,
            },
        }
    }
}

impl CropParams {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("kernel size must be odd and >= 1, got {}", self.kernel)));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!("threshold must be in (0, 1], got {}", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.mask_alpha) {
            return Err(Error::InvalidArgument(format!("mask alpha must be in [0, 1], got {}", self.mask_alpha)));
        }
        Ok(())
    }
}

/// Tight bounding box (inclusive) of the above-threshold pixels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CropRegion {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
    /// `[H, W]` row-major above-threshold mask.
    #[serde(skip)]
    pub mask: Vec<bool>,
    #[serde(skip)]
    pub width: usize,
}

impl CropRegion {
    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn box_width(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn contains_box(&self, other: &CropRegion) -> bool {
        self.row_min <= other.row_min
            && self.row_max >= other.row_max
            && self.col_min <= other.col_min
            && self.col_max >= other.col_max
    }
}

/// `sigma = 0.3 ((K - 1) / 2 - 1) + 0.8`.
pub fn gaussian_sigma(kernel: usize) -> f64 {
    0.3 * ((kernel as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian taps of length `kernel`.
pub fn gaussian_kernel(kernel: usize) -> Vec<f64> {
    if kernel == 1 {
        return vec![1.0];
    }
    let sigma = gaussian_sigma(kernel);
    let r = (kernel / 2) as f64;
    let taps: Vec<f64> = (0..kernel)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter().map(|t| t / total).collect()
}

/// Mirror index without repeating the edge sample; valid for `|overhang| < n`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
    j as usize
}

fn require_map(h: &Tensor) -> Result<(usize, usize)> {
    if h.ndim() != 2 {
        return Err(Error::InvalidArgument(format!("heatmap must be [H, W], got {:?}", h.shape())));
    }
    Ok((h.shape()[0], h.shape()[1]))
}

/// Separable Gaussian blur with reflect padding. `K = 1` is the identity.
pub fn gaussian_smooth(heatmap: &Tensor, kernel: usize) -> Result<Tensor> {
    let (h, w) = require_map(heatmap)?;
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("kernel size must be odd, got {kernel}")));
    }
    let max_k = 2 * h.min(w) - 1;
    if kernel > max_k {
        return Err(Error::InvalidArgument(format!(
            "kernel size {kernel} exceeds {max_k} for a {h}x{w} map"
        )));
    }
    if kernel == 1 {
        return Ok(heatmap.clone());
    }
    let taps = gaussian_kernel(kernel);
    let r = (kernel / 2) as isize;
    let src = heatmap.data();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(t, k)| k * src[y * w + reflect(x as isize + t as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(t, k)| k * tmp[reflect(y as isize + t as isize - r, h) * w + x])
                .sum();
        }
    }
    Tensor::new(vec![h, w], out)
}

/// Rescales `|h|` (or `max(h, 0)`) so its maximum is exactly one.
pub fn normalize_max(heatmap: &Tensor, sign: SignMode) -> Result<Tensor> {
    let mapped = match sign {
        SignMode::Absolute => heatmap.map(f64::abs),
        SignMode::PositivePart => heatmap.map(|v| v.max(0.0)),
    };
    let max = mapped.data().iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::DegenerateHeatmap("no positive relevance to normalize".into()));
    }
    Ok(mapped.map(|v| v / max))
}

pub fn threshold_region(heatmap: &Tensor, threshold: f64) -> Result<CropRegion> {
    let (h, w) = require_map(heatmap)?;
    let max = heatmap.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if (max - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("heatmap must be normalized to max 1, max is {max}")));
    }
    let mask: Vec<bool> = heatmap.data().iter().map(|&v| v > threshold).collect();
    let mut region: Option<(usize, usize, usize, usize)> = None;
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                region = Some(match region {
                    None => (y, y, x, x),
                    Some((r0, r1, c0, c1)) => (r0.min(y), r1.max(y), c0.min(x), c1.max(x)),
                });
            }
        }
    }
    let (row_min, row_max, col_min, col_max) =
        region.ok_or_else(|| Error::DegenerateHeatmap(format!("no pixel above threshold {threshold}")))?;
    Ok(CropRegion {
        row_min,
        row_max,
        col_min,
        col_max,
        mask,
        width: w,
    })
}

/// Crops `[C, H, W]` or `[H, W]` images to `region`; with masking, pixels
/// outside the mask become `(1 - alpha) p`.
pub fn crop_to_region(image: &Tensor, region: &CropRegion, params: &CropParams) -> Result<Tensor> {
    let (c, h, w) = match image.shape() {
        [h, w] => (1, *h, *w),
        [c, h, w] => (*c, *h, *w),
        other => return Err(Error::InvalidArgument(format!("image must be [C, H, W] or [H, W], got {other:?}"))),
    };
    if w != region.width || region.mask.len() != h * w {
        return Err(Error::ShapeMismatch {
            context: "image vs heatmap".into(),
            expected: vec![region.mask.len() / region.width.max(1), region.width],
            found: vec![h, w],
        });
    }
    let (rh, rw) = (region.height(), region.box_width());
    let keep = 1.0 - params.mask_alpha;
    let mut out = Vec::with_capacity(c * rh * rw);
    for ch in 0..c {
        for y in region.row_min..=region.row_max {
            for x in region.col_min..=region.col_max {
                let p = image.data()[(ch * h + y) * w + x];
                out.push(if params.mask && !region.mask[y * w + x] { keep * p } else { p });
            }
        }
    }
    let shape = if image.ndim() == 2 { vec![rh, rw] } else { vec![c, rh, rw] };
    Tensor::new(shape, out)
}

/// Normalizes and thresholds an (already smoothed) heatmap, then crops.
pub fn crop_and_mask(image: &Tensor, heatmap: &Tensor, params: &CropParams) -> Result<(Tensor, CropRegion)> {
    params.validate()?;
    let normalized = normalize_max(heatmap, params.sign)?;
    let region = threshold_region(&normalized, params.threshold)?;
    Ok((crop_to_region(image, &region, params)?, region))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Visualization {
    pub crop: Tensor,
    pub region: CropRegion,
    /// Parameters actually used; the kernel is capped at `2 min(H, W) - 1`.
    pub params: CropParams,
    pub heatmap: Tensor,
}

/// Full pipeline for one image and neuron.
pub fn feature_visualization(
    net: &Network,
    image: &Tensor,
    target: &NeuronTarget,
    params: &CropParams,
    method: Method,
) -> Result<Visualization> {
    params.validate()?;
    let trace = forward(net, image)?;
    let heatmap = input_heatmap(net, &trace, target, method)?;
    let (h, w) = require_map(&heatmap).map_err(|_| {
        Error::InvalidArgument(format!("feature visualization needs an image input, got {:?}", image.shape()))
    })?;
    let mut used = *params;
    used.kernel = used.kernel.min(2 * h.min(w) - 1);
    let smoothed = gaussian_smooth(&heatmap, used.kernel)?;
    let (crop, region) = crop_and_mask(image, &smoothed, &used)?;
    Ok(Visualization {
        crop,
        region,
        params: used,
        heatmap,
    })
}

/// 8-bit PNG export: values clamped to `[0, 1]` and scaled by 255 per
/// channel. One channel writes grayscale, three write RGB.
pub fn save_png(image: &Tensor, path: &Path) -> Result<()> {
    let (c, h, w) = match image.shape() {
        [h, w] => (1, *h, *w),
        [c, h, w] => (*c, *h, *w),
        other => return Err(Error::Image(format!("cannot export shape {other:?}"))),
    };
    let px = |ch: usize, y: usize, x: usize| (image.data()[(ch * h + y) * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
    let result = match c {
        1 => image::GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([px(0, y as usize, x as usize)])).save(path),
        3 => image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            image::Rgb([px(0, y, x), px(1, y, x), px(2, y, x)])
        })
        .save(path),
        _ => return Err(Error::Image(format!("PNG export needs 1 or 3 channels, got {c}"))),
    };
    result.map_err(|e| Error::Image(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
        Tensor::new(vec![h, w], (0..h * w).map(|i| f(i / w, i % w)).collect()).unwrap()
    }

    #[test]
    fn presets() {
        let e = Preset::Eval.params();
        assert_eq!((e.kernel, e.threshold, e.mask), (5, 0.01, false));
        let p = Preset::Plot.params();
        assert_eq!((p.kernel, p.threshold, p.mask, p.mask_alpha), (51, 0.01, true, 0.4));
    }

    #[test]
    fn sigma_formula() {
        assert!((gaussian_sigma(5) - 1.1).abs() < 1e-12);
        assert!((gaussian_sigma(3) - 0.8).abs() < 1e-12);
        assert!((gaussian_kernel(7).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_and_dc() {
        let m = map(4, 5, |y, x| (y * 5 + x) as f64);
        assert_eq!(gaussian_smooth(&m, 1).unwrap(), m);
        let c = map(6, 6, |_, _| 2.5);
        let s = gaussian_smooth(&c, 5).unwrap();
        assert!(s.data().iter().all(|v| (v - 2.5).abs() < 1e-12));
        assert!(gaussian_smooth(&c, 4).is_err());
        assert!(gaussian_smooth(&c, 13).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_max(&map(2, 2, |y, x| [[0.0, 2.0], [4.0, 0.0]][y][x]), SignMode::Absolute).unwrap();
        assert_eq!(n.data(), &[0.0, 0.5, 1.0, 0.0]);
        let n = normalize_max(&map(1, 2, |_, x| [-4.0, 2.0][x]), SignMode::Absolute).unwrap();
        assert_eq!(n.data(), &[1.0, 0.5]);
        assert!(matches!(
            normalize_max(&map(2, 2, |_, _| 0.0), SignMode::Absolute),
            Err(Error::DegenerateHeatmap(_))
        ));
        assert!(normalize_max(&map(1, 2, |_, _| -1.0), SignMode::PositivePart).is_err());
    }

    #[test]
    fn threshold_boxes() {
        let hot = map(9, 9, |y, x| if (y, x) == (5, 5) { 1.0 } else { 0.0 });
        let r = threshold_region(&hot, 0.01).unwrap();
        assert_eq!((r.row_min, r.row_max, r.col_min, r.col_max), (5, 5, 5, 5));
        let ones = map(3, 4, |_, _| 1.0);
        let r = threshold_region(&ones, 0.5).unwrap();
        assert_eq!((r.row_min, r.row_max, r.col_min, r.col_max), (0, 2, 0, 3));
        assert!(threshold_region(&ones, 1.0).is_err());
    }

    #[test]
    fn crop_identity_and_single_pixel() {
        let img = Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64 / 12.0).collect()).unwrap();
        let params = CropParams { mask: false, ..Preset::Eval.params() };
        let (full, _) = crop_and_mask(&img, &map(2, 3, |_, _| 1.0), &params).unwrap();
        assert_eq!(full, img);
        let (one, _) = crop_and_mask(&img, &map(2, 3, |y, x| if (y, x) == (1, 2) { 3.0 } else { 0.0 }), &params).unwrap();
        assert_eq!(one.shape(), &[2, 1, 1]);
        assert_eq!(one.data(), &[5.0 / 12.0, 11.0 / 12.0]);
    }

    #[test]
    fn masked_pixels_darkened() {
        // Left column hot, right column cold except one corner pixel that
        // stretches the box over both columns.
        let heat = map(2, 2, |y, x| if x == 0 || (y, x) == (1, 1) { 1.0 } else { 0.0 });
        let img = map(2, 2, |y, x| 0.2 + 0.1 * (y * 2 + x) as f64);
        let (out, _) = crop_and_mask(&img, &heat, &Preset::Plot.params()).unwrap();
        assert_eq!(out.data()[0], img.data()[0]);
        assert_eq!(out.data()[1], 0.6 * img.data()[1]);
        assert_eq!(out.data()[3], img.data()[3]);
    }
}
