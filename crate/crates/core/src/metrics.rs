//! Non-neural evaluation metrics on pseudo ground truth.
//!
//! Pseudo ground truth for an intermediate frame is composed from the two
//! anchor frames warped into it; metrics are evaluated only where at least
//! one anchor observes the pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{warp_image, FlowField, OcclusionMask};
use crate::grid::{Image, Plane};
use crate::par;

/// Value reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelSource {
    FromV0,
    FromVn,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoGt {
    pub frame: Image,
    pub known: Plane<bool>,
    pub source: Plane<PixelSource>,
}

/// Composites `v0` and `vN` warped into frame `i`, preferring `v0`.
///
/// `flow_to_v0` is `f_{i -> 0}` with the occlusion mask of `i` relative to
/// view 0, likewise for `vN`.
pub fn composite_pseudo_gt(
    v0: &Image,
    vn: &Image,
    flow_to_v0: (&FlowField, &OcclusionMask),
    flow_to_vn: (&FlowField, &OcclusionMask),
) -> Result<PseudoGt> {
    if !v0.same_dims(vn) {
        return Err(Error::Shape("anchor frames differ in shape".into()));
    }
    let (a, ma) = warp_image(v0, flow_to_v0.0, flow_to_v0.1)?;
    let (b, mb) = warp_image(vn, flow_to_vn.0, flow_to_vn.1)?;
    compose(&a, &ma.map(|h| !h), &b, &mb.map(|h| !h))
}

/// Composites two already warped images given their validity masks.
pub fn compose(a: &Image, mask_a: &Plane<bool>, b: &Image, mask_b: &Plane<bool>) -> Result<PseudoGt> {
    if !a.same_dims(b) || mask_a.width != a.width || mask_a.height != a.height || !mask_a.same_dims(mask_b) {
        return Err(Error::Shape("pseudo-GT inputs differ in resolution".into()));
    }
    let c = a.channels;
    let mut frame = Image::zeros(a.width, a.height, c);
    let mut source = Vec::with_capacity(a.width * a.height);
    for i in 0..a.width * a.height {
        let (src, from) = if mask_a.data[i] {
            (PixelSource::FromV0, Some(a))
        } else if mask_b.data[i] {
            (PixelSource::FromVn, Some(b))
        } else {
            (PixelSource::Unknown, None)
        };
        if let Some(img) = from {
            frame.data[i * c..(i + 1) * c].copy_from_slice(&img.data[i * c..(i + 1) * c]);
        }
        source.push(src);
    }
    let source = Plane::from_vec(a.width, a.height, source)?;
    Ok(PseudoGt {
        frame,
        known: source.map(|s| *s != PixelSource::Unknown),
        source,
    })
}

fn check_pair(a: &Image, b: &Image, mask: &Plane<bool>) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    if mask.width != a.width || mask.height != a.height {
        return Err(Error::Shape("mask does not match images".into()));
    }
    Ok(())
}

/// PSNR over masked pixels, all channels; identical inputs give the cap.
pub fn masked_psnr(a: &Image, b: &Image, mask: &Plane<bool>, peak: f64) -> Result<f64> {
    check_pair(a, b, mask)?;
    let n = mask.count();
    if n == 0 {
        return Err(Error::Empty("PSNR mask selects no pixels".into()));
    }
    let c = a.channels;
    let sse: f64 = mask
        .data
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| {
            a.data[i * c..(i + 1) * c]
                .iter()
                .zip(&b.data[i * c..(i + 1) * c])
                .map(|(x, y)| {
                    let d = *x as f64 - *y as f64;
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    let mse = sse / (n * c) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// SSIM of one window from weighted moments.
pub fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, peak: f64) -> f64 {
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM over 11x11 Gaussian windows lying entirely inside the image
/// and the mask, averaged over channels. Peak is 1.
pub fn masked_ssim(a: &Image, b: &Image, mask: &Plane<bool>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let (w, h, c) = (a.width, a.height, a.channels);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Empty("image smaller than the SSIM window".into()));
    }
    // Windows fully inside the mask, via a summed-area table of misses.
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] = (!mask.data[y * w + x]) as u32
                + sat[y * (w + 1) + x + 1]
                + sat[(y + 1) * (w + 1) + x]
                - sat[y * (w + 1) + x];
        }
    }
    let k = SSIM_WINDOW;
    let misses = |x: usize, y: usize| {
        sat[(y + k) * (w + 1) + x + k] + sat[y * (w + 1) + x] - sat[y * (w + 1) + x + k] - sat[(y + k) * (w + 1) + x]
    };
    let g = gaussian_window();
    let rows = par::map_range(h - k + 1, |y| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for x in 0..w - k + 1 {
            if misses(x, y) != 0 {
                continue;
            }
            for ch in 0..c {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..k {
                    for dx in 0..k {
                        let wt = g[dx] * g[dy];
                        let i = ((y + dy) * w + x + dx) * c + ch;
                        let (va, vb) = (a.data[i] as f64, b.data[i] as f64);
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let var_a = saa - ma * ma;
                let var_b = sbb - mb * mb;
                sum += ssim_from_moments(ma, mb, var_a, var_b, sab - ma * mb, 1.0);
                count += 1;
            }
        }
        (sum, count)
    });
    let (sum, count) = rows.into_iter().fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b));
    if count == 0 {
        return Err(Error::Empty("no SSIM window lies inside the mask".into()));
    }
    Ok(sum / count as f64)
}

pub const EQUALIZATION_BINS: usize = 256;

/// Histogram equalization over valid pixels into `bins` levels in [0, 1].
///
/// Each value maps through the empirical CDF `F` (fraction of valid values
/// `<=` it): `round((bins - 1) (F - F_min) / (1 - F_min)) / (bins - 1)`.
/// Equal values share a level; a constant map sends everything to 1.
/// Invalid pixels are 0.
pub fn hist_equalize_bins(depth: &Plane<f32>, valid: &Plane<bool>, bins: usize) -> Result<Plane<f32>> {
    if !depth.same_dims(valid) {
        return Err(Error::Shape("depth and mask differ in resolution".into()));
    }
    if bins < 2 {
        return Err(Error::Config("equalization needs at least two bins".into()));
    }
    let mut values: Vec<f64> = depth
        .data
        .iter()
        .zip(&valid.data)
        .filter(|(_, &v)| v)
        .map(|(&d, _)| d as f64)
        .collect();
    if values.is_empty() {
        return Err(Error::Empty("no valid depth pixels".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite depth among valid pixels".into()));
    }
    par::sort_f64(&mut values);
    let n = values.len() as f64;
    let cdf = |v: f64| values.partition_point(|&x| x <= v) as f64 / n;
    let f_min = cdf(values[0]);
    let levels = (bins - 1) as f64;
    let data = depth
        .data
        .iter()
        .zip(&valid.data)
        .map(|(&d, &ok)| {
            if !ok {
                return 0.0;
            }
            if f_min >= 1.0 {
                return 1.0;
            }
            ((levels * (cdf(d as f64) - f_min) / (1.0 - f_min)).round() / levels) as f32
        })
        .collect();
    Plane::from_vec(depth.width, depth.height, data)
}

pub fn hist_equalize(depth: &Plane<f32>, valid: &Plane<bool>) -> Result<Plane<f32>> {
    hist_equalize_bins(depth, valid, EQUALIZATION_BINS)
}

/// PSNR between equalized ground-truth and estimated depth.
pub fn psnr_d(gt: &Plane<f32>, est: &Plane<f32>, valid: &Plane<bool>) -> Result<f64> {
    let a = Image::from_plane(&hist_equalize(gt, valid)?);
    let b = Image::from_plane(&hist_equalize(est, valid)?);
    masked_psnr(&a, &b, valid, 1.0)
}

/// Slot for learned perceptual metrics; none ship with this crate.
pub trait PerceptualMetric {
    fn name(&self) -> &str;
    fn distance(&self, a: &Image, b: &Image, mask: &Plane<bool>) -> Result<f64>;
}

/// Metrics of one frame against its pseudo ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub known_fraction: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

pub fn frame_metrics(index: usize, output: &Image, gt: &PseudoGt) -> Result<FrameMetrics> {
    let known = gt.known.count();
    let psnr = if known > 0 {
        Some(masked_psnr(output, &gt.frame, &gt.known, 1.0)?)
    } else {
        None
    };
    let ssim = match masked_ssim(output, &gt.frame, &gt.known) {
        Ok(v) => Some(v),
        Err(Error::Empty(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FrameMetrics {
        frame: index,
        known_fraction: known as f64 / gt.known.data.len().max(1) as f64,
        psnr,
        ssim,
    })
}
