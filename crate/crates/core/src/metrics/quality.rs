use super::image::ImageU8;
use crate::{Error, Result};

const PEAK: f64 = 255.0;

fn same_dims(a: &ImageU8, b: &ImageU8) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Data(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Planes compared by the metrics: luma only, or R, G and B.
fn planes(img: &ImageU8, y_only: bool) -> Vec<Vec<f64>> {
    if y_only {
        vec![img.luma()]
    } else {
        (0..3).map(|c| img.channel(c)).collect()
    }
}

/// Peak signal-to-noise ratio in dB over the image with `border_crop`
/// pixels removed from every side. Identical regions give `f64::INFINITY`.
pub fn psnr(a: &ImageU8, b: &ImageU8, border_crop: usize, y_only: bool) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if 2 * border_crop >= w.min(h) {
        return Err(Error::Data(format!(
            "border crop {border_crop} leaves nothing of a {w}x{h} image"
        )));
    }
    let (pa, pb) = (planes(a, y_only), planes(b, y_only));
    let mut sse = 0.0;
    let mut count = 0usize;
    for (x, y) in pa.iter().zip(&pb) {
        for row in border_crop..h - border_crop {
            for col in border_crop..w - border_crop {
                let d = x[row * w + col] - y[row * w + col];
                sse += d * d;
                count += 1;
            }
        }
    }
    let mse = sse / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

/// Gaussian SSIM window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimWindow {
    pub size: usize,
    pub sigma: f64,
}

impl Default for SsimWindow {
    fn default() -> Self {
        SsimWindow {
            size: 11,
            sigma: 1.5,
        }
    }
}

impl SsimWindow {
    /// Normalized 1-D taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.size as f64 - 1.0) / 2.0;
        let g: Vec<f64> = (0..self.size)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = g.iter().sum();
        g.into_iter().map(|v| v / sum).collect()
    }
}

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Separable "valid" filtering of a `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, taps: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(a, w, h, taps);
    let mu_b = filter_valid(b, w, h, taps);
    let aa = filter_valid(&prod(a, a), w, h, taps);
    let bb = filter_valid(&prod(b, b), w, h, taps);
    let ab = filter_valid(&prod(a, b), w, h, taps);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean structural similarity over all window positions fully inside the
/// image. RGB mode averages the three channel scores.
pub fn ssim(a: &ImageU8, b: &ImageU8, window: SsimWindow, y_only: bool) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if window.size == 0 || w < window.size || h < window.size {
        return Err(Error::Data(format!(
            "{w}x{h} image is smaller than the {0}x{0} SSIM window",
            window.size
        )));
    }
    let taps = window.taps();
    let (pa, pb) = (planes(a, y_only), planes(b, y_only));
    let scores: Vec<f64> = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| ssim_plane(x, y, w, h, &taps))
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
