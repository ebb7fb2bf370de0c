use super::image::ImageU8;
use crate::{Error, Result};

const A: f64 = -0.5;
const SUPPORT: f64 = 2.0;

/// Keys cubic convolution kernel.
pub fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Normalized taps `(source index, weight)` for every output sample of a
/// 1-D resize from `in_len` to `out_len`. When shrinking, the kernel is
/// widened by the inverse scale. Out-of-range sources clamp to the edge.
pub fn resize_weights(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = out_len as f64 / in_len as f64;
    let stretch = if scale < 1.0 { scale } else { 1.0 };
    let support = SUPPORT / stretch;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).ceil() as i64;
            let hi = (center + support).floor() as i64;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|j| {
                    let w = stretch * cubic((j as f64 - center) * stretch);
                    (w != 0.0).then(|| (j.clamp(0, in_len as i64 - 1) as usize, w))
                })
                .collect();
            let sum: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= sum;
            }
            taps
        })
        .collect()
}

/// Separable bicubic resize, horizontal pass first, rounded and clipped.
pub fn bicubic_resize(img: &ImageU8, out_w: usize, out_h: usize) -> Result<ImageU8> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Data(format!(
            "resize target {out_w}x{out_h} must be positive"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let wx = resize_weights(w, out_w);
    let wy = resize_weights(h, out_h);
    let src = img.pixels();

    let mut rows = vec![0.0f64; out_w * h * 3];
    for y in 0..h {
        for (x, taps) in wx.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for &(j, wt) in taps {
                let p = &src[(y * w + j) * 3..(y * w + j) * 3 + 3];
                for c in 0..3 {
                    acc[c] += wt * p[c] as f64;
                }
            }
            rows[(y * out_w + x) * 3..(y * out_w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }

    let mut out = Vec::with_capacity(out_w * out_h * 3);
    for taps in &wy {
        for x in 0..out_w {
            let mut acc = [0.0f64; 3];
            for &(j, wt) in taps {
                for c in 0..3 {
                    acc[c] += wt * rows[(j * out_w + x) * 3 + c];
                }
            }
            out.extend(acc.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    ImageU8::new(out_w, out_h, out)
}

/// Bicubic LR input for an HR image whose sides are multiples of `scale`.
pub fn downscale(hr: &ImageU8, scale: usize) -> Result<ImageU8> {
    if !hr.width().is_multiple_of(scale) || !hr.height().is_multiple_of(scale) {
        return Err(Error::Data(format!(
            "{}x{} image is not divisible by scale {scale}",
            hr.width(),
            hr.height()
        )));
    }
    bicubic_resize(hr, hr.width() / scale, hr.height() / scale)
}
