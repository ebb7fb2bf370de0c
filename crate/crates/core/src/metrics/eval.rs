use std::fmt::Write as _;

use rayon::prelude::*;

use super::image::ImageU8;
use super::quality::{psnr, ssim, SsimWindow};
use super::resize::{bicubic_resize, downscale};
use crate::{Error, Result};

/// Anything that maps an LR image to an image `scale` times larger.
pub trait Upscaler: Sync {
    fn upscale(&self, lr: &ImageU8, scale: u32) -> Result<ImageU8>;
}

/// Bicubic interpolation; the classic reference point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bicubic;

impl Upscaler for Bicubic {
    fn upscale(&self, lr: &ImageU8, scale: u32) -> Result<ImageU8> {
        let s = scale as usize;
        bicubic_resize(lr, lr.width() * s, lr.height() * s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image: String,
    pub scale: u32,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
}

/// Y-channel PSNR and SSIM of `sr` against `hr`, ignoring a `crop` pixel
/// border.
pub fn score(hr: &ImageU8, sr: &ImageU8, crop: usize) -> Result<(f64, f64)> {
    let p = psnr(hr, sr, crop, true)?;
    let inner =
        |img: &ImageU8| img.crop(crop, crop, img.width() - 2 * crop, img.height() - 2 * crop);
    let s = ssim(&inner(hr)?, &inner(sr)?, SsimWindow::default(), true)?;
    Ok((p, s))
}

/// Benchmark protocol: each HR image is cropped to a multiple of `scale`,
/// degraded with bicubic downscaling, upscaled by `model` and scored on
/// luma with a `scale`-pixel border removed. Rows keep dataset order.
pub fn evaluate<U: Upscaler + ?Sized>(
    model: &U,
    dataset: &[(String, ImageU8)],
    scale: u32,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Data("evaluation dataset is empty".into()));
    }
    let s = scale as usize;
    let rows = dataset
        .par_iter()
        .map(|(name, img)| {
            let hr = img.modcrop(s)?;
            let lr = downscale(&hr, s)?;
            let sr = model.upscale(&lr, scale)?;
            if (sr.width(), sr.height()) != (hr.width(), hr.height()) {
                return Err(Error::Data(format!(
                    "{name}: upscaler returned {}x{}, expected {}x{}",
                    sr.width(),
                    sr.height(),
                    hr.width(),
                    hr.height()
                )));
            }
            let (psnr_db, ssim) = score(&hr, &sr, s)?;
            Ok(EvalRow {
                image: name.clone(),
                scale,
                psnr_db,
                ssim,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let mean_psnr_db = rows.iter().map(|r| r.psnr_db).sum::<f64>() / n;
    let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;
    Ok(EvalReport {
        rows,
        mean_psnr_db,
        mean_ssim,
    })
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "image,scale,psnr_db,ssim";

    /// Per-image rows followed by a `mean` row; `prefix` is prepended to
    /// image names.
    pub fn csv_rows(&self, prefix: &str) -> String {
        let mut out = String::new();
        let scale = self.rows.first().map_or(0, |r| r.scale);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{prefix}{},{},{:.6},{:.6}",
                r.image, r.scale, r.psnr_db, r.ssim
            );
        }
        let _ = writeln!(
            out,
            "{prefix}mean,{scale},{:.6},{:.6}",
            self.mean_psnr_db, self.mean_ssim
        );
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows(""))
    }
}
