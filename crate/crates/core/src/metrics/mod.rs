//! Image quality metrics, the bicubic degradation model and the benchmark
//! evaluation loop.

mod eval;
mod image;
mod quality;
mod resize;

pub use eval::{evaluate, score, Bicubic, EvalReport, EvalRow, Upscaler};
pub use image::ImageU8;
pub use quality::{psnr, ssim, SsimWindow, SSIM_K1, SSIM_K2};
pub use resize::{bicubic_resize, cubic, downscale, resize_weights};
