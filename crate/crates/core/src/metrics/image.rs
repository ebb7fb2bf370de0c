use crate::tensor::{Real, Shape, Tensor};
use crate::{Error, Result};

/// 8-bit RGB image, row-major, channels interleaved.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageU8 {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ImageU8 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageU8({}x{})", self.width, self.height)
    }
}

impl ImageU8 {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Data(format!(
                "expected {} bytes for a {width}x{height} RGB image, found {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(ImageU8 {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        ImageU8 {
            width,
            height,
            pixels,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        ImageU8 {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Channel `c` as `f64` values in `[0, 255]`.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels
            .iter()
            .skip(c)
            .step_by(3)
            .map(|&v| v as f64)
            .collect()
    }

    /// BT.601 luma in `[16, 235]`.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| {
                16.0 + (65.481 * p[0] as f64 + 128.553 * p[1] as f64 + 24.966 * p[2] as f64) / 255.0
            })
            .collect()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Data(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(ImageU8::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Largest top-left crop whose sides are multiples of `scale`.
    pub fn modcrop(&self, scale: usize) -> Result<Self> {
        let w = self.width - self.width % scale;
        let h = self.height - self.height % scale;
        self.crop(0, 0, w, h)
    }

    /// `(1, 3, H, W)` tensor of `value / 255`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let scale = T::from_f64(255.0);
        Tensor::from_fn(Shape::new(1, 3, self.height, self.width), |[_, c, y, x]| {
            T::from_f64(self.pixels[(y * self.width + x) * 3 + c] as f64) / scale
        })
    }

    /// Image `n` of an NCHW RGB tensor, clipped to `[0, 1]` and rounded.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, n: usize) -> Result<Self> {
        let s = t.shape();
        if s.c != 3 || n >= s.n {
            return Err(Error::shape("from_tensor", "channels", 3, s.c));
        }
        Ok(ImageU8::from_fn(s.w, s.h, |x, y| {
            let q = |c| {
                let v = t.at(n, c, y, x).as_f64().clamp(0.0, 1.0);
                (v * 255.0).round() as u8
            };
            [q(0), q(1), q(2)]
        }))
    }
}
