//! Deterministic inputs shared by the benchmarks.

use srkit::{ImageU8, Shape, Tensor};

/// Smooth pseudo-random values in `[-1, 1]`, cheap and reproducible.
pub fn tensor(shape: Shape, phase: f32) -> Tensor<f32> {
    let mut i = 0u32;
    Tensor::from_fn(shape, |_| {
        i += 1;
        (i as f32 * 0.618_034 + phase).sin()
    })
}

pub fn image(width: usize, height: usize) -> ImageU8 {
    ImageU8::from_fn(width, height, |x, y| {
        [
            ((x * 7 + y * 3) % 256) as u8,
            ((x * y) % 256) as u8,
            ((x ^ y) % 256) as u8,
        ]
    })
}
