use rand::Rng;

use crate::metrics::{downscale, ImageU8};
use crate::tensor::{Real, Shape, Tensor};
use crate::{Error, Result};

/// Aligned HR/LR image pairs for one scale.
#[derive(Debug, Clone)]
pub struct ScaleSet {
    pub scale: u32,
    pub pairs: Vec<(ImageU8, ImageU8)>,
}

/// HR images prepared for every training scale: each is cropped to a
/// multiple of the scale and its LR counterpart derived by bicubic
/// downscaling.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    sets: Vec<ScaleSet>,
}

impl TrainingSet {
    pub fn new(images: &[ImageU8], scales: &[u32]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let sets = scales
            .iter()
            .map(|&scale| {
                let s = scale as usize;
                let pairs = images
                    .iter()
                    .map(|img| {
                        let hr = img.modcrop(s)?;
                        let lr = downscale(&hr, s)?;
                        Ok((hr, lr))
                    })
                    .collect::<Result<_>>()?;
                Ok(ScaleSet { scale, pairs })
            })
            .collect::<Result<_>>()?;
        Ok(TrainingSet { sets })
    }

    pub fn scale(&self, scale: u32) -> Result<&ScaleSet> {
        self.sets
            .iter()
            .find(|s| s.scale == scale)
            .ok_or_else(|| Error::Data(format!("training set has no x{scale} pairs")))
    }

    pub fn scales(&self) -> impl Iterator<Item = u32> + '_ {
        self.sets.iter().map(|s| s.scale)
    }

    pub fn len(&self) -> usize {
        self.sets.first().map_or(0, |s| s.pairs.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest LR side over all pairs of `scale`.
    pub fn min_lr_side(&self, scale: u32) -> Result<usize> {
        Ok(self
            .scale(scale)?
            .pairs
            .iter()
            .map(|(_, lr)| lr.width().min(lr.height()))
            .min()
            .unwrap_or(0))
    }
}

/// One of the eight symmetries of a square patch: a rotation by
/// `quarter_turns · 90°`, optionally mirrored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Augment {
    pub flip: bool,
    pub quarter_turns: u8,
}

impl Augment {
    pub const ALL: [Augment; 8] = {
        let mut all = [Augment {
            flip: false,
            quarter_turns: 0,
        }; 8];
        let mut i = 0;
        while i < 8 {
            all[i] = Augment {
                flip: i >= 4,
                quarter_turns: (i % 4) as u8,
            };
            i += 1;
        }
        all
    };

    pub fn sample(rng: &mut impl Rng) -> Self {
        Augment {
            flip: rng.gen(),
            quarter_turns: rng.gen_range(0..4),
        }
    }

    /// Index 0..8, flips in the upper half.
    pub fn index(self) -> usize {
        self.flip as usize * 4 + self.quarter_turns as usize
    }

    /// Source coordinate read by output `(y, x)` of an `n x n` patch.
    #[inline]
    pub fn source(self, y: usize, x: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        let (y, x) = match self.quarter_turns {
            0 => (y, x),
            1 => (x, m - y),
            2 => (m - y, m - x),
            _ => (m - x, y),
        };
        if self.flip {
            (y, m - x)
        } else {
            (y, x)
        }
    }
}

/// Where one training example is cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub image: usize,
    /// Top-left LR corner; the HR corner is this times the scale.
    pub lr_y: usize,
    pub lr_x: usize,
    pub augment: Augment,
}

fn write_patch<T: Real>(
    img: &ImageU8,
    y0: usize,
    x0: usize,
    n: usize,
    aug: Augment,
    out: &mut [T],
) {
    let plane = n * n;
    let k = T::from_f64(255.0);
    for y in 0..n {
        for x in 0..n {
            let (sy, sx) = aug.source(y, x, n);
            let p = img.get(x0 + sx, y0 + sy);
            for c in 0..3 {
                out[c * plane + y * n + x] = T::from_f64(p[c] as f64) / k;
            }
        }
    }
}

/// Draws `batch_size` random `patch x patch` LR crops with their aligned
/// HR crops. Both members of a pair get the same augmentation.
pub fn sample_batch<T: Real>(
    set: &TrainingSet,
    scale: u32,
    patch: usize,
    batch_size: usize,
    augment: bool,
    rng: &mut impl Rng,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let pairs = &set.scale(scale)?.pairs;
    if pairs.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let specs = (0..batch_size)
        .map(|_| {
            let image = rng.gen_range(0..pairs.len());
            let lr = &pairs[image].1;
            if lr.width() < patch || lr.height() < patch {
                return Err(Error::Data(format!(
                    "image {image} ({}x{} at x{scale}) is smaller than the {patch}x{patch} patch",
                    lr.width(),
                    lr.height()
                )));
            }
            let lr_y = rng.gen_range(0..=lr.height() - patch);
            let lr_x = rng.gen_range(0..=lr.width() - patch);
            let augment = if augment {
                Augment::sample(rng)
            } else {
                Augment::default()
            };
            Ok(PatchSpec {
                image,
                lr_y,
                lr_x,
                augment,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    cut_batch(set, scale, patch, &specs)
}

/// Materializes the pairs described by `specs`.
pub fn cut_batch<T: Real>(
    set: &TrainingSet,
    scale: u32,
    patch: usize,
    specs: &[PatchSpec],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let pairs = &set.scale(scale)?.pairs;
    let s = scale as usize;
    let hp = patch * s;
    let mut lr = Tensor::zeros(Shape::new(specs.len(), 3, patch, patch));
    let mut hr = Tensor::zeros(Shape::new(specs.len(), 3, hp, hp));
    for (i, p) in specs.iter().enumerate() {
        let (hr_img, lr_img) = &pairs[p.image];
        write_patch(
            lr_img,
            p.lr_y,
            p.lr_x,
            patch,
            p.augment,
            &mut lr.data_mut()[i * 3 * patch * patch..(i + 1) * 3 * patch * patch],
        );
        write_patch(
            hr_img,
            p.lr_y * s,
            p.lr_x * s,
            hp,
            p.augment,
            &mut hr.data_mut()[i * 3 * hp * hp..(i + 1) * 3 * hp * hp],
        );
    }
    Ok((lr, hr))
}
